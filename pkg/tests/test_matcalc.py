import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from manifoldconc.errors import DimensionError
from manifoldconc.matcalc import (commutation_matrix, commutation_perm, commutator, hs_norm,
                                  inner, kron, mat, op_norm, sym_product, vec)

dims = st.integers(1, 5)
# two-decimal grid keeps squares clear of underflow
finite = st.integers(-1000, 1000).map(lambda k: k / 100)


def test_vec_column_stacking():
    assert vec(np.array([[1, 2], [3, 4]])).tolist() == [1, 3, 2, 4]
    assert vec(np.array([[1.0], [2.0], [3.0]])).tolist() == [1.0, 2.0, 3.0]


def test_mat_inverts_vec(rng):
    A = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(mat(vec(A), 3, 2), A)
    np.testing.assert_array_equal(mat([1, 3, 2, 4], 2, 2), [[1, 2], [3, 4]])
    assert mat(np.arange(3.0), 3, 1).shape == (3, 1)
    v = rng.standard_normal(12)
    np.testing.assert_array_equal(vec(mat(v, 4, 3)), v)


def test_mat_dimension_mismatch():
    with pytest.raises(DimensionError):
        mat(np.arange(5.0), 2, 3)


@given(dims, dims, st.data())
def test_vec_mat_roundtrip(n, m, data):
    A = data.draw(arrays(float, (n, m), elements=finite))
    np.testing.assert_array_equal(mat(vec(A), n, m), A)


def test_commutation_small_cases():
    np.testing.assert_array_equal(commutation_matrix(1, 4), np.eye(4))
    # enumerated from vec(E_ij) -> vec(E_ij^T) over the four basis matrices
    K22 = [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
    np.testing.assert_array_equal(commutation_matrix(2, 2), K22)


def test_commutation_defining_property_exact(rng):
    for n in range(1, 6):
        for m in range(1, 6):
            K = commutation_matrix(n, m)
            perm = commutation_perm(n, m)
            assert np.all(K.sum(0) == 1) and np.all(K.sum(1) == 1)
            np.testing.assert_array_equal(K.T, commutation_matrix(m, n))
            for _ in range(100):
                A = rng.standard_normal((n, m))
                # exact: a permutation moves entries without arithmetic
                assert np.array_equal(K @ vec(A), vec(A.T))
                assert np.array_equal(vec(A)[perm], vec(A.T))


def _rel(a, b):
    return np.abs(a - b).max() / max(1.0, np.abs(b).max())


def test_kronecker_identities(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(1, 6):
        for m in range(1, 6):
            for _ in range(100):
                p, q = rng.integers(1, 4, size=2)
                A = rng.standard_normal((n, m))
                A2 = rng.standard_normal((n, m))
                B = rng.standard_normal((p, q))
                C = rng.standard_normal((q, 2))
                D = rng.standard_normal((m, 3))
                a = rng.standard_normal()
                # (1) bilinearity and associativity
                worst = max(worst, _rel(kron(a * A + A2, B), a * kron(A, B) + kron(A2, B)),
                            _rel(kron(kron(A, B), C), kron(A, kron(B, C))))
                # (2) transpose
                worst = max(worst, _rel(kron(A, B).T, kron(A.T, B.T)))
                # (3) inverse of invertible factors
                S = rng.standard_normal((n, n)) + 3 * n * np.eye(n)
                R = rng.standard_normal((p, p)) + 3 * p * np.eye(p)
                worst = max(worst, _rel(np.linalg.inv(kron(S, R)),
                                        kron(np.linalg.inv(S), np.linalg.inv(R))))
                # (4) mixed product
                worst = max(worst, _rel(kron(A, B) @ kron(D, C), kron(A @ D, B @ C)))
                # (5) vec(AX) and vec(XB)
                X = rng.standard_normal((m, p))
                worst = max(worst, _rel(vec(A @ X), kron(np.eye(p), A) @ vec(X)),
                            _rel(vec(X @ B), kron(B.T, np.eye(m)) @ vec(X)))
                # (6) vec(AXB)
                worst = max(worst, _rel(vec(A @ X @ B), kron(B.T, A) @ vec(X)))
                # (7) conjugation by commutation matrices
                worst = max(worst, _rel(commutation_matrix(p, n) @ kron(A, B)
                                        @ commutation_matrix(m, q), kron(B, A)))
    assert worst <= 1e-12
    assert time.perf_counter() - t0 < 10


def test_kron_examples(rng):
    B = rng.standard_normal((2, 3))
    I2B = kron(np.eye(2), B)
    np.testing.assert_array_equal(I2B[:2, :3], B)
    np.testing.assert_array_equal(I2B[2:, 3:], B)
    assert np.all(I2B[:2, 3:] == 0)


def test_kron_rejects_nonfinite():
    with pytest.raises(ValueError):
        kron(np.array([[np.nan]]), np.eye(2))


def test_sym_product():
    A = np.linalg.qr(np.random.default_rng(1).standard_normal((5, 2)))[0]
    np.testing.assert_allclose(sym_product(A, A), np.eye(2), atol=1e-14)
    assert sym_product(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))[0, 0] == 0.0
    x, y = np.array([[1.0], [2.0]]), np.array([[3.0], [-1.0]])
    assert sym_product(x, y)[0, 0] == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        sym_product(np.ones((3, 2)), np.ones((2, 3)))


@given(st.integers(1, 5), st.integers(1, 4), st.data())
def test_sym_product_symmetric(n, d, data):
    M = data.draw(arrays(float, (n, d), elements=finite))
    N = data.draw(arrays(float, (n, d), elements=finite))
    S = sym_product(M, N)
    np.testing.assert_array_equal(S, S.T)


def test_commutator(rng):
    N = rng.standard_normal((4, 4))
    M = rng.standard_normal((4, 4))
    assert np.all(commutator(np.eye(4), N) == 0)
    np.testing.assert_allclose(commutator(M, N), -commutator(N, M))
    assert np.all(commutator(M, M) == 0)
    A = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    P = A @ A.T
    S = M + M.T
    out = commutator(P, commutator(P, S))
    np.testing.assert_allclose(out, out.T, atol=1e-12)
    # direct expansion
    np.testing.assert_allclose(out, P @ S + S @ P - 2 * P @ S @ P, atol=1e-12)
    with pytest.raises(DimensionError):
        commutator(np.ones((2, 3)), np.ones((2, 3)))


def test_hs_norm_and_inner(rng):
    assert hs_norm(np.eye(3)) == pytest.approx(np.sqrt(3))
    assert hs_norm(np.zeros((2, 2, 2))) == 0.0
    T = rng.standard_normal((3, 4, 2))
    assert hs_norm(T) ** 2 == pytest.approx(np.sum(T ** 2))
    A, B = rng.standard_normal((2, 3, 4))
    assert inner(A, B) == pytest.approx(np.trace(A.T @ B))


def test_op_norm_orders_one_and_two(rng):
    assert op_norm(np.diag([3.0, 1.0])).lower == pytest.approx(3.0)
    x, y = rng.standard_normal(4), rng.standard_normal(3)
    r = op_norm(np.outer(x, y))
    assert r.exact and r.lower == pytest.approx(np.linalg.norm(x) * np.linalg.norm(y))
    assert r.lower == pytest.approx(hs_norm(np.outer(x, y)))
    v = rng.standard_normal(5)
    assert op_norm(v).lower == pytest.approx(np.linalg.norm(v))


@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_op_norm_below_hs(n, m, data):
    T = data.draw(arrays(float, (n, m), elements=finite))
    r = op_norm(T)
    assert r.lower <= hs_norm(T) * (1 + 1e-12) + 1e-300


def test_op_norm_strictly_below_hs_for_full_rank():
    assert op_norm(np.eye(3)).lower < hs_norm(np.eye(3)) - 0.5


def _sym3(T):
    import itertools
    return sum(np.transpose(T, p) for p in itertools.permutations(range(3))) / 6


@pytest.mark.parametrize("m,seed,expected", [
    # brute-force sphere search with Nelder-Mead polishing
    (3, 11, 1.4207459491251366),
    (4, 12, 2.296895397869524),
])
def test_op_norm_order_three_matches_grid_search(m, seed, expected):
    T = _sym3(np.random.default_rng(seed).standard_normal((m, m, m)))
    r = op_norm(T)
    assert not r.exact
    assert abs(r.lower - expected) <= 1e-3
    assert r.lower <= r.upper == pytest.approx(hs_norm(T))


def test_op_norm_order_three_rank_one_exact_value(rng):
    x, y, z = rng.standard_normal((3, 4))
    T = np.einsum("a,b,c->abc", x, y, z)
    r = op_norm(T)
    assert r.lower == pytest.approx(np.prod([np.linalg.norm(v) for v in (x, y, z)]), rel=1e-9)
