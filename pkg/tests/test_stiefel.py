import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from manifoldconc import stiefel
from manifoldconc.errors import DimensionError, ManifoldError
from manifoldconc.functionals import LinearForm, PolynomialChaos, QuadraticForm
from manifoldconc.matcalc import hs_norm, mat, sym_product, vec
from manifoldconc.montecarlo import taylor_audit
from manifoldconc.smooth import fd_gradient

shapes = st.integers(1, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n)))


def _quad(n, d, rng):
    G = rng.standard_normal((n * d, n * d))
    return QuadraticForm(G / np.sqrt(n * d), (n, d))


@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_samples_are_points(shape, seed):
    n, d = shape
    A = stiefel.sample_uniform(n, d, np.random.default_rng(seed))
    assert A.shape == (n, d)
    assert stiefel.orthonormality_error(A) <= stiefel.POINT_TOL


def test_sampler_batch_and_errors(rng):
    A = stiefel.sample_uniform(7, 3, rng, size=5)
    assert A.shape == (5, 7, 3)
    with pytest.raises(DimensionError):
        stiefel.sample_uniform(2, 3, rng)


def test_sampler_rotation_invariance(rng):
    # the law of the first entry is invariant; compare first two moments
    # of a fixed linear statistic before and after a fixed rotation
    n, d, N = 6, 2, 20000
    O = np.linalg.qr(rng.standard_normal((n, n)))[0]
    A = stiefel.sample_uniform(n, d, rng, size=N)
    x = A[:, 0, 0]
    y = (O @ A)[:, 0, 0]
    assert abs(x.mean() - y.mean()) < 4 * np.sqrt(2 / (n * N))
    assert abs((x ** 2).mean() - 1 / n) < 0.01 and abs((y ** 2).mean() - 1 / n) < 0.01


def test_check_point(rng):
    A = stiefel.sample_uniform(5, 2, rng)
    assert stiefel.check_point(A) is A
    B = A + 1e-8 * rng.standard_normal(A.shape)
    C = stiefel.check_point(B)
    assert stiefel.orthonormality_error(C) <= 1e-12
    with pytest.raises(ManifoldError):
        stiefel.check_point(A + 1e-3)
    with pytest.raises(DimensionError):
        stiefel.check_point(np.ones((2, 3)))


@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_projection_properties(shape, seed):
    n, d = shape
    rng = np.random.default_rng(seed)
    A = stiefel.sample_uniform(n, d, rng)
    M = rng.standard_normal((n, d))
    V = stiefel.tangent_project(A, M)
    # errors scale with the orthonormality defect of the sample
    tol = 1e-10 * max(1.0, hs_norm(M))
    np.testing.assert_allclose(stiefel.tangent_project(A, V), V, atol=tol)
    assert hs_norm(sym_product(A, V)) <= tol
    np.testing.assert_allclose(stiefel.tangent_project(A, A), 0, atol=tol)
    # the Kronecker form equals the direct form
    Pi = stiefel.projection_matrix(A)
    np.testing.assert_allclose(Pi @ vec(M), vec(V), atol=tol)
    np.testing.assert_allclose(Pi, Pi.T, atol=tol)
    np.testing.assert_allclose(Pi @ Pi, Pi, atol=tol)


def test_projection_matrix_rank(rng):
    n, d = 6, 2
    A = stiefel.sample_uniform(n, d, rng)
    Pi = stiefel.projection_matrix(A)
    assert np.trace(Pi) == pytest.approx(n * d - d * (d + 1) / 2)


def test_intrinsic_gradient_of_linear_form(rng):
    A = stiefel.sample_uniform(5, 2, rng)
    V = rng.standard_normal((5, 2))
    g = stiefel.intrinsic_gradient(LinearForm(V), A)
    np.testing.assert_allclose(g, V - A @ sym_product(A, V), atol=1e-14)


def test_ambient_gradient_fd(rng):
    n, d = 4, 2
    f = _quad(n, d, rng)
    A = stiefel.sample_uniform(n, d, rng)
    np.testing.assert_allclose(fd_gradient(f.value, A), f.grad(A), atol=1e-6)


def test_intrinsic_hessian_properties(rng):
    n, d = 5, 2
    f = _quad(n, d, rng)
    A = stiefel.sample_uniform(n, d, rng)
    H = stiefel.intrinsic_hessian(f, A)
    np.testing.assert_allclose(H, H.T, atol=1e-12)
    Pi = stiefel.projection_matrix(A)
    np.testing.assert_allclose(Pi @ H @ Pi, H, atol=1e-12)
    V = rng.standard_normal((n, d))
    np.testing.assert_allclose(vec(stiefel.intrinsic_hessian_apply(f, A, V)),
                               H @ vec(V), atol=1e-12)
    # annihilates the normal direction A S for symmetric S
    S = rng.standard_normal((d, d))
    S = S + S.T
    assert hs_norm(stiefel.intrinsic_hessian_apply(f, A, A @ S)) <= 1e-12


def test_identity_matches_apply(rng):
    for _ in range(10):
        n, d = 6, 2
        f = _quad(n, d, rng)
        A = stiefel.sample_uniform(n, d, rng)
        V = stiefel.tangent_project(A, rng.standard_normal((n, d)))
        a = stiefel.intrinsic_hessian_apply(f, A, V)
        b = stiefel.hessian_vector_via_identity(f, A, V)
        assert np.abs(a - b).max() <= 1e-8


def test_identity_cubic_chaos(rng):
    n, d = 4, 2
    f = PolynomialChaos(rng.standard_normal((8, 8, 8)) / 8, (n, d))
    A = stiefel.sample_uniform(n, d, rng)
    V = stiefel.tangent_project(A, rng.standard_normal((n, d)))
    a = stiefel.intrinsic_hessian_apply(f, A, V)
    b = stiefel.hessian_vector_via_identity(f, A, V)
    assert np.abs(a - b).max() <= 1e-8


def test_second_order_modulus(rng):
    for _ in range(20):
        n, d = 5, 2
        f = _quad(n, d, rng)
        A = stiefel.sample_uniform(n, d, rng)
        m = stiefel.second_order_modulus(f, A)
        assert m <= np.linalg.norm(stiefel.intrinsic_hessian(f, A), 2) + 1e-10


def test_second_order_modulus_zero_gradient(rng):
    # f = |A|^2 / 2 is constant on the manifold: zero gradient branch
    n, d = 4, 2
    f = QuadraticForm(0.5 * np.eye(n * d), (n, d))
    A = stiefel.sample_uniform(n, d, rng)
    assert hs_norm(stiefel.intrinsic_gradient(f, A)) <= 1e-12
    H = stiefel.intrinsic_hessian(f, A)
    assert stiefel.second_order_modulus(f, A) == pytest.approx(np.linalg.norm(H, 2))


def test_retract(rng):
    A = stiefel.sample_uniform(6, 3, rng)
    V = stiefel.tangent_project(A, rng.standard_normal((6, 3)))
    assert np.abs(stiefel.retract(A, V, 0.0) - A).max() <= 1e-14
    for t in (1e-3, 0.1, 1.0):
        Y = stiefel.retract(A, V, t)
        assert stiefel.orthonormality_error(Y) <= 1e-12
    # first order agreement with the straight line
    t = 1e-4
    assert hs_norm(stiefel.retract(A, V, t) - A - t * V) <= 10 * t * t * hs_norm(V) ** 2


def test_taylor_slopes_quadratic(rng):
    f = _quad(6, 2, rng)
    rows = taylor_audit(f, "stiefel", 6, 2, trials=20, seed=3)
    assert all(r.status2 == "PASS" for r in rows)
    assert np.median([r.slope1 for r in rows]) == pytest.approx(2.0, abs=0.05)
    # a low first-order slope only occurs along nearly flat directions
    typical = np.median([r.curvature for r in rows])
    for r in rows:
        if r.status1 == "FAIL":
            assert r.curvature < 0.1 * typical


def test_taylor_constant_on_manifold_is_degenerate():
    f = QuadraticForm(0.5 * np.eye(8), (4, 2))
    rows = taylor_audit(f, "stiefel", 4, 2, trials=3, seed=1)
    assert all(r.status1 == "PASS-degenerate" for r in rows)


def test_taylor_wrong_hessian_fails(rng):
    class Broken:
        def __init__(self, q):
            self.q = q

        def value(self, X):
            return self.q.value(X)

        def grad(self, X):
            return self.q.grad(X)

        def hess(self, X):
            return np.zeros_like(self.q.hess(X))

    rows = taylor_audit(Broken(_quad(6, 2, rng)), "stiefel", 6, 2, trials=3, seed=2)
    assert all(r.status2 == "FAIL" for r in rows)


def test_mat_vec_consistency_with_kron_hessian(rng):
    # d/dt f(A + tV) twice equals vec(V)^T f'' vec(V)
    f = _quad(3, 2, rng)
    A = rng.standard_normal((3, 2))
    V = rng.standard_normal((3, 2))
    h = 1e-4
    d2 = (f.value(A + h * V) - 2 * f.value(A) + f.value(A - h * V)) / h ** 2
    assert d2 == pytest.approx(vec(V) @ f.hess(A) @ vec(V), rel=1e-5)
    np.testing.assert_array_equal(mat(vec(V), 3, 2), V)
