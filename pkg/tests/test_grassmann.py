import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from manifoldconc import grassmann, stiefel
from manifoldconc.errors import DimensionError, ManifoldError
from manifoldconc.functionals import LinearForm, TraceBilinear
from manifoldconc.matcalc import commutator, hs_norm, vec
from manifoldconc.montecarlo import taylor_audit

shapes = st.integers(1, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n)))


def _sym(rng, n):
    G = rng.standard_normal((n, n))
    return (G + G.T) / np.sqrt(2 * n)


def _bilinear(n, rng):
    return TraceBilinear(_sym(rng, n), _sym(rng, n))


@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_samples_are_projections(shape, seed):
    n, d = shape
    P = grassmann.sample_uniform(n, d, np.random.default_rng(seed))
    assert grassmann.check_point(P) is not None
    assert grassmann.rank(P) == d


def test_check_point_errors(rng):
    with pytest.raises(DimensionError):
        grassmann.check_point(np.ones((2, 3)))
    with pytest.raises(ManifoldError):
        grassmann.check_point(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ManifoldError):
        grassmann.check_point(2 * np.eye(2))


def test_lift_roundtrip(rng):
    P = grassmann.sample_uniform(6, 2, rng)
    A = grassmann.lift(P)
    assert stiefel.orthonormality_error(A) <= 1e-12
    np.testing.assert_allclose(grassmann.from_stiefel(A), P, atol=1e-12)


@given(shapes, st.integers(0, 2 ** 32 - 1))
def test_tangent_projection(shape, seed):
    n, d = shape
    rng = np.random.default_rng(seed)
    P = grassmann.sample_uniform(n, d, rng)
    S = grassmann.tangent_project(P, _sym(rng, n))
    assert grassmann.is_tangent(P, S)
    # sample accuracy is 1e-9 when d is close to n
    np.testing.assert_allclose(grassmann.tangent_project(P, S), S, atol=1e-9)
    # equals the double commutator
    M = _sym(rng, n)
    np.testing.assert_allclose(grassmann.tangent_project(P, M),
                               commutator(P, commutator(P, M)), atol=1e-9)


def test_intrinsic_hessian_symmetric_and_tangent(rng):
    n, d = 5, 2
    f = _bilinear(n, rng)
    P = grassmann.sample_uniform(n, d, rng)
    H = grassmann.intrinsic_hessian(f, P)
    V = _sym(rng, n)
    HV = grassmann.intrinsic_hessian_apply(f, P, V)
    assert grassmann.is_tangent(P, HV)
    # the dense matrix before symmetrization is already symmetric
    raw = np.column_stack([vec(grassmann.intrinsic_hessian_apply(f, P, e.reshape(n, n).T))
                           for e in np.eye(n * n)])
    assert np.abs(raw - raw.T).max() <= 1e-12
    np.testing.assert_allclose(H @ vec(V), vec(HV), atol=1e-12)


def test_identity_matches_apply(rng):
    for _ in range(10):
        n, d = 5, 2
        f = _bilinear(n, rng)
        P = grassmann.sample_uniform(n, d, rng)
        V = grassmann.tangent_project(P, _sym(rng, n))
        a = grassmann.intrinsic_hessian_apply(f, P, V)
        b = grassmann.hessian_vector_via_identity(f, P, V)
        assert np.abs(a - b).max() <= 1e-8


def test_second_order_modulus(rng):
    for _ in range(20):
        f = _bilinear(5, rng)
        P = grassmann.sample_uniform(5, 2, rng)
        m = grassmann.second_order_modulus(f, P)
        assert m <= np.linalg.norm(grassmann.intrinsic_hessian(f, P), 2) + 1e-10


def test_retract_stays_on_manifold(rng):
    P = grassmann.sample_uniform(6, 2, rng)
    S = grassmann.tangent_project(P, _sym(rng, 6))
    for t in (0.0, 1e-3, 0.5):
        Q = grassmann.retract(P, S, t)
        grassmann.check_point(Q)
        assert grassmann.rank(Q) == 2
    t = 1e-4
    assert hs_norm(grassmann.retract(P, S, t) - P - t * S) <= 10 * t * t * max(1, hs_norm(S)) ** 2


def test_taylor_slopes(rng):
    f = _bilinear(6, rng)
    rows = taylor_audit(f, "grassmann", 6, 2, trials=20, seed=4)
    assert all(r.status2 == "PASS" for r in rows)
    assert np.median([r.slope1 for r in rows]) == pytest.approx(2.0, abs=0.05)
    typical = np.median([r.curvature for r in rows])
    for r in rows:
        if r.status1 == "FAIL":
            assert r.curvature < 0.1 * typical


def test_trace_is_degenerate():
    # tr P is constant on the Grassmannian
    rows = taylor_audit(LinearForm(np.eye(5)), "grassmann", 5, 2, trials=3, seed=0)
    assert all(r.status1 == "PASS-degenerate" for r in rows)


def test_pistlip_ratio_random_pairs(rng):
    worst = 0.0
    for n, d in [(5, 1), (8, 2), (20, 5)]:
        A = stiefel.sample_uniform(n, d, rng, size=2000)
        B = stiefel.sample_uniform(n, d, rng, size=2000)
        num = np.linalg.norm(A @ A.swapaxes(1, 2) - B @ B.swapaxes(1, 2), axis=(1, 2))
        den = np.linalg.norm(A - B, axis=(1, 2))
        worst = max(worst, (num / den).max())
    assert worst <= np.sqrt(2) + 1e-9


def test_pistlip_witness_exceeds_one():
    n = 9
    a = np.zeros((n, 1))
    a[0] = 1
    b = np.full((n, 1), 1 / np.sqrt(n))
    ratio = hs_norm(a @ a.T - b @ b.T) / hs_norm(a - b)
    assert ratio == pytest.approx(np.sqrt(1 + 1 / np.sqrt(n)))
    assert ratio > 1


def test_principal_angles(rng):
    A = stiefel.sample_uniform(7, 3, rng)
    B = stiefel.sample_uniform(7, 3, rng)
    th = grassmann.principal_angles(A, B)
    assert np.all(np.diff(th) >= 0) and th[0] >= 0 and th[-1] <= np.pi / 2
    ev = np.sort(np.linalg.eigvals(A @ A.T @ B @ B.T).real)[-3:]
    np.testing.assert_allclose(np.sort(np.cos(th) ** 2), ev, atol=1e-9)
    assert np.allclose(grassmann.principal_angles(A, A), 0, atol=1e-6)


def test_principal_angles_shape_error(rng):
    with pytest.raises(DimensionError):
        grassmann.principal_angles(np.eye(3)[:, :1], np.eye(3)[:, :2])


def test_pushforward_matches_direct_sampler():
    # P_11 from A A^T (Stiefel sampler) and from the Cholesky sampler
    n, d, N = 6, 2, 4000
    A = stiefel.sample_uniform(n, d, np.random.default_rng(1), size=N)
    x = (A @ A.swapaxes(1, 2))[:, 0, 0]
    y = grassmann.sample_uniform(n, d, np.random.default_rng(2), size=N)[:, 0, 0]
    # P_11 ~ Beta(d/2, (n-d)/2)
    assert stats.ks_2samp(x, y).pvalue > 1e-3
    assert stats.kstest(y, stats.beta(d / 2, (n - d) / 2).cdf).pvalue > 1e-3


def test_pushforward_principal_trace():
    n, d, N = 7, 3, 20000
    A = stiefel.sample_uniform(n, d, np.random.default_rng(5), size=N)
    x = np.einsum("kii->k", (A @ A.swapaxes(1, 2))[:, :3, :3])
    y = np.einsum("kii->k", grassmann.sample_uniform(n, d, np.random.default_rng(6), size=N)[:, :3, :3])
    se = np.sqrt(x.var() / N + y.var() / N)
    assert abs(x.mean() - y.mean()) <= 3 * se
    assert abs(y.mean() - 3 * d / n) <= 3 * y.std() / np.sqrt(N)
