"""Named tail experiments: a functional, its centering, the matching bound
and the norm inputs the bound needs.

Norm inputs come from an independent pre-pass (its own substream). L2
norms are evaluated at their estimate plus three standard errors; sup norms
are the empirical maximum over the pre-pass and are labelled as not
certified.
"""
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from . import bounds, grassmann, stiefel
from .errors import DimensionError
from .functionals import (LinearForm, PolynomialChaos, QuadraticForm, TraceBilinear,
                          dist_to_subspace, grassmann_dist_sq, norm_centering,
                          norm_functional)
from .matcalc import commutation_perm, hs_norm, op_norm, sym_product
from .montecarlo import (CHUNK_SIZE, STREAM_FIXED, STREAM_PREPASS, ExperimentConfig,
                         chunk_rng, map_chunks, sample_points)

__all__ = ["EXPERIMENTS", "build_experiment", "auto_grid", "l2_plus", "audit_functional",
           "stiefel_quadratic_norms", "PREPASS_SAMPLES"]

PREPASS_SAMPLES = 2000
HESSIAN_SUBSET = 40
SIGMAS = 3.0

CERT_EXACT = "exact"
CERT_SUP = "empirical max over {} pre-pass samples (not certified)"


def l2_plus(x, sigmas=SIGMAS):
    """``(L2 norm of the samples x, its standard error, estimate + sigmas*se)``."""
    x = np.asarray(x, dtype=float)
    m2 = float(np.mean(x * x))
    l2 = math.sqrt(m2)
    se_m2 = float(np.std(x * x, ddof=1) / math.sqrt(x.size))
    se = se_m2 / (2 * l2) if l2 > 0 else 0.0
    return l2, se, l2 + sigmas * se


def _l2_record(x, label):
    l2, se, up = l2_plus(x)
    return up, {"value": up, "estimate": l2, "stderr": se,
                "provenance": f"MC-estimated L2 of {label}, evaluated at +{SIGMAS:g} sigma"}


def _sup_record(x, label):
    x = np.asarray(x, dtype=float)
    v = float(x.max())
    return v, {"value": v, "provenance": CERT_SUP.format(x.size) + f": {label}"}


def _exact_record(v, label):
    return float(v), {"value": float(v), "provenance": f"{CERT_EXACT}: {label}"}


def _bkron(X, Y):
    """Batched Kronecker product over leading axes."""
    *b, p, q = X.shape
    r, s = Y.shape[-2:]
    return np.einsum("...ij,...kl->...ikjl", X, Y).reshape(*b, p * r, q * s)


def stiefel_quadratic_norms(Q, A):
    """Per-sample ``|pi_A U|_HS``, ``|Pi B Pi|_HS`` and ``|Pi B Pi|_op`` for a
    stack of Stiefel points ``A``."""
    n, d = Q.shape
    U = Q.U(A)
    PU = stiefel.tangent_project(A, U)
    S = sym_product(A, U)
    B = Q.M - _bkron(S, np.broadcast_to(np.eye(n), S.shape[:-2] + (n, n)))
    AAt = A @ np.swapaxes(A, -1, -2)
    Id = np.broadcast_to(np.eye(d), A.shape[:-2] + (d, d))
    Pi = np.eye(n * d) - 0.5 * _bkron(Id, AAt)
    Pi = Pi - 0.5 * _bkron(np.swapaxes(A, -1, -2), A)[..., np.argsort(commutation_perm(n, d))]
    H = Pi @ B @ Pi
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    ev = np.linalg.eigvalsh(H)
    return (np.linalg.norm(PU, axis=(-2, -1)), np.linalg.norm(H, axis=(-2, -1)),
            np.abs(ev).max(axis=-1))


def _grassmann_hessian_op(f, P):
    n = P.shape[0]

    def mv(x):
        return grassmann.intrinsic_hessian_apply(f, P, x.reshape(n, n, order="F")).reshape(-1, order="F")

    op = LinearOperator((n * n, n * n), matvec=mv, dtype=float)
    v0 = np.ones(n * n) / n
    w = eigsh(op, k=1, which="LM", return_eigenvectors=False, v0=v0, tol=1e-8)
    return float(abs(w[0]))


def _prepass(manifold, n, d, seed, size, threads, fn):
    def work(rng, m, offset):
        return fn(sample_points(manifold, n, d, rng, m))
    parts = map_chunks(work, size, seed, STREAM_PREPASS, CHUNK_SIZE, threads)
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)


def _fixed_rng(seed):
    return chunk_rng(seed, STREAM_FIXED, 1)


def _sym_matrix(rng, k):
    G = rng.standard_normal((k, k))
    return (G + G.T) / math.sqrt(2 * k)


def _check_matrix(M, shape, what):
    M = np.asarray(M, dtype=float)
    if M.shape != shape:
        raise DimensionError(f"{what} must have shape {shape}, got {M.shape}")
    return M


# -- builders ----------------------------------------------------------------
# each returns a dict with keys manifold, functional, bound, center, side,
# norm_inputs, notes, pre_values

def _grassmann_dist(n, d, seed, cf, pre, threads, **kw):
    PF = np.diag(np.r_[np.ones(d), np.zeros(n - d)])
    fun = lambda P: grassmann_dist_sq(P, PF)
    b = bounds.grassmann_dist_tail(n, d, constant_factor=cf)
    return dict(manifold="grassmann", functional=fun, bound=b, center=b.center, side="abs",
                 norm_inputs={}, notes={"subspace": "span(e_1..e_d)"},
                 pre_values=_prepass("grassmann", n, d, seed, pre, threads, fun))


def _dist_subspace(n, d, seed, cf, pre, threads, mode="onto", m=None, **kw):
    m = d if m is None else int(m)
    if not 1 <= m <= n:
        raise DimensionError(f"subspace rank m must lie in [1, n], got {m}")
    Q = np.diag(np.r_[np.ones(m), np.zeros(n - m)])
    fun = lambda A: dist_to_subspace(A, Q, mode)
    onto_c = math.sqrt(m * d / n)
    comp_c = math.sqrt(d * (n - m) / n)
    if mode == "onto":
        b = bounds.dist_subspace_tail(n, d, m, constant_factor=cf)
        center = onto_c
    else:
        b = bounds.norm_conc_tail(n, 1.0, center=comp_c, constant_factor=cf)
        center = comp_c
    return dict(manifold="stiefel", functional=fun, bound=b, center=center, side="abs",
                 norm_inputs={"M_op": {"value": 1.0, "provenance": "exact: I_d (x) Q"}},
                 notes={"mode": mode, "m": m, "center_sqrt_md_over_n": onto_c,
                        "center_general_hs_over_sqrt_n": center,
                        "center_complement": comp_c},
                 pre_values=_prepass("stiefel", n, d, seed, pre, threads, fun))


def _transf(n, d, seed, cf, pre, threads, matrix=None, **kw):
    s = n * d
    if matrix is None:
        M = _fixed_rng(seed).standard_normal((s, s)) / math.sqrt(s)
    else:
        M = _check_matrix(matrix, (s, s), "M")
    fun = lambda A: norm_functional(M, A)
    mop, rec = _exact_record(np.linalg.norm(M, 2), "|M|_op by SVD")
    b = bounds.norm_conc_tail(n, mop, center=norm_centering(M, n), constant_factor=cf)
    return dict(manifold="stiefel", functional=fun, bound=b, center=b.center, side="abs",
                 norm_inputs={"M_op": rec}, notes={},
                 pre_values=_prepass("stiefel", n, d, seed, pre, threads, fun))


def _quadratic(n, d, seed, matrix):
    s = n * d
    M = _sym_matrix(_fixed_rng(seed), s) if matrix is None else _check_matrix(matrix, (s, s), "M")
    return QuadraticForm(M, (n, d))


def _stiefel_quad_prepass(Q, n, d, seed, pre, threads):
    def fn(A):
        pu, hs, op = stiefel_quadratic_norms(Q, A)
        return Q.value(A), pu, hs, op
    return _prepass("stiefel", n, d, seed, pre, threads, fn)


def _hanson_wright(variant):
    def build(n, d, seed, cf, pre, threads, matrix=None, **kw):
        Q = _quadratic(n, d, seed, matrix)
        center = Q.trace_centering()
        if variant == 3 and n - 2 - 8 * d <= 0:
            # fail before the expensive pre-pass
            bounds.hanson_wright_tail(n, d, 3, {"PBP_hs2": 1.0, "PBP_opinf": 1.0})
        if variant == 1:
            vals = _prepass("stiefel", n, d, seed, pre, threads, Q.value)
            a, ra = _exact_record(hs_norm(Q.M), "|M|_HS")
            b_, rb = _exact_record(np.linalg.norm(Q.M, 2), "|M|_op")
            norms, recs = {"M_hs": a, "M_op": b_}, {"M_hs": ra, "M_op": rb}
        else:
            vals, pu, hs, op = _stiefel_quad_prepass(Q, n, d, seed, pre, threads)
            sup, rs = _sup_record(op, "|Pi B Pi|_op")
            if variant == 2:
                a, ra = _l2_record(pu, "|pi_A U|_HS")
                norms, recs = {"PU_hs2": a, "PBP_opinf": sup}, {"PU_hs2": ra, "PBP_opinf": rs}
            else:
                a, ra = _l2_record(hs, "|Pi B Pi|_HS")
                norms, recs = {"PBP_hs2": a, "PBP_opinf": sup}, {"PBP_hs2": ra, "PBP_opinf": rs}
        b = bounds.hanson_wright_tail(n, d, variant, norms, constant_factor=cf)
        return dict(manifold="stiefel", functional=Q.value, bound=b, center=center,
                     side="abs", norm_inputs=recs, notes={"center": "tr(M)/n exact"},
                     pre_values=vals)
    return build


def _quadratic_second_order(n, d, seed, cf, pre, threads, matrix=None, **kw):
    Q = _quadratic(n, d, seed, matrix)
    center = Q.trace_centering()
    vals, pu, _, op = _stiefel_quad_prepass(Q, n, d, seed, pre, threads)
    g2, rg = _l2_record(2 * pu, "|grad_W f|_HS")
    hop, rh = _sup_record(2 * op, "|f''_W|_op")
    b = bounds.second_order_tail(n, g2, hop, "stiefel", constant_factor=cf)
    return dict(manifold="stiefel", functional=Q.value, bound=b, center=center, side="abs",
                 norm_inputs={"g2": rg, "hop": rh},
                 notes={"functional": "vec(A)^T M vec(A)", "center": "tr(M)/n exact"},
                 pre_values=vals)


def _trace_bilinear(n, seed):
    rng = _fixed_rng(seed)
    return TraceBilinear(_sym_matrix(rng, n), _sym_matrix(rng, n))


def _mc_center(vals):
    c = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    return c, {"value": c, "stderr": se, "provenance": "MC-estimated mean on the pre-pass"}


def _grassmann_second_order(n, d, seed, cf, pre, threads, **kw):
    f = _trace_bilinear(n, seed)

    def fn(P):
        G = grassmann.tangent_project(P, grassmann.sym_project(f.grad(P)))
        return f.value(P), np.linalg.norm(G, axis=(-2, -1))

    vals, gn = _prepass("grassmann", n, d, seed, pre, threads, fn)
    center, rc = _mc_center(vals)
    g2, rg = _l2_record(gn, "|grad_G f|_HS")
    sub = sample_points("grassmann", n, d, chunk_rng(seed, STREAM_PREPASS, 10 ** 6),
                        HESSIAN_SUBSET)
    hops = np.array([_grassmann_hessian_op(f, P) for P in sub])
    hop, rh = _sup_record(hops, "|f''_G|_op (Lanczos)")
    b = bounds.second_order_tail(n, g2, hop, "grassmann", constant_factor=cf)
    return dict(manifold="grassmann", functional=f.value, bound=b, center=center, side="abs",
                 norm_inputs={"center": rc, "g2": rg, "hop": rh},
                 notes={"functional": "tr(C P D P)"}, pre_values=vals)


def _cubic_chaos_third_order(n, d, seed, cf, pre, threads, **kw):
    s = n * d
    rng = _fixed_rng(seed)
    c = PolynomialChaos(rng.standard_normal((s, s, s)), (n, d))
    c.coef /= hs_norm(c.coef)

    def fn(A):
        x = np.swapaxes(A, -1, -2).reshape(A.shape[0], s)
        g1 = np.linalg.norm(c.grad(A), axis=(-2, -1))
        H = 6.0 * np.tensordot(x, c.coef, axes=([1], [0]))
        g2 = np.abs(np.linalg.eigvalsh(H)).max(axis=-1)
        return c.value(A), g1, g2

    vals, g1, g2 = _prepass("stiefel", n, d, seed, pre, threads, fn)
    a1, r1 = _l2_record(g1, "|f'|_op")
    a2, r2 = _l2_record(g2, "|f''|_op")
    on = op_norm(6.0 * c.coef, rng=chunk_rng(seed, STREAM_FIXED, 2))
    kop = on.lower
    rk = {"value": kop, "upper": on.upper,
          "provenance": "|f'''|_op power-iteration lower bracket (anticonservative); "
                        "upper = HS norm"}
    b = bounds.kth_order_tail(n, 3, [a1, a2], kop, "stiefel", constant_factor=cf)
    return dict(manifold="stiefel", functional=c.value, bound=b, center=0.0, side="abs",
                 norm_inputs={"f1_op2": r1, "f2_op2": r2, "f3_op": rk},
                 notes={"functional": "cubic chaos, |c|_HS = 1", "center": "0 exact (odd)"},
                 pre_values=vals)


def _grassmann_euclidean_second_order(n, d, seed, cf, pre, threads, **kw):
    f = _trace_bilinear(n, seed)

    def fn(P):
        return f.value(P), np.linalg.norm(f.grad(P), axis=(-2, -1))

    vals, g1 = _prepass("grassmann", n, d, seed, pre, threads, fn)
    center, rc = _mc_center(vals)
    a1, r1 = _l2_record(g1, "|f'|_op (Euclidean gradient)")
    kop, rk = _exact_record(np.abs(np.linalg.eigvalsh(f.hess(None))).max(),
                            "|D(x)C + C(x)D|_op")
    b = bounds.kth_order_tail(n, 2, [a1], kop, "grassmann", constant_factor=cf)
    return dict(manifold="grassmann", functional=lambda P: f.value(P) - center,
                 bound=b, center=0.0, side="abs",
                 norm_inputs={"center": rc, "f1_op2": r1, "f2_op": rk},
                 notes={"functional": "tr(C P D P) - MC mean"}, pre_values=vals - center)


def _linear_V(n, d, seed, matrix):
    if matrix is None:
        V = _fixed_rng(seed).standard_normal((n, d))
        return V / hs_norm(V)
    return _check_matrix(matrix, (n, d), "V")


def _linf(n, d, seed, cf, pre, threads, matrix=None, **kw):
    V = _linear_V(n, d, seed, matrix)
    f = LinearForm(V)
    pv = np.linalg.norm(stiefel.tangent_project(
        sample_points("stiefel", n, d, chunk_rng(seed, STREAM_PREPASS, 0), pre), V), axis=(-2, -1))
    # sup_A |pi_A V| = |V| as soon as some frame is orthogonal to range(V)
    exact = n - np.linalg.matrix_rank(V) >= d
    rec = {"value": hs_norm(V), "mc_max": float(pv.max()),
           "provenance": ("exact: |V|_HS, attained by frames orthogonal to range(V)" if exact
                          else "upper bound |V|_HS (certified)")}
    b = bounds.linear_form_tail(n, hs_norm(V), constant_factor=cf)
    return dict(manifold="stiefel", functional=f.value, bound=b, center=0.0, side="abs",
                 norm_inputs={"pv_norm": rec}, notes={"functional": "<V, A>"},
                 pre_values=_prepass("stiefel", n, d, seed, pre, threads, f.value))


def _lipschitz(n, d, seed, cf, pre, threads, matrix=None, manifold="stiefel", **kw):
    if manifold == "stiefel":
        V = _linear_V(n, d, seed, matrix)
        center = 0.0
    else:
        if matrix is None:
            V = _sym_matrix(_fixed_rng(seed), n)
            V /= hs_norm(V)
        else:
            V = grassmann.sym_project(_check_matrix(matrix, (n, n), "V"))
        center = float(np.trace(V)) * d / n
    f = LinearForm(V)
    L, rec = _exact_record(hs_norm(V), "|V|_HS")
    b = bounds.lipschitz_tail(L, n, manifold, constant_factor=cf)
    return dict(manifold=manifold, functional=f.value, bound=b, center=center, side="upper",
                 norm_inputs={"L": rec}, notes={"functional": "<V, X>", "one_sided": True},
                 pre_values=_prepass(manifold, n, d, seed, pre, threads, f.value))


# names accepted by ``tail --bound``:
#   thm1.1  second-order bound, random quadratic form, Stiefel
#   thm1.2  second-order bound, tr(CPDP), Grassmann
#   thm1.3  third-order bound from Euclidean derivatives, cubic chaos, Stiefel
#   thm1.4  second-order bound from Euclidean derivatives, tr(CPDP), Grassmann
#   hw1-3   Hanson-Wright variants for a random quadratic form around tr(M)/n
#   transf  |M vec(A)| around |M|_HS / sqrt(n)
#   dist-subspace, grassmann-dist, lipschitz, linf: see the builders above
EXPERIMENTS = {
    "thm1.1": _quadratic_second_order,
    "thm1.2": _grassmann_second_order,
    "thm1.3": _cubic_chaos_third_order,
    "thm1.4": _grassmann_euclidean_second_order,
    "hw1": _hanson_wright(1),
    "hw2": _hanson_wright(2),
    "hw3": _hanson_wright(3),
    "transf": _transf,
    "dist-subspace": _dist_subspace,
    "grassmann-dist": _grassmann_dist,
    "lipschitz": _lipschitz,
    "linf": _linf,
}


def auto_grid(deviations, points=100, pad=1.25):
    """``points`` equally spaced values up to ``pad`` times the largest
    pre-pass deviation."""
    top = float(np.max(deviations)) * pad
    if not top > 0:
        top = 1.0
    return np.linspace(top / points, top, points)


def build_experiment(name, n, d, n_samples, seed, grid=None, constant_factor=1.0,
                     threads=1, prepass=PREPASS_SAMPLES, chunk_size=CHUNK_SIZE, **options):
    """Assemble the :class:`ExperimentConfig` for a named experiment.

    ``options`` are passed to the builder (``matrix``, ``mode``, ``m``,
    ``manifold``). Without a ``grid`` a 100-point grid is derived from the
    pre-pass.
    """
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    if not 1 <= d <= n:
        raise DimensionError(f"need 1 <= d <= n, got n={n}, d={d}")
    parts = EXPERIMENTS[name](n, d, seed, constant_factor, prepass, threads, **options)
    dev = parts["pre_values"] - parts["center"]
    if parts["side"] == "abs":
        dev = np.abs(dev)
    if grid is None:
        grid = auto_grid(dev)
    notes = dict(parts["notes"])
    notes.update({"experiment": name, "constant_factor": constant_factor,
                  "prepass_samples": prepass})
    return ExperimentConfig(
        manifold=parts["manifold"], n=n, d=d, functional=parts["functional"],
        n_samples=n_samples, seed=seed, grid=grid, bound=parts["bound"],
        center=parts["center"], name=name, side=parts["side"], chunk_size=chunk_size,
        threads=threads, norm_inputs=parts["norm_inputs"], notes=notes)


AUDIT_FUNCTIONALS = ("linear", "quadratic", "constant")


class _Constant:
    provenance = "analytic"

    def __init__(self, c, shape):
        self.c = float(c)
        self.shape = shape

    def value(self, X):
        return np.full(np.shape(X)[:-2], self.c)

    def grad(self, X):
        return np.zeros(np.shape(X))

    def hess(self, X):
        k = self.shape[0] * self.shape[1]
        return np.zeros((k, k))


def audit_functional(kind, manifold, n, d, seed, matrix=None):
    """Test functional for the Poincare / log-Sobolev / L^p audits.

    ``linear``: ``<V, X>`` with ``|V|_HS = 1``; ``quadratic``: a random
    quadratic form (Stiefel) or ``tr(CPDP)`` (Grassmann); ``constant``: 1.
    """
    if kind not in AUDIT_FUNCTIONALS:
        raise ValueError(f"functional must be one of {AUDIT_FUNCTIONALS}, got {kind!r}")
    shape = (n, d) if manifold == "stiefel" else (n, n)
    if kind == "constant":
        return _Constant(1.0, shape)
    if kind == "linear":
        if manifold == "stiefel":
            return LinearForm(_linear_V(n, d, seed, matrix))
        V = _sym_matrix(_fixed_rng(seed), n) if matrix is None else grassmann.sym_project(matrix)
        return LinearForm(V / hs_norm(V))
    if manifold == "stiefel":
        return _quadratic(n, d, seed, matrix)
    return _trace_bilinear(n, seed)
