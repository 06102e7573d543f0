"""Geometry and intrinsic calculus on the Grassmann manifold, with points
represented as rank-``d`` orthogonal projection matrices ``P`` (``n x n``).

Functionals may be defined on all of ``R^{n x n}``; their ambient gradient
and Hessian are symmetrized before projecting to the tangent space
``T_P = {S symmetric : S = SP + PS}``.
"""
import numpy as np

from . import stiefel
from .errors import DimensionError, ManifoldError
from .matcalc import commutation_perm, commutator, hs_norm, mat, vec

__all__ = [
    "check_point", "from_stiefel", "lift", "sample_uniform", "sym_project",
    "tangent_project", "is_tangent", "intrinsic_gradient",
    "intrinsic_hessian_apply", "intrinsic_hessian", "hessian_vector_via_identity",
    "second_order_modulus", "retract", "principal_angles", "rank",
]

SYM_TOL = 1e-10
IDEM_TOL = 1e-9
TRACE_TOL = 1e-8


def _T(M):
    return np.swapaxes(M, -1, -2)


def rank(P):
    """Rank of a projection read off its trace."""
    tr = float(np.trace(P))
    d = int(round(tr))
    if abs(tr - d) > TRACE_TOL:
        raise ManifoldError(f"trace {tr!r} is not an integer")
    return d


def check_point(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"need a square matrix, got {P.shape}")
    if hs_norm(P - P.T) > SYM_TOL:
        raise ManifoldError("projection is not symmetric")
    if hs_norm(P @ P - P) > IDEM_TOL:
        raise ManifoldError("matrix is not idempotent")
    rank(P)
    return P


def from_stiefel(A):
    """``A -> A A^T``: the projection onto the column span of ``A``."""
    A = np.asarray(A, dtype=float)
    return A @ _T(A)


def lift(P, d=None):
    """A Stiefel point whose columns span the range of ``P`` (top-``d``
    eigenvectors)."""
    d = rank(P) if d is None else d
    _, Q = np.linalg.eigh(P)
    return Q[:, ::-1][:, :d]


def sample_uniform(n, d, rng, size=None):
    """Draw from the uniform distribution on ``G_{n,d}``.

    Uses ``G (G^T G)^{-1} G^T`` with a standard Gaussian ``n x d`` matrix
    ``G``, solved by Cholesky rather than through the Stiefel sampler.
    """
    if not 1 <= d <= n:
        raise DimensionError(f"need 1 <= d <= n, got n={n}, d={d}")
    m = 1 if size is None else int(size)
    G = rng.standard_normal((m, n, d))
    L = np.linalg.cholesky(_T(G) @ G)
    # W = L^{-1} G^T, so P = W^T W = G (G^T G)^{-1} G^T
    W = np.linalg.solve(L, _T(G))
    P = _T(W) @ W
    P = 0.5 * (P + _T(P))
    return P[0] if size is None else P


def sym_project(M):
    """``(M + M^T) / 2``."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + _T(M))


def tangent_project(P, M):
    """``[P, [P, M]] = PM + MP - 2PMP`` for symmetric ``M``."""
    P = np.asarray(P, dtype=float)
    M = np.asarray(M, dtype=float)
    if P.shape[-2:] != M.shape[-2:]:
        raise DimensionError(f"shape mismatch {P.shape} vs {M.shape}")
    PM = P @ M
    return PM + M @ P - 2.0 * PM @ P


def is_tangent(P, S, tol=IDEM_TOL):
    return hs_norm(S - S.T) <= tol and hs_norm(S - (S @ P + P @ S)) <= tol


def intrinsic_gradient(f, P):
    """Tangent projection of the symmetrized ambient gradient."""
    return tangent_project(P, sym_project(f.grad(P)))


def _sym_hess(f, P):
    n = P.shape[0]
    H = f.hess(P)
    perm = commutation_perm(n, n)
    # pi_sym = (I + K_{n,n}) / 2 on both sides; K_{n,n} is an involution
    H = 0.5 * (H + H[perm, :])
    H = 0.5 * (H + H[:, perm])
    return H


def intrinsic_hessian_apply(f, P, V):
    """``pi_P f''(P) pi_P V - [P, [grad f(P), pi_P V]]`` for symmetric ``V``.

    ``f''`` and ``grad f`` are the symmetrized ambient derivatives.
    """
    P = np.asarray(P, dtype=float)
    V = sym_project(V)
    if V.shape != P.shape:
        raise DimensionError(f"shape mismatch {P.shape} vs {V.shape}")
    n = P.shape[0]
    W = tangent_project(P, V)
    G = sym_project(f.grad(P))
    HW = mat(_sym_hess(f, P) @ vec(W), n, n)
    return tangent_project(P, HW) - commutator(P, commutator(G, W))


def intrinsic_hessian(f, P):
    """Dense ``n^2 x n^2`` matrix of :func:`intrinsic_hessian_apply`
    (composed with ``pi_sym``) acting on ``vec``."""
    n = P.shape[0]
    H = np.empty((n * n, n * n))
    for k in range(n * n):
        e = np.zeros(n * n)
        e[k] = 1.0
        H[:, k] = vec(intrinsic_hessian_apply(f, P, mat(e, n, n)))
    return 0.5 * (H + H.T)


def hessian_vector_via_identity(f, P, V, h=None):
    """``grad_G psi_V(P) - [P, [grad_G f(P), V]]`` with ``psi_V(X) =
    <[X, [X, sym grad f(X)]], V>`` differentiated by central differences."""
    P = np.asarray(P, dtype=float)
    V = sym_project(V)
    n = P.shape[0]
    if h is None:
        h = 1e-5 * max(1.0, hs_norm(P))

    def psi(X):
        G = sym_project(f.grad(X))
        XG = X @ G
        return float(np.sum((XG + G @ X - 2.0 * XG @ X) * V))

    x = vec(P)
    g = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (psi(mat(x + e, n, n)) - psi(mat(x - e, n, n))) / (2 * h)
    grad_psi = tangent_project(P, sym_project(mat(g, n, n)))
    return grad_psi - commutator(P, commutator(intrinsic_gradient(f, P), V))


def second_order_modulus(f, P, zero_tol=stiefel.ZERO_GRAD_TOL):
    """Grassmann analogue of :func:`stiefel.second_order_modulus`."""
    H = intrinsic_hessian(f, P)
    hop = float(np.linalg.norm(H, 2))
    g = vec(intrinsic_gradient(f, P))
    gn = np.linalg.norm(g)
    if gn <= zero_tol * max(1.0, hop):
        return hop
    return float(np.linalg.norm(H @ g) / gn)


def retract(P, S, t):
    """Move along tangent ``S`` through a Stiefel lift.

    Lifts ``P`` to ``A`` and ``S`` to the horizontal vector ``S A``, applies
    the Stiefel polar retraction and maps back with ``A -> A A^T``.
    """
    if t == 0:
        return np.array(P, dtype=float)
    A = lift(P)
    return from_stiefel(stiefel.retract(A, S @ A, t))


def principal_angles(A, B):
    """Principal angles between the column spans of two Stiefel points,
    ascending in ``[0, pi/2]``.

    Cosines are the singular values of ``A^T B``; small angles lose
    relative accuracy (``arccos`` near 1).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    s = np.clip(np.linalg.svd(A.T @ B, compute_uv=False), 0.0, 1.0)
    return np.sort(np.arccos(s))
