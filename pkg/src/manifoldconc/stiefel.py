"""Geometry and intrinsic calculus on the Stiefel manifold.

Points are ``n x d`` arrays ``A`` with ``A.T @ A = I_d``; tangent vectors
at ``A`` are ``n x d`` arrays ``V`` with ``A.T @ V`` antisymmetric. The
intrinsic gradient and Hessian are taken with respect to the Euclidean
(Hilbert-Schmidt) metric inherited from ``R^{n x d}``.
"""
import logging

import numpy as np

from .errors import DimensionError, ManifoldError
from .matcalc import commutation_perm, hs_norm, inner, mat, sym_product, vec

log = logging.getLogger(__name__)

__all__ = [
    "check_point", "polar_factor", "sample_uniform", "tangent_project", "is_tangent",
    "projection_matrix", "intrinsic_gradient", "euclidean_correction",
    "intrinsic_hessian_apply", "intrinsic_hessian", "hessian_vector_via_identity",
    "second_order_modulus", "retract", "POINT_TOL", "ZERO_GRAD_TOL",
]

POINT_TOL = 1e-10
REPAIR_TOL = 1e-6
EIG_FLOOR = 1e-12
ZERO_GRAD_TOL = 1e-9


def _T(M):
    return np.swapaxes(M, -1, -2)


def polar_factor(Y, floor=EIG_FLOOR):
    """Orthonormal polar factor ``Y (Y^T Y)^{-1/2}`` of (a stack of) full
    column rank matrices.

    Computed as ``U V^T`` from the thin SVD, which stays orthonormal to
    rounding even when ``Y`` is badly conditioned; forming ``Y^T Y`` first
    loses accuracy in proportion to its condition number. Returns
    ``(Q, ok)`` with ``ok`` flagging matrices whose squared smallest
    singular value cleared ``floor``.
    """
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    return U @ Vt, s[..., -1] ** 2 > floor


def orthonormality_error(A):
    d = A.shape[-1]
    return np.linalg.norm(_T(A) @ A - np.eye(d), axis=(-2, -1))


def check_point(A, tol=POINT_TOL, repair_tol=REPAIR_TOL):
    """Validate a Stiefel point.

    Matrices within ``repair_tol`` of orthonormality are re-orthonormalized
    by the polar factor; anything further away raises ``ManifoldError``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] > A.shape[0] or A.shape[1] < 1:
        raise DimensionError(f"need n x d with 1 <= d <= n, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ManifoldError("non-finite entries")
    err = orthonormality_error(A)
    if err <= tol:
        return A
    if err <= repair_tol:
        return polar_factor(A)[0]
    raise ManifoldError(f"||A^T A - I|| = {err:.3g} exceeds {repair_tol}")


def sample_uniform(n, d, rng, size=None):
    """Draw from the uniform (Haar) distribution on ``W_{n,d}``.

    Uses the polar factor ``G (G^T G)^{-1/2}`` of ``G`` with i.i.d.
    standard normal entries. Returns an ``(n, d)`` array, or ``(size, n, d)`` if ``size``
    is given. Draws whose Gram matrix is numerically singular are redrawn.
    """
    if not 1 <= d <= n:
        raise DimensionError(f"need 1 <= d <= n, got n={n}, d={d}")
    m = 1 if size is None else int(size)
    G = rng.standard_normal((m, n, d))
    A, ok = polar_factor(G)
    retries = 0
    while not np.all(ok):
        bad = np.flatnonzero(~ok)
        retries += bad.size
        G[bad] = rng.standard_normal((bad.size, n, d))
        A[bad], ok[bad] = polar_factor(G[bad])
    if retries:
        log.debug("sample_uniform: %d singular draws resampled", retries)
    return A[0] if size is None else A


def tangent_project(A, M):
    """Orthogonal projection ``M - A (A o M)`` onto the tangent space at ``A``."""
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    if A.shape[-2:] != M.shape[-2:]:
        raise DimensionError(f"shape mismatch {A.shape} vs {M.shape}")
    return M - A @ sym_product(A, M)


def is_tangent(A, V, tol=POINT_TOL):
    return hs_norm(sym_product(A, V)) <= tol


def projection_matrix(A):
    """The tangent projection at ``A`` as an ``nd x nd`` matrix on ``vec``.

    ``I - (I_d (x) AA^T)/2 - (A^T (x) A) K_{n,d} / 2``.
    """
    n, d = A.shape
    Pi = np.eye(n * d) - 0.5 * np.kron(np.eye(d), A @ A.T)
    # right-multiplying by K_{n,d} permutes columns
    Pi -= 0.5 * np.kron(A.T, A)[:, np.argsort(commutation_perm(n, d))]
    return Pi


def intrinsic_gradient(f, A):
    """Intrinsic gradient: tangent projection of the ambient gradient."""
    return tangent_project(A, f.grad(A))


def euclidean_correction(f, A):
    """``B = f''(A) - (A o grad f(A)) (x) I_n``, the ambient second-order
    term whose tangent compression is the intrinsic Hessian."""
    n, _ = A.shape
    S = sym_product(A, f.grad(A))
    return f.hess(A) - np.kron(S, np.eye(n))


def intrinsic_hessian_apply(f, A, V):
    """Apply the intrinsic Hessian at ``A`` to ``V``.

    Computes ``pi_A mat(B vec(pi_A V))`` with ``B`` from
    :func:`euclidean_correction`. The conjugation is by the tangent
    projection ``pi_A`` (not by ``AA^T``); only that choice maps into the
    tangent space and annihilates ``A``.
    """
    A = np.asarray(A, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape != A.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {V.shape}")
    n, d = A.shape
    W = tangent_project(A, V)
    S = sym_product(A, f.grad(A))
    BW = mat(f.hess(A) @ vec(W), n, d) - W @ S
    return tangent_project(A, BW)


def intrinsic_hessian(f, A):
    """Dense ``nd x nd`` intrinsic Hessian ``Pi B Pi``."""
    Pi = projection_matrix(A)
    H = Pi @ euclidean_correction(f, A) @ Pi
    return 0.5 * (H + H.T)


def _psi_gradient_fd(f, A, V, h):
    n, d = A.shape

    def psi(X):
        G = f.grad(X)
        return inner(G - X @ sym_product(X, G), V)

    x = vec(A)
    g = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (psi(mat(x + e, n, d)) - psi(mat(x - e, n, d))) / (2 * h)
    return mat(g, n, d)


def hessian_vector_via_identity(f, A, V, h=None):
    """Intrinsic Hessian-vector product from first-order information only.

    Uses ``H V = grad_W <grad_W f, V> + pi_A(grad_W f(A) (A o V))`` where
    the first gradient is taken by central differences of the extension
    ``X -> <grad f(X) - X (X o grad f(X)), V>`` with step
    ``h = 1e-5 * max(1, ||A||)``, then projected to the tangent space.
    """
    A = np.asarray(A, dtype=float)
    V = np.asarray(V, dtype=float)
    if h is None:
        h = 1e-5 * max(1.0, hs_norm(A))
    grad_psi = tangent_project(A, _psi_gradient_fd(f, A, V, h))
    g = intrinsic_gradient(f, A)
    return grad_psi + tangent_project(A, g @ sym_product(A, V))


def second_order_modulus(f, A, zero_tol=ZERO_GRAD_TOL):
    """Local Lipschitz constant of ``A -> |grad_W f(A)|``.

    Equals ``|H g| / |g|`` for the intrinsic gradient ``g`` and Hessian
    ``H``; when ``|g|`` falls below ``zero_tol * max(1, ||H||_op)`` the
    operator norm of ``H`` is returned instead.
    """
    H = intrinsic_hessian(f, A)
    hop = float(np.linalg.norm(H, 2))
    g = vec(intrinsic_gradient(f, A))
    gn = np.linalg.norm(g)
    if gn <= zero_tol * max(1.0, hop):
        return hop
    return float(np.linalg.norm(H @ g) / gn)


def retract(A, V, t):
    """Polar retraction ``(A + tV) ((A + tV)^T (A + tV))^{-1/2}``."""
    Y = np.asarray(A, dtype=float) + t * np.asarray(V, dtype=float)
    Q, ok = polar_factor(Y)
    if not np.all(ok):
        raise ManifoldError(f"A + tV is numerically rank deficient at t={t}")
    return Q
