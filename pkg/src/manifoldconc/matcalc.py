"""Dense matrix calculus: vectorization, Kronecker products, commutation
matrices, symmetric products and the Hilbert-Schmidt / operator norms.

All index arithmetic uses column-major ``vec``: for an ``n x m`` matrix ``A``
the entry ``A[i, j]`` sits at position ``i + j*n`` of ``vec(A)``.
"""
from typing import NamedTuple

import numpy as np

from .errors import DimensionError

__all__ = [
    "vec", "mat", "commutation_perm", "commutation_matrix", "kron",
    "sym_product", "commutator", "hs_norm", "op_norm", "OpNorm",
    "inner",
]


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entries are not admitted")


def vec(A):
    """Stack the columns of ``A`` into one vector.

    Examples
    --------
    >>> vec(np.array([[1, 2], [3, 4]]))
    array([1, 3, 2, 4])
    """
    A = np.asarray(A)
    if A.ndim == 1:
        return A.copy()
    if A.ndim != 2:
        raise DimensionError(f"vec expects a matrix, got shape {A.shape}")
    return A.reshape(-1, order="F")


def mat(v, n, m):
    """Inverse of :func:`vec`: reshape a length ``n*m`` vector into ``n x m``."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n * m:
        raise DimensionError(f"cannot reshape vector of size {v.size} into {n}x{m}")
    return v.reshape((n, m), order="F")


def commutation_perm(n, m):
    """Index map of the commutation matrix ``K_{n,m}``.

    Returns ``perm`` with ``vec(A.T) == vec(A)[perm]`` for every ``n x m``
    matrix ``A``; row ``r`` of ``K_{n,m}`` has its single one in column
    ``perm[r]``.
    """
    if n < 1 or m < 1:
        raise DimensionError("commutation matrix needs n, m >= 1")
    # vec(A.T)[j + i*m] = A[i, j] = vec(A)[i + j*n]
    i, j = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    perm = np.empty(n * m, dtype=np.intp)
    perm[(j + i * m).ravel()] = (i + j * n).ravel()
    return perm


def commutation_matrix(n, m):
    """Dense ``nm x nm`` commutation matrix ``K_{n,m}``."""
    perm = commutation_perm(n, m)
    K = np.zeros((n * m, n * m))
    K[np.arange(n * m), perm] = 1.0
    return K


def kron(A, B):
    """Kronecker product ``A (x) B`` of two matrices."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_finite(A, B)
    return np.kron(A, B)


def _T(M):
    return np.swapaxes(M, -1, -2)


def sym_product(M, N):
    """Symmetric product ``(M^T N + N^T M) / 2``.

    Broadcasts over leading axes, so ``M`` and ``N`` may be stacks of
    ``n x d`` matrices.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.shape[-2:] != N.shape[-2:]:
        raise DimensionError(f"shape mismatch {M.shape} vs {N.shape}")
    X = _T(M) @ N
    return 0.5 * (X + _T(X))


def commutator(M, N):
    """Matrix commutator ``[M, N] = MN - NM``."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if M.shape[-1] != M.shape[-2] or M.shape[-2:] != N.shape[-2:]:
        raise DimensionError(f"commutator needs equal square matrices, got {M.shape}, {N.shape}")
    return M @ N - N @ M


def inner(M, N):
    """Frobenius inner product ``tr(M^T N)`` over the last two axes."""
    return np.einsum("...ij,...ij->...", M, N)


def hs_norm(T):
    """Hilbert-Schmidt norm: Euclidean norm of all entries of a tensor."""
    T = np.asarray(T, dtype=float)
    return float(np.sqrt(np.sum(T * T)))


class OpNorm(NamedTuple):
    """Operator norm bracket ``lower <= ||T||_op <= upper``.

    ``exact`` is True when ``lower`` is the exact value (orders 1 and 2);
    otherwise ``lower`` comes from power iteration and ``upper`` is the
    Hilbert-Schmidt norm.
    """
    lower: float
    upper: float
    exact: bool


def _contract_all_but(T, xs, skip):
    out = T
    # contract from the last mode down so axis positions stay valid
    for j in reversed(range(T.ndim)):
        if j != skip:
            out = np.tensordot(out, xs[j], axes=([j], [0]))
    return out


def op_norm(T, restarts=20, max_iter=200, tol=1e-10, rng=None):
    """Operator norm ``sup T(x1, ..., xk)`` over unit vectors.

    Orders 1 and 2 are exact (Euclidean norm, largest singular value). For
    order ``k >= 3`` the problem is NP-hard in general; alternating rank-one
    power iteration with ``restarts`` random starts gives a lower bound and
    the Hilbert-Schmidt norm serves as the upper bound.

    Returns
    -------
    OpNorm
    """
    T = np.asarray(T, dtype=float)
    _check_finite(T)
    hs = hs_norm(T)
    if T.ndim == 0:
        v = abs(float(T))
        return OpNorm(v, v, True)
    if T.ndim == 1:
        return OpNorm(hs, hs, True)
    if T.ndim == 2:
        s = float(np.linalg.norm(T, 2)) if T.size else 0.0
        return OpNorm(s, s, True)
    if hs == 0.0:
        return OpNorm(0.0, 0.0, True)

    rng = np.random.default_rng(0) if rng is None else rng
    best = 0.0
    for _ in range(restarts):
        xs = [rng.standard_normal(m) for m in T.shape]
        xs = [x / np.linalg.norm(x) for x in xs]
        val = 0.0
        for _ in range(max_iter):
            for j in range(T.ndim):
                y = _contract_all_but(T, xs, j)
                ny = np.linalg.norm(y)
                if ny == 0.0:
                    y = rng.standard_normal(y.shape)
                    ny = np.linalg.norm(y)
                xs[j] = y / ny
            new = abs(float(_contract_all_but(T, xs, T.ndim - 1) @ xs[-1]))
            if abs(new - val) <= tol * max(1.0, new):
                val = new
                break
            val = new
        best = max(best, val)
    return OpNorm(min(best, hs), hs, False)
