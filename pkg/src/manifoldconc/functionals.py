"""Concrete test functionals with analytic ambient derivatives.

``value`` and ``grad`` broadcast over leading (sample) axes so Monte Carlo
code can evaluate whole batches; ``hess`` takes a single point.
"""
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import stiefel
from .errors import DimensionError
from .matcalc import commutation_perm, hs_norm, inner, kron, sym_product

log = logging.getLogger(__name__)

__all__ = [
    "LinearForm", "PolynomialChaos", "QuadraticForm", "TraceBilinear",
    "eval_chaos", "quad_value_grad_hess", "det_form_d2", "subspace_matrix",
    "dist_to_subspace", "grassmann_dist_sq", "norm_functional", "norm_centering",
    "MomentTable", "entry_moment_table", "symmetrize",
]


def _bvec(X):
    """Column-major vec over the last two axes."""
    X = np.asarray(X, dtype=float)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def _bmat(x, shape):
    n, m = shape
    return np.swapaxes(x.reshape(x.shape[:-1] + (m, n)), -1, -2)


def symmetrize(T):
    """Average a tensor over all permutations of its axes."""
    T = np.asarray(T, dtype=float)
    perms = list(itertools.permutations(range(T.ndim)))
    return sum(np.transpose(T, p) for p in perms) / len(perms)


class LinearForm:
    """``X -> <V, X>``."""
    provenance = "analytic"

    def __init__(self, V):
        self.V = np.asarray(V, dtype=float)
        self.shape = self.V.shape

    def value(self, X):
        return inner(self.V, X)

    def grad(self, X):
        return np.broadcast_to(self.V, np.shape(X)).copy()

    def hess(self, X):
        k = self.V.size
        return np.zeros((k, k))


class PolynomialChaos:
    """Homogeneous polynomial ``sum c_{a1..ak} x_{a1} ... x_{ak}`` of
    ``x = vec(X)``.

    The coefficient tensor is symmetrized on construction, so the ``l``-th
    derivative is ``k!/(k-l)!`` times ``c`` contracted ``k - l`` times with
    ``x``.

    Parameters
    ----------
    coef : array_like
        Order-``k`` tensor with every dimension equal to ``n*m``.
    shape : tuple of int
        ``(n, m)``, the matrix shape of the argument.
    """
    provenance = "analytic"

    def __init__(self, coef, shape):
        coef = np.asarray(coef, dtype=float)
        size = shape[0] * shape[1]
        if any(s != size for s in coef.shape):
            raise DimensionError(f"coefficient dims {coef.shape} do not match size {size}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("non-finite coefficients")
        sym = symmetrize(coef)
        if coef.ndim > 1 and not np.allclose(sym, coef, rtol=0, atol=1e-14):
            log.info("chaos coefficients were not symmetric; symmetrized")
        self.coef = sym
        self.order = coef.ndim
        self.shape = tuple(shape)

    def _contract(self, x, times):
        out = self.coef
        for _ in range(times):
            out = np.tensordot(out, x, axes=([0], [0]))
        return out

    def derivative(self, X, ell):
        """``ell``-th derivative tensor at a single point (order ``ell``)."""
        k = self.order
        if ell > k:
            return np.zeros((self.coef.shape[0],) * ell)
        x = _bvec(X)
        return math.perm(k, ell) * self._contract(x, k - ell)

    def _batch_contract(self, x, times):
        # first contraction batches the sample axis in front, the rest
        # contract the trailing tensor axis sample by sample
        out = np.tensordot(x, self.coef, axes=([-1], [0]))
        for _ in range(times - 1):
            out = np.einsum("b...i,bi->b...", out, x)
        return out

    def value(self, X):
        x = _bvec(X)
        if x.ndim == 1:
            return float(self._contract(x, self.order))
        return self._batch_contract(x.reshape(-1, x.shape[-1]), self.order).reshape(x.shape[:-1])

    def grad(self, X):
        x = _bvec(X)
        k = self.order
        if x.ndim == 1:
            return _bmat(k * self._contract(x, k - 1), self.shape)
        if k == 1:
            return _bmat(np.broadcast_to(self.coef, x.shape).copy(), self.shape)
        flat = x.reshape(-1, x.shape[-1])
        g = k * self._batch_contract(flat, k - 1)
        return _bmat(g.reshape(x.shape), self.shape)

    def hess(self, X):
        return self.derivative(X, 2)


def eval_chaos(c, A):
    """Value, ambient gradient and ambient Hessian of a chaos at ``A``."""
    return c.value(A), c.grad(A), c.hess(A)


class QuadraticForm:
    """``X -> vec(X)^T M vec(X)`` with symmetric ``M`` (symmetrized on
    construction)."""
    provenance = "analytic"

    def __init__(self, M, shape):
        M = np.asarray(M, dtype=float)
        size = shape[0] * shape[1]
        if M.shape != (size, size):
            raise DimensionError(f"M has shape {M.shape}, expected {(size, size)}")
        self.M = 0.5 * (M + M.T)
        self.shape = tuple(shape)

    def U(self, X):
        """``mat(M vec(X))``; the ambient gradient is ``2U``."""
        return _bmat(_bvec(X) @ self.M, self.shape)

    def value(self, X):
        x = _bvec(X)
        return np.einsum("...i,...i->...", x @ self.M, x)

    def grad(self, X):
        return 2.0 * self.U(X)

    def hess(self, X):
        return 2.0 * self.M

    def trace_centering(self):
        """Exact Haar mean ``tr(M)/n`` on the Stiefel manifold."""
        return float(np.trace(self.M)) / self.shape[0]


def quad_value_grad_hess(Q, A):
    """Return ``(value, U, B)`` with ``U = mat(M vec A)`` and
    ``B = M - (A o U) (x) I_n``.

    The intrinsic gradient is ``2 pi_A U`` and the intrinsic Hessian is the
    tangent compression of ``2B``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != Q.shape:
        raise DimensionError(f"point shape {A.shape} vs form shape {Q.shape}")
    U = Q.U(A)
    B = Q.M - kron(sym_product(A, U), np.eye(A.shape[0]))
    return float(Q.value(A)), U, B


class TraceBilinear:
    """``P -> tr(C P D P)`` for symmetric ``n x n`` matrices ``C, D``.

    A quadratic functional on the Grassmannian whose derivatives cost
    ``O(n^3)``: gradient ``C P^T D + D P^T C``, Hessian
    ``(D (x) C + C (x) D) K_{n,n}``. At symmetric ``P`` the gradient is
    ``CPD + DPC``.
    """
    provenance = "analytic"

    def __init__(self, C, D):
        self.C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
        self.D = 0.5 * (np.asarray(D, dtype=float) + np.asarray(D, dtype=float).T)
        if self.C.shape != self.D.shape:
            raise DimensionError("C and D must have the same shape")
        self.shape = self.C.shape

    def value(self, P):
        return np.einsum("...ij,...ji->...", self.C @ P, self.D @ P)

    def grad(self, P):
        Pt = np.swapaxes(P, -1, -2)
        return self.C @ Pt @ self.D + self.D @ Pt @ self.C

    def hess(self, P):
        n = self.shape[0]
        H = np.kron(self.D, self.C) + np.kron(self.C, self.D)
        return H[:, np.argsort(commutation_perm(n, n))]


def det_form_d2(C):
    """Quadratic form whose value at ``A`` in ``W_{n,2}`` is ``det(A^T C)``.

    ``M_{ij,kl} = (c_ij c_kl - c_il c_kj) / 2`` in ``vec`` indexing.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[1] != 2:
        raise DimensionError(f"det form needs an n x 2 matrix, got {C.shape}")
    n = C.shape[0]
    M4 = np.einsum("ij,kl->ijkl", C, C) - np.einsum("il,kj->ijkl", C, C)
    # reorder (i, j, k, l) -> vec indices (i + j n, k + l n)
    M = 0.5 * M4.transpose(1, 0, 3, 2).reshape(2 * n, 2 * n)
    return QuadraticForm(M, (n, 2))


def _check_projection(Q, tol=1e-8):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionError(f"projection must be square, got {Q.shape}")
    if hs_norm(Q - Q.T) > tol or hs_norm(Q @ Q - Q) > tol:
        raise ValueError("Q is not an orthogonal projection")
    return Q


def subspace_matrix(Q, d, mode="onto"):
    """``I_d (x) Q'`` with ``Q' = Q`` (``"onto"``) or ``I - Q``
    (``"complement"``)."""
    Q = _check_projection(Q)
    if mode == "complement":
        Q = np.eye(Q.shape[0]) - Q
    elif mode != "onto":
        raise ValueError(f"mode must be 'onto' or 'complement', got {mode!r}")
    return np.kron(np.eye(d), Q)


def dist_to_subspace(A, Q, mode="onto"):
    """``||Q' A||_HS`` for the projection ``Q`` of a fixed subspace ``F``.

    ``"complement"`` gives the point-to-subspace distance
    ``(sum_j dist(a_j, F)^2)^{1/2}``; ``"onto"`` gives the norm of the
    projection of the frame onto ``F``. Both are invariant under
    ``A -> A O`` for orthogonal ``O``. Broadcasts over leading axes of ``A``.
    """
    Q = _check_projection(Q)
    if mode == "complement":
        Q = np.eye(Q.shape[0]) - Q
    elif mode != "onto":
        raise ValueError(f"mode must be 'onto' or 'complement', got {mode!r}")
    return np.linalg.norm(Q @ np.asarray(A, dtype=float), axis=(-2, -1))


def grassmann_dist_sq(P, PF):
    """``||P - P_F||_HS^2`` computed as ``2 (d - <P, P_F>)``."""
    P = np.asarray(P, dtype=float)
    PF = np.asarray(PF, dtype=float)
    if P.shape[-2:] != PF.shape:
        raise DimensionError(f"shape mismatch {P.shape} vs {PF.shape}")
    d = np.trace(PF)
    return 2.0 * (d - inner(P, PF))


def norm_functional(M, A):
    """``|M vec(A)|`` (broadcasts over leading axes of ``A``)."""
    M = np.asarray(M, dtype=float)
    x = _bvec(A)
    if M.shape[1] != x.shape[-1]:
        raise DimensionError(f"M has {M.shape[1]} columns, vec(A) has {x.shape[-1]} entries")
    return np.linalg.norm(x @ M.T, axis=-1)


def norm_centering(M, n):
    """``||M||_HS / sqrt(n)``: the root mean square of ``|M vec(A)|``."""
    return hs_norm(M) / math.sqrt(n)


@dataclass(frozen=True)
class MomentTable:
    """Exact low-order moments of Haar Stiefel/Grassmann entries."""
    n: int
    d: int
    mean_entry: float
    var_entry: float
    cross_second: float
    third: float
    mean_P_diag: float
    mean_P_offdiag: float
    sum_of_squares: float

    def second(self, i, j, k, l):
        """``E A_ij A_kl``."""
        return self.var_entry if (i, j) == (k, l) else 0.0


def entry_moment_table(n, d):
    return MomentTable(n=n, d=d, mean_entry=0.0, var_entry=1.0 / n,
                       cross_second=0.0, third=0.0, mean_P_diag=d / n,
                       mean_P_offdiag=0.0, sum_of_squares=float(d))


def intrinsic_quadratic_parts(Q, A):
    """``(2 pi_A U, Pi (2B) Pi)`` for a Stiefel quadratic form."""
    _, U, B = quad_value_grad_hess(Q, A)
    Pi = stiefel.projection_matrix(A)
    return 2.0 * stiefel.tangent_project(A, U), 2.0 * (Pi @ B @ Pi)
