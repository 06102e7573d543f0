"""Smooth functionals on an ambient matrix space and finite-difference helpers.

A functional is anything exposing ``value(X)``, ``grad(X)`` (same shape as
``X``) and ``hess(X)`` (a symmetric ``size x size`` matrix acting on
``vec(X)``). The manifold modules only rely on that duck type.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .matcalc import mat, vec

__all__ = ["SmoothFunctional", "fd_gradient", "fd_hessian", "finite_difference",
           "DEFAULT_STEP"]

DEFAULT_STEP = 1e-5


@dataclass(frozen=True)
class SmoothFunctional:
    """A functional given by value, gradient and Hessian callables.

    ``provenance`` is ``"analytic"`` or ``"finite-difference"``.
    """
    value: Callable
    grad: Callable
    hess: Callable
    provenance: str = "analytic"


def fd_gradient(fun, X, h=DEFAULT_STEP):
    """Central-difference gradient of the scalar function ``fun`` at ``X``."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    x = vec(X)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(mat(x + e, n, m)) - fun(mat(x - e, n, m))) / (2 * h)
    return mat(g, n, m)


def fd_hessian(grad, X, h=DEFAULT_STEP):
    """Symmetrized central-difference Jacobian of a gradient field at ``X``."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    x = vec(X)
    H = np.empty((x.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        H[:, k] = (vec(grad(mat(x + e, n, m))) - vec(grad(mat(x - e, n, m)))) / (2 * h)
    return 0.5 * (H + H.T)


def finite_difference(value, h=DEFAULT_STEP):
    """Wrap a bare value function as a :class:`SmoothFunctional`.

    The Hessian differences the (itself differenced) gradient, so it is
    only accurate to about ``sqrt(eps)``; use the ``1e-4`` class of
    tolerances when comparing it to analytic Hessians.
    """
    def grad(X):
        return fd_gradient(value, X, h)

    def hess(X):
        return fd_hessian(grad, X, np.sqrt(h) * 1e-1)

    return SmoothFunctional(value, grad, hess, provenance="finite-difference")
