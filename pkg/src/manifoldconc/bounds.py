"""Closed-form tail bounds and functional-inequality constants for Haar
measure on Stiefel and Grassmann manifolds.

Every tail evaluator returns a :class:`TailBound`: a callable curve
``t -> bound`` carrying its formula as a provenance string and the norm
inputs it was built from. Constants of the form ``r * e^2 / log 2`` are
kept as the exact rational ``r`` and evaluated only at call time.

``constant_factor`` multiplies the leading constant of any curve; values
below 1 make the bound tighter than proved and exist to check that Monte
Carlo domination tests have power.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ValidityError

__all__ = [
    "TailBound", "E2_LOG2", "lipschitz_tail", "second_order_tail",
    "second_order_tail_centered_grad", "kth_order_tail", "exp_moment_lhs",
    "hanson_wright_tail", "linear_form_tail", "norm_conc_tail",
    "dist_subspace_tail", "grassmann_dist_tail", "lsi_constant",
    "poincare_constant", "lp_growth_rhs", "MANIFOLDS",
]

E2_LOG2 = math.e ** 2 / math.log(2)
MANIFOLDS = ("stiefel", "grassmann")


def _ec(r):
    """``r * e^2 / log 2`` for a rational ``r``."""
    return float(Fraction(r)) * E2_LOG2


def _check_manifold(manifold):
    if manifold not in MANIFOLDS:
        raise ValueError(f"manifold must be one of {MANIFOLDS}, got {manifold!r}")


@dataclass
class TailBound:
    """A survival-probability bound ``t -> curve(t)``.

    Attributes
    ----------
    curve : callable
        Vectorized in ``t``.
    provenance : str
        The formula, with its constants, in plain text.
    inputs : dict
        Named parameters (norms, dimensions) the curve was built from.
    center : float or None
        The centering the bound refers to, when it has a canonical one.
    prefactor : float
        ``a`` in the curve form ``a exp(-E(t) / constant_factor)``.
    """
    curve: Callable
    provenance: str
    inputs: dict = field(default_factory=dict)
    center: float = None
    prefactor: float = 2.0

    def __call__(self, t):
        out = self.curve(np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def to_csv(self, path, t):
        t = np.asarray(t, dtype=float)
        with open(path, "w") as fh:
            fh.write(f"# bound={self.provenance}\n")
            fh.write("t,bound\n")
            for ti, bi in zip(t, np.atleast_1d(self(t))):
                fh.write(f"{float(ti)!r},{float(bi)!r}\n")


def _safe_ratio(num, den):
    """``num / den`` with ``x/0 = inf`` for ``x > 0`` and ``0/0 = 0``."""
    num = np.asarray(num, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0),
                       np.where(num > 0, np.inf, 0.0))
    return out


def _two_exp(exponent):
    return np.minimum(2.0, 2.0 * np.exp(-exponent))


def lipschitz_tail(L, n, manifold="stiefel", constant_factor=1.0):
    """One-sided bound ``exp(-(n-1) t^2 / (c L^2))`` for an ``L``-Lipschitz
    function, ``c = 8`` (Stiefel) or ``16`` (Grassmann)."""
    _check_manifold(manifold)
    if n < 2 or not L > 0:
        raise ValidityError("lipschitz_tail needs n >= 2 and L > 0")
    c = (8 if manifold == "stiefel" else 16) * constant_factor
    return TailBound(
        lambda t: np.exp(-(n - 1) * t ** 2 / (c * L ** 2)),
        f"{manifold} lipschitz: exp(-(n-1)t^2/({c:g}L^2))",
        {"L": L, "n": n, "manifold": manifold}, prefactor=1.0)


def _second_order_C(manifold):
    return Fraction(16) if manifold == "stiefel" else Fraction(32)


def second_order_tail(n, g2, hop, manifold="stiefel", constant_factor=1.0):
    """``2 exp(-(n-2)/C min(t^2/g2^2, t/hop))`` with ``C = 16 e^2/log 2``
    (Stiefel) or ``32 e^2/log 2`` (Grassmann).

    ``g2`` is the L2 norm of the intrinsic gradient and ``hop`` the sup of
    the intrinsic Hessian operator norm. The bound is for the centered
    functional; centering is the caller's job.
    """
    _check_manifold(manifold)
    if n < 3:
        raise ValidityError("second-order bound needs n >= 3", threshold=3)
    r = _second_order_C(manifold)
    C = _ec(r) * constant_factor

    def curve(t):
        e = np.minimum(_safe_ratio(t ** 2, g2 ** 2), _safe_ratio(t, hop))
        return _two_exp((n - 2) / C * e)

    return TailBound(curve,
                     f"{manifold} second order: 2exp(-(n-2)/C min(t^2/g2^2, t/hop)), "
                     f"C={r}e^2/log2*{constant_factor:g}",
                     {"n": n, "g2": g2, "hop": hop, "manifold": manifold})


def second_order_tail_centered_grad(n, d, hess_hs2, hop, manifold="stiefel",
                                    constant_factor=1.0):
    """Second-order bound for functionals whose intrinsic gradient has mean
    zero: ``g2`` is replaced by ``sqrt(8/(n-2-8d)) * hess_hs2`` (Stiefel) or
    ``sqrt(16/(n-2-16d)) * hess_hs2`` (Grassmann).

    Raises
    ------
    ValidityError
        When ``n - 2 - 8d <= 0`` (resp. ``n - 2 - 16d <= 0``).
    """
    _check_manifold(manifold)
    c = 8 if manifold == "stiefel" else 16
    gap = n - 2 - c * d
    if gap <= 0:
        raise ValidityError(
            f"needs n - 2 - {c}d > 0, got n={n}, d={d}", threshold=2 + c * d)
    g2 = math.sqrt(c / gap) * hess_hs2
    b = second_order_tail(n, g2, hop, manifold, constant_factor)
    b.inputs.update({"d": d, "hess_hs2": hess_hs2})
    b.provenance += f"; g2=sqrt({c}/(n-2-{c}d))*|H|_HS,2"
    return b


def kth_order_tail(n, k, l2norms, kop, manifold="stiefel", constant_factor=1.0):
    """Order-``k`` bound from Euclidean derivatives::

        2 exp(-(n-2)/(C k^2) min(min_l t^(2/l)/a_l^(2/l), t^(2/k)/kop^(2/k)))

    with ``a_l = ||f^(l)||_op,2`` for ``l < k`` (``l2norms``), ``kop`` the
    sup of ``||f^(k)||_op`` and ``C = 4 e^2/log 2`` (Stiefel) or
    ``8 e^2/log 2`` (Grassmann).
    """
    _check_manifold(manifold)
    l2norms = list(l2norms)
    if k < 1 or len(l2norms) != k - 1:
        raise ValueError(f"need k >= 1 and k-1 L2 norms, got k={k}, {len(l2norms)}")
    if n < 3:
        raise ValidityError("k-th order bound needs n >= 3", threshold=3)
    r = Fraction(4) if manifold == "stiefel" else Fraction(8)
    C = _ec(r) * constant_factor

    def curve(t):
        terms = [_safe_ratio(t ** (2.0 / ell), a ** (2.0 / ell))
                 for ell, a in enumerate(l2norms, start=1)]
        terms.append(_safe_ratio(t ** (2.0 / k), kop ** (2.0 / k)))
        e = terms[0]
        for x in terms[1:]:
            e = np.minimum(e, x)
        return _two_exp((n - 2) / (C * k ** 2) * e)

    return TailBound(curve,
                     f"{manifold} order-{k}: 2exp(-(n-2)/(Ck^2) min_l t^(2/l)/|f^(l)|^(2/l)), "
                     f"C={r}e^2/log2*{constant_factor:g}",
                     {"n": n, "k": k, "l2norms": l2norms, "kop": kop, "manifold": manifold})


def exp_moment_lhs(samples, n, k=2, manifold="stiefel"):
    """Monte Carlo estimate of ``E exp((n-2)/(c e) |f|^(2/k))``,
    ``c = 32`` (Stiefel) or ``64`` (Grassmann).

    Under the normalization conditions of the matching exponential-moment
    bound the expectation is at most 2; callers certify those conditions.

    Returns
    -------
    estimate, stderr : float
    """
    _check_manifold(manifold)
    c = 32 if manifold == "stiefel" else 64
    f = np.abs(np.asarray(samples, dtype=float))
    z = np.exp((n - 2) / (c * math.e) * f ** (2.0 / k))
    se = float(z.std(ddof=1) / math.sqrt(z.size)) if z.size > 1 else 0.0
    return float(z.mean()), se


_HW_C = {1: Fraction(128), 2: Fraction(32), 3: Fraction(256)}


def hanson_wright_tail(n, d, variant, norms, constant_factor=1.0):
    """Hanson-Wright type bounds for ``f(A) = vec(A)^T M vec(A)`` around
    ``tr(M)/n`` under Haar measure on ``W_{n,d}``.

    Parameters
    ----------
    variant : {1, 2, 3}
        1: ``norms = {"M_hs", "M_op"}``, ``C = 128 e^2/log 2``;
        2: ``norms = {"PU_hs2", "PBP_opinf"}``, ``C = 32 e^2/log 2``;
        3: ``norms = {"PBP_hs2", "PBP_opinf"}``, ``C = 256 e^2/log 2``,
        requires ``n > 8d + 2``.
    """
    if variant not in _HW_C:
        raise ValueError(f"variant must be 1, 2 or 3, got {variant!r}")
    need = {1: ("M_hs", "M_op"), 2: ("PU_hs2", "PBP_opinf"), 3: ("PBP_hs2", "PBP_opinf")}[variant]
    missing = [k for k in need if k not in norms]
    if missing:
        raise ValueError(f"Hanson-Wright variant {variant} is missing norms {missing}")
    if variant == 3 and n - 2 - 8 * d <= 0:
        raise ValidityError(f"variant 3 needs n > 8d + 2, got n={n}, d={d}",
                            threshold=8 * d + 2)
    if n < 3:
        raise ValidityError("Hanson-Wright bounds need n >= 3", threshold=3)
    C = _ec(_HW_C[variant]) * constant_factor
    a, b = (float(norms[k]) for k in need)
    sub = {1: (n - 2) ** 2, 2: n - 2, 3: (n - 2 - 8 * d) ** 2}[variant]

    def curve(t):
        e = np.minimum(_safe_ratio(sub * t ** 2, a ** 2), _safe_ratio((n - 2) * t, b))
        return _two_exp(e / C)

    labels = {1: "((n-2)^2t^2/|M|_HS^2, (n-2)t/|M|_op)",
              2: "((n-2)t^2/|PU|_HS,2^2, (n-2)t/|PBP|_op,inf)",
              3: "((n-2-8d)^2t^2/|PBP|_HS,2^2, (n-2)t/|PBP|_op,inf)"}
    return TailBound(curve,
                     f"hanson-wright variant {variant}: 2exp(-min{labels[variant]}/C), "
                     f"C={_HW_C[variant]}e^2/log2*{constant_factor:g}; center tr(M)/n",
                     {"n": n, "d": d, "variant": variant, **{k: float(norms[k]) for k in need}})


def linear_form_tail(n, pv_norm, constant_factor=1.0):
    """``2 exp(-(n-1) t^2 / (8 s^2))`` for ``<V, A>`` with
    ``s = sup_A |pi_A V|``."""
    c = 8 * constant_factor
    return TailBound(lambda t: _two_exp((n - 1) * _safe_ratio(t ** 2, c * pv_norm ** 2)),
                     f"linear form: 2exp(-(n-1)t^2/({c:g}|P_A V|_HS,inf^2))",
                     {"n": n, "pv_norm": pv_norm}, center=0.0)


def norm_conc_tail(n, M_op, center=None, constant_factor=1.0):
    """``2 exp(-(n-2) t^2 / (C |M|_op^2))``, ``C = 384 e^2/log 2``, for
    ``|M vec(A)|`` around ``|M|_HS/sqrt(n)``."""
    C = _ec(384) * constant_factor
    return TailBound(lambda t: _two_exp((n - 2) * _safe_ratio(t ** 2, C * M_op ** 2)),
                     f"norm concentration: 2exp(-(n-2)t^2/(C|M|_op^2)), "
                     f"C=384e^2/log2*{constant_factor:g}; center |M|_HS/sqrt(n)",
                     {"n": n, "M_op": M_op}, center=center)


def dist_subspace_tail(n, d, m=None, constant_factor=1.0):
    """``2 exp(-(n-2) t^2 / C)``, ``C = 384 e^2/log 2``, for the distance
    of a Haar frame to a fixed ``m``-dimensional subspace; centered at
    ``sqrt(m d / n)`` (``d / sqrt(n)`` when ``m = d``)."""
    m = d if m is None else m
    b = norm_conc_tail(n, 1.0, center=math.sqrt(m * d / n), constant_factor=constant_factor)
    b.inputs.update({"d": d, "m": m})
    b.provenance = (f"subspace distance: 2exp(-(n-2)t^2/C), C=384e^2/log2*{constant_factor:g}; "
                    f"center sqrt(md/n)")
    return b


def grassmann_dist_tail(n, d, constant_factor=1.0):
    """``2 exp(-(n-1) t^2 / (64 d))`` for ``|P - P_F|^2`` around
    ``2d(1 - d/n)``."""
    c = 64 * constant_factor
    return TailBound(lambda t: _two_exp((n - 1) * t ** 2 / (c * d)),
                     f"grassmann distance: 2exp(-(n-1)t^2/({c:g}d)); center 2d(1-d/n)",
                     {"n": n, "d": d}, center=2.0 * d * (1.0 - d / n))


def lsi_constant(n, manifold="stiefel", d=None):
    """Log-Sobolev constant ``4/(n-2)`` (Stiefel) or ``8/(n-2)``
    (Grassmann). The entropy inequality reads
    ``Ent(f^2) <= 2 c E|grad f|^2``.

    ``d == n`` is rejected: the orthogonal group is disconnected.
    """
    _check_manifold(manifold)
    if d is not None and d >= n:
        raise ValidityError(f"no log-Sobolev inequality for d = n = {n}", threshold=n)
    if n < 3:
        raise ValidityError("log-Sobolev constant needs n >= 3", threshold=3)
    return (4.0 if manifold == "stiefel" else 8.0) / (n - 2)


def poincare_constant(n, manifold="stiefel", d=None):
    """Same constant as :func:`lsi_constant`: ``Var f <= c E|grad f|^2``."""
    return lsi_constant(n, manifold, d)


def lp_growth_rhs(p, n, norm2, gradp_norm, manifold="stiefel"):
    """``sqrt(|g|_2^2 + c (p-2)/(n-2) |grad g|_p^2)`` with ``c = 4``
    (Stiefel) or ``8`` (Grassmann); an upper bound for ``|g|_p``."""
    _check_manifold(manifold)
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    c = 4.0 if manifold == "stiefel" else 8.0
    return math.sqrt(norm2 ** 2 + c * (p - 2) / (n - 2) * gradp_norm ** 2)
