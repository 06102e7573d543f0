"""Deterministic Monte Carlo engine.

Samples are drawn in fixed-size chunks. Chunk ``c`` of stream ``s`` uses its
own counter-based generator seeded by ``(seed, s, c)``, so the sample set
depends only on the seed and the chunk size, never on how many worker
threads evaluate the chunks. Partial results are merged in chunk order.
"""
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from . import grassmann, stiefel
from .bounds import TailBound, lsi_constant, lp_growth_rhs, poincare_constant
from .errors import ManifoldError
from .functionals import entry_moment_table
from .matcalc import hs_norm, inner

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig", "TailReport", "Verdict", "chunk_rng", "map_chunks",
    "sample_points", "empirical_tail", "clopper_pearson_upper", "clopper_pearson_lower",
    "dominates", "critical_constant_factor",
    "moment_audit", "MomentRow", "taylor_audit", "TaylorRow", "poincare_audit",
    "lsi_audit", "lp_growth_audit", "AuditResult", "LpRow", "value_grad_samples",
    "CHUNK_SIZE", "STREAM_MAIN", "STREAM_PREPASS", "STREAM_FIXED",
]

CHUNK_SIZE = 4096
MIN_SAMPLES = 1000
CP_LEVEL = 0.99

# substream ids: independent draws for the tail pass, the norm pre-pass and
# fixed experiment parameters (random matrices, index subsets)
STREAM_MAIN = 0
STREAM_PREPASS = 1
STREAM_FIXED = 2
STREAM_TAYLOR = 3


def chunk_rng(seed, stream, chunk):
    """Philox generator keyed by ``(seed, stream, chunk)``."""
    if seed is None:
        raise ValueError("a seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


def _chunk_sizes(n_samples, chunk_size):
    full, rest = divmod(int(n_samples), int(chunk_size))
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(fn, n_samples, seed, stream=STREAM_MAIN, chunk_size=CHUNK_SIZE, threads=1):
    """Evaluate ``fn(rng, size, offset)`` on every chunk; results in chunk order."""
    sizes = _chunk_sizes(n_samples, chunk_size)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)

    def work(c):
        return fn(chunk_rng(seed, stream, c), sizes[c], int(offsets[c]))

    if threads <= 1 or len(sizes) == 1:
        return [work(c) for c in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(len(sizes))))


def sample_points(manifold, n, d, rng, size):
    """``size`` Haar points: Stiefel frames or Grassmann projections."""
    if manifold == "stiefel":
        return stiefel.sample_uniform(n, d, rng, size=size)
    if manifold == "grassmann":
        return grassmann.sample_uniform(n, d, rng, size=size)
    raise ValueError(f"unknown manifold {manifold!r}")


def clopper_pearson_upper(k, N, level=CP_LEVEL):
    """Upper end of the two-sided exact binomial interval at ``level``."""
    k = np.asarray(k)
    alpha = 1.0 - level
    with np.errstate(invalid="ignore"):
        up = stats.beta.ppf(1.0 - alpha / 2, k + 1, N - k)
    return np.where(k >= N, 1.0, up)


def clopper_pearson_lower(k, N, level=CP_LEVEL):
    """Lower end of the two-sided exact binomial interval at ``level``."""
    k = np.asarray(k)
    alpha = 1.0 - level
    with np.errstate(invalid="ignore"):
        lo = stats.beta.ppf(alpha / 2, k, N - k + 1)
    return np.where(k <= 0, 0.0, lo)


@dataclass
class ExperimentConfig:
    """A tail experiment: sample, evaluate, compare against a bound.

    ``functional`` maps a batch of points (leading sample axis) to values.
    ``side`` is ``"abs"`` for ``P(|f - center| >= t)`` or ``"upper"`` for
    ``P(f - center >= t)``.
    """
    manifold: str
    n: int
    d: int
    functional: Callable
    n_samples: int
    seed: int
    grid: np.ndarray
    bound: TailBound
    center: float
    name: str = ""
    side: str = "abs"
    chunk_size: int = CHUNK_SIZE
    threads: int = 1
    norm_inputs: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.n_samples < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {self.n_samples}")
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size == 0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("t-grid must be a non-empty strictly increasing sequence")
        if self.side not in ("abs", "upper"):
            raise ValueError(f"side must be 'abs' or 'upper', got {self.side!r}")
        if self.manifold not in ("stiefel", "grassmann"):
            raise ValueError(f"unknown manifold {self.manifold!r}")


@dataclass
class TailReport:
    """Empirical survival curve paired with a bound."""
    name: str
    grid: np.ndarray
    counts: np.ndarray
    n_samples: int
    p_hat: np.ndarray
    cp_lower: np.ndarray
    cp_upper: np.ndarray
    bound: np.ndarray
    violation: np.ndarray
    significant: np.ndarray
    center: float
    mean: float
    stderr: float
    provenance: str
    norm_inputs: dict
    config: dict
    wall_time: float = 0.0

    def rows(self):
        for i in range(self.grid.size):
            yield (float(self.grid[i]), float(self.p_hat[i]), float(self.cp_upper[i]),
                   float(self.bound[i]), bool(self.violation[i]), float(self.cp_lower[i]),
                   bool(self.significant[i]))

    def csv_body(self):
        lines = ["t,p_hat,cp_upper,bound,violation,cp_lower,significant"]
        for t, p, u, b, v, lo, sig in self.rows():
            lines.append(f"{t!r},{p!r},{u!r},{b!r},{int(v)},{lo!r},{int(sig)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path, manifest_hash=""):
        with open(path, "w") as fh:
            fh.write(f"# experiment={self.name}\n")
            fh.write(f"# bound={self.provenance}\n")
            if manifest_hash:
                fh.write(f"# manifest={manifest_hash}\n")
            fh.write(self.csv_body())

    def summary(self):
        verdict = dominates(self)
        return {
            "experiment": self.name,
            "bound": self.provenance,
            "config": self.config,
            "n_samples": self.n_samples,
            "center": self.center,
            "mean": self.mean,
            "stderr": self.stderr,
            "norm_inputs": self.norm_inputs,
            "dominated": verdict.dominated,
            "offending_t": verdict.offending,
            "significant_violations": [float(t) for t, v in zip(self.grid, self.significant) if v],
            "wall_time": self.wall_time,
        }

    def to_json(self, path, manifest_hash=""):
        out = self.summary()
        out["manifest"] = manifest_hash
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def empirical_tail(cfg):
    """Run ``cfg`` and return a :class:`TailReport`.

    Survival counts are exact integers, so the report is monotone in ``t``
    by construction. ``violation`` marks grid points where the
    Clopper-Pearson 99% upper limit exceeds the bound, i.e. where domination
    is not confirmed; with zero exceedances that limit is still about
    ``5.3/N``, so bounds below it cannot be confirmed at all.
    ``significant`` marks points where even the lower limit exceeds the
    bound: a statistically detected violation.
    """
    t0 = time.perf_counter()

    def work(rng, size, offset):
        X = sample_points(cfg.manifold, cfg.n, cfg.d, rng, size)
        v = np.asarray(cfg.functional(X), dtype=float)
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ManifoldError(f"functional returned {v[bad[0]]} at sample {offset + bad[0]}")
        return v

    values = np.concatenate(map_chunks(work, cfg.n_samples, cfg.seed, STREAM_MAIN,
                                       cfg.chunk_size, cfg.threads))
    dev = values - cfg.center
    if cfg.side == "abs":
        dev = np.abs(dev)
    dev = np.sort(dev)
    N = values.size
    counts = N - np.searchsorted(dev, cfg.grid, side="left")
    p_hat = counts / N
    cp = clopper_pearson_upper(counts, N)
    lo = clopper_pearson_lower(counts, N)
    b = np.asarray(cfg.bound(cfg.grid), dtype=float)
    return TailReport(
        name=cfg.name, grid=cfg.grid, counts=counts, n_samples=N, p_hat=p_hat,
        cp_lower=lo, cp_upper=cp, bound=b, violation=cp > b, significant=lo > b,
        center=float(cfg.center),
        mean=float(values.mean()), stderr=float(values.std(ddof=1) / math.sqrt(N)),
        provenance=cfg.bound.provenance, norm_inputs=dict(cfg.norm_inputs),
        config={"manifold": cfg.manifold, "n": cfg.n, "d": cfg.d, "seed": cfg.seed,
                "n_samples": cfg.n_samples, "chunk_size": cfg.chunk_size,
                "side": cfg.side, **cfg.notes},
        wall_time=time.perf_counter() - t0)


class Verdict(NamedTuple):
    dominated: bool
    offending: list


def dominates(report):
    """Whether the bound sits above the CP upper limit at every grid point."""
    bad = [float(t) for t, v in zip(report.grid, report.violation) if v]
    return Verdict(not bad, bad)


def critical_constant_factor(report, prefactor=2.0):
    """Largest multiplier of the bound constant at which ``report`` would
    show a significant violation (CP lower limit above the bound).

    Every curve has the form ``a exp(-E(t) / factor)``, so the answer
    follows from the factor-1 curve: at each ``t`` the bound drops below
    the lower limit ``lo`` once ``factor < E(t) / log(a / lo)``. Returns 0
    when no grid point has a positive lower limit.
    """
    lo = np.asarray(report.cp_lower, dtype=float)
    b = np.asarray(report.bound, dtype=float)
    base = report.config.get("constant_factor", 1.0)
    ok = (lo > 0) & (b > 0) & (b < prefactor) & (lo < prefactor)
    if not np.any(ok):
        return 0.0
    E = np.log(prefactor / b[ok]) * base
    return float(np.max(E / np.log(prefactor / lo[ok])))


# -- moment audit ------------------------------------------------------------

class MomentRow(NamedTuple):
    name: str
    estimate: float
    stderr: float
    expected: float
    passed: bool


def moment_audit(n, d, n_samples, seed, threads=1, chunk_size=CHUNK_SIZE,
                 n_triples=20, sigmas=3.0):
    """Compare sample moments of Haar frames with their exact values.

    Rows cover every entry mean, every second moment ``E A_p A_q`` (``p <=
    q`` in vec order), third moments on a random subset of index triples,
    and the diagonal and off-diagonal means of ``P = A A^T``. A final row
    records the largest per-sample deviation of ``sum A_kl^2`` from ``d``.
    """
    table = entry_moment_table(n, d)
    s = n * d
    iu = np.triu_indices(s)
    trip = chunk_rng(seed, STREAM_FIXED, 0).integers(0, s, size=(n_triples, 3))
    pu = np.triu_indices(n, 1)

    def stats_of(A):
        x = np.swapaxes(A, -1, -2).reshape(A.shape[0], s)
        P = A @ np.swapaxes(A, -1, -2)
        second = (x[:, :, None] * x[:, None, :])[:, iu[0], iu[1]]
        third = x[:, trip[:, 0]] * x[:, trip[:, 1]] * x[:, trip[:, 2]]
        pdiag = np.diagonal(P, axis1=1, axis2=2)
        poff = P[:, pu[0], pu[1]]
        return np.concatenate([x, second, third, pdiag, poff], axis=1)

    def work(rng, size, offset):
        A = stiefel.sample_uniform(n, d, rng, size=size)
        Z = stats_of(A)
        sumsq = np.abs(np.sum(A * A, axis=(1, 2)) - d).max()
        return Z.sum(axis=0), (Z * Z).sum(axis=0), sumsq

    parts = map_chunks(work, n_samples, seed, STREAM_MAIN, chunk_size, threads)
    S1 = np.zeros_like(parts[0][0])
    S2 = np.zeros_like(parts[0][1])
    for a, b, _ in parts:
        S1 += a
        S2 += b
    N = n_samples
    mean = S1 / N
    var = np.maximum(S2 / N - mean ** 2, 0.0) * N / (N - 1)
    se = np.sqrt(var / N)

    names, expected = [], []
    for p in range(s):
        names.append(f"E A[{p % n},{p // n}]")
        expected.append(table.mean_entry)
    for p, q in zip(*iu):
        names.append(f"E A[{p % n},{p // n}] A[{q % n},{q // n}]")
        expected.append(table.var_entry if p == q else table.cross_second)
    for p, q, r in trip:
        names.append(f"E A_{p} A_{q} A_{r} (vec)")
        expected.append(table.third)
    for i in range(n):
        names.append(f"E P[{i},{i}]")
        expected.append(table.mean_P_diag)
    for i, j in zip(*pu):
        names.append(f"E P[{i},{j}]")
        expected.append(table.mean_P_offdiag)

    rows = [MomentRow(nm, float(m), float(e), float(x), bool(abs(m - x) <= sigmas * e))
            for nm, m, e, x in zip(names, mean, se, expected)]
    dev = max(p[2] for p in parts)
    rows.append(MomentRow("max |sum A^2 - d|", float(dev), 0.0, 0.0, bool(dev <= 1e-12)))
    return rows


# -- Taylor audit ------------------------------------------------------------

class TaylorRow(NamedTuple):
    trial: int
    slope1: float
    slope2: float
    status1: str
    status2: str
    curvature: float = float("nan")


DEFAULT_STEPS = np.geomspace(1e-1, 1e-4, 7)
NOISE_FLOOR = 1e-12


def _fit_slope(steps, r, scale, threshold):
    keep = r > NOISE_FLOOR * scale
    if keep.sum() < 3:
        return float("nan"), "PASS-degenerate"
    slope = float(np.polyfit(np.log(steps[keep]), np.log(r[keep]), 1)[0])
    return slope, "PASS" if slope >= threshold else "FAIL"


def taylor_audit(f, manifold, n, d, trials, steps=None, seed=0,
                 first_threshold=1.9, second_threshold=2.5):
    """Fit log-log slopes of the first and second-order Taylor remainders.

    For a random point ``X`` and unit tangent ``D`` the perturbed point is
    ``X' = retract(X, D, t)`` and the remainders are
    ``|f(X') - f(X) - <g, X'-X>|`` and that minus ``<H(X'-X), X'-X>/2``,
    with ``g`` and ``H`` the intrinsic gradient and Hessian. Remainders below
    ``1e-12 * max(1, |f(X)|)`` are rounding noise and are dropped; fewer than
    three usable points give ``PASS-degenerate``.

    ``curvature`` is ``|<H D, D>|``. When it is small the cubic term of the
    first-order remainder competes with the quadratic one on the coarse end
    of the ladder and the fitted first-order slope can drop below 2.
    """
    steps = DEFAULT_STEPS if steps is None else np.asarray(steps, dtype=float)
    if np.any(np.diff(steps) >= 0):
        raise ValueError("steps must be strictly decreasing")
    if manifold == "stiefel":
        geo = stiefel
    elif manifold == "grassmann":
        geo = grassmann
    else:
        raise ValueError(f"unknown manifold {manifold!r}")
    rows = []
    for k in range(trials):
        rng = chunk_rng(seed, STREAM_TAYLOR, k)
        X = sample_points(manifold, n, d, rng, None)
        M = rng.standard_normal(X.shape)
        if manifold == "grassmann":
            M = grassmann.sym_project(M)
        D = geo.tangent_project(X, M)
        D = D / hs_norm(D)
        f0 = float(f.value(X))
        g = geo.intrinsic_gradient(f, X)
        r1 = np.empty(steps.size)
        r2 = np.empty(steps.size)
        for i, t in enumerate(steps):
            Y = geo.retract(X, D, t)
            E = Y - X
            lin = f0 + inner(g, E)
            r1[i] = abs(float(f.value(Y)) - lin)
            r2[i] = abs(float(f.value(Y)) - lin
                        - 0.5 * inner(geo.intrinsic_hessian_apply(f, X, E), E))
        scale = max(1.0, abs(f0))
        s1, st1 = _fit_slope(steps, r1, scale, first_threshold)
        s2, st2 = _fit_slope(steps, r2, scale, second_threshold)
        curv = abs(inner(geo.intrinsic_hessian_apply(f, X, D), D))
        rows.append(TaylorRow(k, s1, s2, st1, st2, float(curv)))
    return rows


# -- functional-inequality audits ---------------------------------------------

def _grad_norm_sq(f, manifold, X):
    if manifold == "stiefel":
        G = stiefel.tangent_project(X, f.grad(X))
    else:
        G = grassmann.tangent_project(X, grassmann.sym_project(f.grad(X)))
    return np.sum(G * G, axis=(-2, -1))


def value_grad_samples(f, manifold, n, d, n_samples, seed, threads=1,
                       chunk_size=CHUNK_SIZE):
    """Values ``f(X)`` and squared intrinsic gradient norms on Haar samples.

    ``f.value`` and ``f.grad`` must broadcast over a leading sample axis.
    """
    def work(rng, size, offset):
        X = sample_points(manifold, n, d, rng, size)
        return np.asarray(f.value(X), dtype=float), _grad_norm_sq(f, manifold, X)

    parts = map_chunks(work, n_samples, seed, STREAM_MAIN, chunk_size, threads)
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]))


class AuditResult(NamedTuple):
    lhs: float
    rhs: float
    margin: float
    stderr: float
    passed: bool


def _mean_se(z):
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(z.size))


def poincare_audit(f, manifold, n, d, n_samples, seed, threads=1, sigmas=3.0,
                   samples=None):
    """``Var f`` against ``c E|grad f|^2`` with the log-Sobolev constant ``c``.

    ``margin = rhs - lhs``; the audit passes when ``margin >= -sigmas * se``
    with ``se`` the delta-method standard error of the difference.
    """
    v, g2 = samples if samples is not None else value_grad_samples(
        f, manifold, n, d, n_samples, seed, threads)
    c = poincare_constant(n, manifold, d)
    mu = v.mean()
    # Var f - c E g2 as the mean of (v - mu)^2 - c g2, up to O(1/N)
    z = (v - mu) ** 2 - c * g2
    lhs = float(v.var(ddof=1))
    rhs = float(c * g2.mean())
    _, se = _mean_se(z)
    margin = rhs - lhs
    return AuditResult(lhs, rhs, margin, se, bool(margin >= -sigmas * se))


def lsi_audit(f, manifold, n, d, n_samples, seed, threads=1, sigmas=3.0,
              samples=None):
    """``Ent(f^2)`` against ``2 c E|grad f|^2``.

    ``Ent(f^2) = E f^2 log f^2 - E f^2 log E f^2`` with ``f^2`` clamped at
    ``1e-300`` inside the logarithm.
    """
    v, g2 = samples if samples is not None else value_grad_samples(
        f, manifold, n, d, n_samples, seed, threads)
    c = lsi_constant(n, manifold, d)
    u = v * v
    m = u.mean()
    ulog = u * np.log(np.maximum(u, 1e-300))
    lhs = float(ulog.mean() - m * math.log(max(m, 1e-300)))
    rhs = float(2.0 * c * g2.mean())
    # delta method: d Ent / d E[f^2 log f^2] = 1, d Ent / d E f^2 = -(log m + 1)
    z = ulog - (math.log(max(m, 1e-300)) + 1.0) * u - 2.0 * c * g2
    _, se = _mean_se(z)
    margin = rhs - lhs
    return AuditResult(lhs, rhs, margin, se, bool(margin >= -sigmas * se))


class LpRow(NamedTuple):
    p: float
    lhs: float
    rhs: float
    margin: float
    stderr: float
    passed: bool


def lp_growth_audit(f, manifold, n, d, n_samples, seed, p_grid=(2, 3, 4, 6, 8),
                    threads=1, sigmas=3.0, samples=None):
    """``|g|_p`` against ``sqrt(|g|_2^2 + c (p-2)/(n-2) |grad g|_p^2)`` per ``p``.

    Both sides are smooth functions of sample means; their difference gets
    a delta-method standard error, so heavy tails at large ``p`` show up as
    wide error bars rather than spurious failures.
    """
    v, g2 = samples if samples is not None else value_grad_samples(
        f, manifold, n, d, n_samples, seed, threads)
    a = np.abs(v)
    gn = np.sqrt(g2)
    N = v.size
    rows = []
    for p in p_grid:
        if not 2 <= p <= 16:
            raise ValueError(f"p must lie in [2, 16], got {p}")
        ap = a ** p
        bp = gn ** p
        a2 = a * a
        Ea, Eb, E2 = ap.mean(), bp.mean(), a2.mean()
        lhs = Ea ** (1.0 / p)
        normp = Eb ** (1.0 / p)
        rhs = lp_growth_rhs(p, n, math.sqrt(E2), normp, manifold)
        k = (4.0 if manifold == "stiefel" else 8.0) * (p - 2) / (n - 2)
        # gradient of rhs - lhs with respect to (E a^p, E b^p, E a^2)
        da = -lhs / (p * Ea) if Ea > 0 else 0.0
        db = (k * normp * normp / (p * Eb)) / (2 * rhs) if Eb > 0 and rhs > 0 else 0.0
        d2 = 1.0 / (2 * rhs) if rhs > 0 else 0.0
        z = da * ap + db * bp + d2 * a2
        se = float(z.std(ddof=1) / math.sqrt(N))
        margin = rhs - lhs
        rows.append(LpRow(float(p), float(lhs), float(rhs), float(margin), se,
                          bool(margin >= -sigmas * se - 1e-12 * max(1.0, rhs))))
    return rows
