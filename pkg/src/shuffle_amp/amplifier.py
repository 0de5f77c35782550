"""Lattice discretization, n-fold convolution and delta(eps) evaluation.

delta_bound discretizes an amplification variable onto a lattice of step l
(rounding up for a certified upper bound, down for a lower one), forms the
law of the sum of n independent copies and returns E[sum]_+ / n.

The n-fold law is computed on an exponentially tilted lattice. Tilting by
exp(lam * x) with the lam that makes the mean zero leaves the positive part
of the sum in the bulk of the tilted law, so a window of a few standard
deviations (Chernoff bounds give the exact width) carries all but a
negligible mass. Masses are mapped back with exp(n log M - lam s). This keeps
tiny deltas accurate far below the FFT noise floor of the plain route, and
the window stays small for large n. `self_convolve` is the plain, fully
zero-padded route; tests check the two agree.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
from scipy import fft as sfft
from scipy import optimize
from scipy.special import gammaln, logsumexp

from .gparv import Gparv

Mode = Literal["round_up", "round_down"]
GparvLike = Union[Gparv, Sequence[Gparv]]

# Relative distance to an integer below which v / l counts as a lattice point.
SNAP_RTOL = 1e-12
MAX_FFT_LENGTH = 2**26
MAX_LATTICE_WIDTH = 2**26
# Tail mass (per side) left outside the convolution window, in the tilted law.
LOG_TAU = -50.0
WORKERS_ENV = "SHUFFLE_AMP_WORKERS"


class ResourceLimitError(RuntimeError):
    """The requested (n, l) needs a larger transform than allowed."""


class SearchRangeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LatticeDist:
    """Masses at values (min_index + i) * step."""

    step: float
    min_index: int
    masses: np.ndarray = field(repr=False)
    mass_defect: float = 0.0

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).ravel()
        if self.step <= 0:
            raise ValueError("step must be positive")
        if np.any(m < 0):
            raise ValueError("lattice masses must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "min_index", int(self.min_index))

    @property
    def max_index(self) -> int:
        return self.min_index + len(self.masses) - 1

    @property
    def indices(self) -> np.ndarray:
        return self.min_index + np.arange(len(self.masses))

    @property
    def values(self) -> np.ndarray:
        return self.indices * self.step

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def trimmed(self) -> "LatticeDist":
        nz = np.nonzero(self.masses)[0]
        if len(nz) == 0:
            return self
        return LatticeDist(self.step, self.min_index + nz[0],
                           self.masses[nz[0]:nz[-1] + 1], self.mass_defect)


@dataclass(frozen=True)
class BoundReport:
    """Result of one delta evaluation.

    `delta_upper` is filled by round-up evaluations and `delta_lower` by
    round-down ones (combined reports carry both). Slack terms are on the
    delta scale: the certified gap between the lattice value and the exact
    value of the variable's bound is at most `discretization_slack`.
    """

    delta_upper: Optional[float]
    delta_lower: Optional[float]
    eps: float
    eps0: float
    n: int
    step: float
    mass_defect: float = 0.0
    discretization_slack: float = 0.0
    hoeffding_factor: Optional[float] = None
    truncation_bound: float = 0.0
    fft_length: int = 0

    @property
    def delta(self) -> float:
        return self.delta_upper if self.delta_upper is not None else self.delta_lower

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "delta_upper", "delta_lower", "eps", "eps0", "n", "step", "mass_defect",
            "discretization_slack", "hoeffding_factor", "truncation_bound", "fft_length")}


def default_step(eps0: float) -> float:
    return math.expm1(eps0) / 1000


def _lattice_index(x: np.ndarray, mode: Mode) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    near = np.rint(x)
    exact = np.abs(x - near) <= SNAP_RTOL * np.maximum(1.0, np.abs(x))
    rounded = np.ceil(x) if mode == "round_up" else np.floor(x)
    return np.where(exact, near, rounded).astype(np.int64)


def discretize(g: Gparv, step: float, mode: Mode = "round_up") -> LatticeDist:
    """Move every value of `g` to the lattice point above (or below) it."""
    if mode not in ("round_up", "round_down"):
        raise ValueError(f"unknown mode {mode!r}")
    if not step > 0:
        raise ValueError("step must be positive")
    idx = _lattice_index(g.values / step, mode)
    parts_idx = [idx]
    parts_mass = [g.masses]
    cp = g.continuous
    if cp is not None:
        k_lo, k_hi = _lattice_index(np.array([cp.lo, cp.hi]) / step, mode)
        if k_hi - k_lo + 1 > MAX_LATTICE_WIDTH:
            raise ResourceLimitError("continuous segment needs too many lattice cells; use a larger step")
        ks = np.arange(k_lo, k_hi + 1)
        if mode == "round_up":
            # Cell ((k-1) l, k l] goes to k l.
            F = cp.cdf(ks * step)
            F[-1] = 1.0
            F = np.maximum.accumulate(np.clip(F, 0, 1))
            cell = np.diff(np.concatenate([[0.0], F]))
        else:
            # Cell [k l, (k+1) l) goes to k l.
            F = cp.cdf_left(np.append(ks, k_hi + 1) * step)
            F[0], F[-1] = 0.0, 1.0
            F = np.maximum.accumulate(np.clip(F, 0, 1))
            cell = np.diff(F)
        parts_idx.append(ks)
        parts_mass.append(cp.weight * np.maximum(cell, 0.0))
    allidx = np.concatenate(parts_idx)
    allmass = np.concatenate(parts_mass)
    if len(allidx) == 0:
        raise ValueError("empty variable")
    lo, hi = int(allidx.min()), int(allidx.max())
    if hi - lo + 1 > MAX_LATTICE_WIDTH:
        raise ResourceLimitError(f"lattice width {hi - lo + 1} too large; use a larger step")
    masses = np.bincount(allidx - lo, weights=allmass, minlength=hi - lo + 1)
    return LatticeDist(step, lo, masses)


def self_convolve(d: LatticeDist, n: int, max_length: int = MAX_FFT_LENGTH) -> LatticeDist:
    """Law of the sum of n independent copies, by zero-padded FFT.

    Negative round-off is clamped to 0 without renormalizing; the resulting
    deviation of the total mass from 1 is kept in `mass_defect`.
    """
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if n == 1:
        return d
    width = len(d.masses)
    length = n * (width - 1) + 1
    N = sfft.next_fast_len(length, real=True)
    if N > max_length:
        raise ResourceLimitError(
            f"n-fold convolution needs a transform of length {N} > {max_length}; use a larger step")
    out = sfft.irfft(sfft.rfft(d.masses, N) ** n, N)[:length]
    np.maximum(out, 0.0, out=out)
    defect = abs(1.0 - float(out.sum()))
    return LatticeDist(d.step, n * d.min_index, out, defect)


def positive_part_mean(d: LatticeDist) -> float:
    """Sum over lattice points with positive value of value * mass."""
    idx = d.indices
    pos = idx > 0
    return float(np.dot(idx[pos] * d.step, d.masses[pos]))


@dataclass(frozen=True)
class _TiltedResult:
    mean_pos: float   # E[S]_+ for the n-fold sum
    mass_defect: float
    tail: float       # bound on E[S; S above window]_+ that was dropped
    alias: float      # bound on aliased contribution inside the window
    fft_length: int


def _tilted_positive_part(d: LatticeDist, n: int, max_length: int = MAX_FFT_LENGTH,
                          log_tau: float = LOG_TAU) -> _TiltedResult:
    """E[S]_+ for the sum of n copies of a lattice variable (see module docstring)."""
    d = d.trimmed()
    l = d.step
    x = d.indices.astype(float)
    m = d.masses
    keep = m > 0
    if not np.any(keep) or x[keep].max() <= 0:
        return _TiltedResult(0.0, 0.0, 0.0, 0.0, 0)
    if n == 1:
        pos = x > 0
        return _TiltedResult(float(np.dot(x[pos] * l, m[pos])), 0.0, 0.0, 0.0, 0)
    lp = np.full(len(m), -np.inf)
    lp[keep] = np.log(m[keep])

    def tilted_mean(lam):
        w = lp + lam * x
        w = np.exp(w - w.max())
        return float(np.dot(w, x) / w.sum())

    lam = 0.0
    if tilted_mean(0.0) < 0:
        hi = 1.0 / x[keep].max()
        while tilted_mean(hi) <= 0:
            hi *= 2
        lam = optimize.brentq(tilted_mean, 0.0, hi, xtol=1e-15, rtol=1e-13)
    log_m = float(logsumexp(lp + lam * x))
    lq = lp + lam * x - log_m
    q = np.exp(lq)

    xmin, xmax = int(x[0]), int(x[-1])
    smin, smax = n * xmin, n * xmax

    def chernoff(sign):
        # Smallest t with P(sign * S >= t) <= tau under the tilted law.
        def f(u):
            th = math.exp(u)
            return (n * float(logsumexp(lq + sign * th * x)) - log_tau) / th
        res = optimize.minimize_scalar(f, bounds=(-40.0, 5.0), method="bounded",
                                       options={"xatol": 1e-6})
        return res.fun

    w_hi = min(int(math.ceil(chernoff(1.0))), smax)
    w_lo = max(int(math.floor(-chernoff(-1.0))), smin)
    span = w_hi - w_lo + 1
    N = sfft.next_fast_len(max(span, len(q)), real=True)
    if N > max_length:
        raise ResourceLimitError(
            f"n-fold convolution needs a transform of length {N} > {max_length}; use a larger step")
    c = sfft.irfft(sfft.rfft(q, N) ** n, N)
    np.maximum(c, 0.0, out=c)
    defect = abs(1.0 - float(c.sum()))
    s = w_lo + np.mod(smin + np.arange(N) - w_lo, N)
    top = w_lo + N - 1

    pos = (s > 0) & (c > 0)
    if np.any(pos):
        sp = s[pos].astype(float)
        logs = np.log(c[pos]) + np.log(sp * l) + n * log_m - lam * sp
        mean_pos = float(np.exp(logsumexp(logs)))
    else:
        mean_pos = 0.0

    def sup_weight(a, b):
        # max of s * l * exp(n log M - lam s) over integers s in [a, b], s > 0.
        a = max(a, 1)
        if a > b:
            return 0.0
        cand = [a, b]
        if lam > 0:
            cand.append(min(max(int(round(1 / lam)), a), b))
        return max(math.exp(math.log(t * l) + n * log_m - lam * t) for t in cand)

    tau = math.exp(log_tau)
    tail = tau * sup_weight(top + 1, smax) if top < smax else 0.0
    outside = (tau if w_lo > smin else 0.0) + (tau if top < smax else 0.0)
    alias = outside * sup_weight(w_lo, top) if outside else 0.0
    return _TiltedResult(mean_pos, defect, tail, alias, N)


def _hoeffding_factor(eps0: float, eps: float, step: float, n: int) -> Optional[float]:
    a = math.expm1(eps)
    b = math.expm1(eps0) * (math.exp(eps) + 1)
    if b <= 0:
        return None
    thr = 2 * a * a / (b * b)
    if step > thr:
        return None
    return math.exp(-(thr - step) * n)


def _as_list(g: GparvLike) -> list[Gparv]:
    return [g] if isinstance(g, Gparv) else list(g)


def delta_bound(g: GparvLike, n: int, step: Optional[float] = None, mode: Mode = "round_up",
                engine: Literal["tilted", "direct"] = "tilted",
                max_length: int = MAX_FFT_LENGTH) -> BoundReport:
    """E[G_1 + ... + G_n]_+ / n on the lattice of the given step.

    Passing several variables (for instance both directions of an asymmetric
    source) returns the largest value. round_up certifies an upper bound,
    round_down a lower one; the window truncation terms are added or
    subtracted accordingly. engine="direct" uses `self_convolve`.
    """
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    if mode not in ("round_up", "round_down"):
        raise ValueError(f"unknown mode {mode!r}")
    n = int(n)
    gs = _as_list(g)
    if not gs:
        raise ValueError("no variable given")
    eps0, eps = gs[0].eps0, gs[0].eps
    if step is None:
        step = default_step(eps0)
    best = None
    defect = 0.0
    trunc = 0.0
    fft_len = 0
    for gi in gs:
        lat = discretize(gi, step, mode)
        if engine == "direct":
            conv = self_convolve(lat, n, max_length)
            val = positive_part_mean(conv) / n
            defect = max(defect, conv.mass_defect)
            fft_len = max(fft_len, len(conv.masses))
        else:
            res = _tilted_positive_part(lat, n, max_length)
            if mode == "round_up":
                val = (res.mean_pos + res.tail) / n
                trunc = max(trunc, res.tail / n)
            else:
                val = max(0.0, res.mean_pos - res.alias) / n
                trunc = max(trunc, res.alias / n)
            defect = max(defect, res.mass_defect)
            fft_len = max(fft_len, res.fft_length)
        best = val if best is None else max(best, val)
    best = min(best, 1.0)
    factor = _hoeffding_factor(eps0, eps, step, n)
    slack = step * (factor if factor is not None else 1.0)
    up, low = (best, None) if mode == "round_up" else (None, best)
    return BoundReport(up, low, eps, eps0, n, step, defect, slack, factor, trunc, fft_len)


def _count_vectors(n: int, k: int) -> np.ndarray:
    """All length-k non-negative integer vectors summing to n."""
    rows = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + k - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, k)


def delta_exact_smalln(g: Gparv, n: int, max_atoms: int = 8, max_n: int = 12) -> float:
    """(1/n) E[G_1 + ... + G_n]_+ by enumerating multinomial count vectors."""
    if g.continuous is not None:
        raise ValueError("exact enumeration needs a purely atomic variable")
    if len(g.values) > max_atoms or n > max_n or n < 1:
        raise ValueError(f"exact enumeration limited to {max_atoms} atoms and n <= {max_n}")
    counts = _count_vectors(n, len(g.values))
    sums = counts @ g.values
    pos = sums > 0
    if not np.any(pos):
        return 0.0
    counts = counts[pos]
    with np.errstate(divide="ignore"):
        logm = np.log(g.masses)
    logp = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + np.where(
        counts > 0, counts * logm, 0.0).sum(axis=1)
    return math.fsum(np.exp(logp) * sums[pos]) / n


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _delta_fn(family: Callable[[float], GparvLike], n: int, step: Optional[float],
              mode: Mode) -> tuple[Callable[[float], float], float, float]:
    """delta as a function of eps with the step pinned at the family's eps0."""
    g0 = _as_list(family(0.0))[0]
    eps0 = g0.eps0
    l = default_step(eps0) if step is None else step

    def delta(eps):
        return delta_bound(family(eps), n, l, mode).delta

    return delta, eps0, l


def find_epsilon(g_family: Callable[[float], GparvLike], n: int, delta_target: float,
                 step: Optional[float] = None, tol: float = 1e-3, mode: Mode = "round_up",
                 eps_max: Optional[float] = None) -> float:
    """Smallest eps on a dyadic grid of [0, eps_max] with delta(eps) <= delta_target.

    The grid spacing is at most `tol`. Using a fixed grid (rather than free
    bisection) keeps results ordered: a pointwise smaller delta curve can
    never give a larger eps.
    """
    if not 0 < delta_target < 1:
        raise ValueError("delta_target must lie in (0, 1)")
    delta, eps0, _ = _delta_fn(g_family, n, step, mode)
    top = eps0 if eps_max is None else eps_max
    if delta(0.0) <= delta_target:
        return 0.0
    levels = max(0, math.ceil(math.log2(top / tol))) if top > tol else 0
    h = top / 2**levels
    lo, hi = 0, 2**levels
    if delta(hi * h) > delta_target:
        raise SearchRangeError(f"delta({top}) exceeds the target; widen the search range")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if delta(mid * h) <= delta_target:
            hi = mid
        else:
            lo = mid
    return hi * h


def find_eps0(randomizer_family: Callable[[float], Callable[[float], GparvLike]], n: int,
              delta_target: float, eps_target: float, eps0_grid_step: float = 0.01,
              eps0_max: float = 10.0, step: Optional[Callable[[float], float]] = None) -> float:
    """Largest eps0 on the grid whose amplified guarantee meets (eps_target, delta_target).

    The criterion delta_upper(eps0, eps_target) <= delta_target is equivalent to
    find_epsilon(...) <= eps_target for families monotone in eps, without the
    inner search's tolerance.
    """
    K = int(math.floor(eps0_max / eps0_grid_step + 1e-9))

    def grid(k):
        return round(k * eps0_grid_step, 12)

    def ok(k):
        e0 = grid(k)
        l = None if step is None else step(e0)
        rep = delta_bound(randomizer_family(e0)(eps_target), n, l, "round_up")
        return rep.delta_upper <= delta_target

    if not ok(1):
        raise SearchRangeError("even the smallest grid eps0 misses the target")
    if ok(K):
        raise SearchRangeError(f"target still met at eps0 = {grid(K)}; raise eps0_max")
    lo, hi = 1, K
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return grid(lo)


@dataclass(frozen=True)
class CurvePoint:
    eps0: float
    eps_upper: float
    eps_lower: Optional[float]


def curve(g_family: Callable[[float], Callable[[float], GparvLike]], n: int, delta_target: float,
          eps0_values: Sequence[float],
          lower_family: Optional[Callable[[float], Optional[Callable[[float], GparvLike]]]] = None,
          step: Optional[Callable[[float], float]] = None, tol: float = 1e-3,
          workers: Optional[int] = None) -> list[CurvePoint]:
    """Amplified eps for each eps0: upper from round-up, lower from round-down."""

    def one(e0):
        l = None if step is None else step(e0)
        up = find_epsilon(g_family(e0), n, delta_target, l, tol, "round_up")
        low = None
        fam = lower_family(e0) if lower_family is not None else None
        if fam is not None:
            low = find_epsilon(fam, n, delta_target, l if l is not None else default_step(e0),
                               tol, "round_down", eps_max=e0)
        return CurvePoint(float(e0), up, low)

    workers = workers or _workers()
    if workers > 1 and len(eps0_values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, eps0_values))
    return [one(e0) for e0 in eps0_values]
