"""Amplification random variables built from decompositions.

For a decomposition (a_j, b_j, c_j; beta) and target eps the variable takes
value (a_j - e^eps b_j) / c_j with probability c_j, and 0 with probability
beta. Its mean is 1 - e^eps, and the shuffled divergence after n users is
bounded by E[sum of n copies]_+ / n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from .decomposition import (CloneDecomposition, InvalidDecompositionError,
                            reference_decomposition, validate)
from .probdist import FiniteDist

Direction = Literal["forward", "reverse"]

COALESCE_RTOL = 1e-12
# Values above the support bound by at most this much (relative) are float noise.
CLAMP_RTOL = 1e-9


class DominanceError(ValueError):
    """Reference law has zero mass where a neighbour law does not."""


@dataclass(frozen=True)
class ContinuousPart:
    """Absolutely continuous segment (possibly with jumps) on [lo, hi].

    `cdf` and `cdf_left` are the right-continuous CDF and its left limit,
    both normalized to total mass 1; `weight` is the segment's share.
    """

    weight: float
    lo: float
    hi: float
    cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    cdf_left: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    mean: float
    label: str = ""


@dataclass(frozen=True, eq=False)
class Gparv:
    values: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    eps0: float = 0.0
    eps: float = 0.0
    continuous: Optional[ContinuousPart] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        m = np.array(self.masses, dtype=float).ravel()
        if v.shape != m.shape:
            raise ValueError("values and masses must align")
        if np.any(m < 0) or not np.all(np.isfinite(v)):
            raise ValueError("masses must be non-negative and values finite")
        w = self.continuous.weight if self.continuous else 0.0
        total = float(m.sum()) + w
        if abs(total - 1) > 1e-10:
            raise ValueError(f"total mass {total!r} differs from 1")
        v, m = _coalesce(v, m, COALESCE_RTOL * math.exp(self.eps0 + self.eps))
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "masses", m)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.masses.tolist()))

    def mean(self) -> float:
        m = math.fsum(self.values * self.masses)
        if self.continuous:
            m += self.continuous.weight * self.continuous.mean
        return m

    def support(self) -> tuple[float, float]:
        lo = [self.values.min()] if len(self.values) else []
        hi = [self.values.max()] if len(self.values) else []
        if self.continuous:
            lo.append(self.continuous.lo)
            hi.append(self.continuous.hi)
        return float(min(lo)), float(max(hi))

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.searchsorted(self.values, u, side="right")
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        res = cum[out]
        if self.continuous:
            res = res + self.continuous.weight * self.continuous.cdf(u)
        return res

    def cdf_left(self, u):
        u = np.asarray(u, dtype=float)
        out = np.searchsorted(self.values, u, side="left")
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        res = cum[out]
        if self.continuous:
            res = res + self.continuous.weight * self.continuous.cdf_left(u)
        return res

    def support_bounds(self) -> tuple[float, float]:
        return 1 - math.exp(self.eps0 + self.eps), math.exp(self.eps0) - math.exp(self.eps)

    def to_dict(self) -> dict:
        doc = {"eps0": self.eps0, "eps": self.eps,
               "atoms": [{"value": v, "mass": m} for v, m in self.atoms]}
        if self.continuous:
            c = self.continuous
            doc["continuous"] = {"label": c.label, "weight": c.weight,
                                 "lo": c.lo, "hi": c.hi, "mean": c.mean}
        return doc


def _coalesce(v: np.ndarray, m: np.ndarray, atol: float):
    keep = m > 0
    v, m = v[keep], m[keep]
    order = np.argsort(v, kind="stable")
    v, m = v[order], m[order]
    if len(v) < 2:
        return v.copy(), m.copy()
    gid = np.concatenate([[0], np.cumsum(np.diff(v) > atol)])
    mass = np.bincount(gid, weights=m)
    # Mass-weighted average keeps the mean exact.
    val = np.bincount(gid, weights=v * m) / mass
    single = np.bincount(gid) == 1
    val[single] = v[np.searchsorted(gid, np.nonzero(single)[0])]
    return val, mass


def _atoms_from(dec: CloneDecomposition, eps: float, direction: Direction):
    a, b, c = (dec.b, dec.a, dec.c) if direction == "reverse" else (dec.a, dec.b, dec.c)
    dead = c <= 0
    if np.any(dead & ((a > 0) | (b > 0))):
        raise DominanceError("component with c = 0 has positive neighbour mass")
    live = ~dead
    vals = (a[live] - math.exp(eps) * b[live]) / c[live]
    return np.append(vals, 0.0), np.append(c[live], dec.beta)


def _check_direction(direction):
    if direction not in ("forward", "reverse"):
        raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")


def gparv_upper(dec: CloneDecomposition, eps: float, eps0: float,
                direction: Direction = "forward") -> Gparv:
    """Upper-bound variable from an optimal decomposition of an eps0-LDP randomizer."""
    _check_direction(direction)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    diag = validate(dec)
    if not diag.ok:
        raise InvalidDecompositionError(f"decomposition fails validation: {diag.violations}")
    vals, mass = _atoms_from(dec, eps, direction)
    lo, hi = 1 - math.exp(eps0 + eps), math.exp(eps0) - math.exp(eps)
    # Snap float noise back onto the support bound; general (non-blanket)
    # decompositions may legitimately leave it and are kept as they are.
    slack = CLAMP_RTOL * math.exp(eps0 + eps)
    vals = np.where((vals > hi) & (vals <= hi + slack), hi, vals)
    vals = np.where((vals < lo) & (vals >= lo - slack), lo, vals)
    return Gparv(vals, mass, eps0, eps)


def _triple_eps0(dec: CloneDecomposition) -> float:
    best = 0.0
    for x, y in ((dec.a, dec.b), (dec.a, dec.c), (dec.b, dec.c)):
        both = (x > 0) & (y > 0)
        if np.any(both):
            best = max(best, float(np.max(np.abs(np.log(x[both] / y[both])))))
    return best


def gparv_reference(dec: CloneDecomposition, eps: float, eps0: Optional[float] = None,
                    direction: Direction = "forward") -> Gparv:
    """Variable for a decomposition where all other users follow c exactly.

    No support clamping: reference laws need not be the blanket.
    """
    _check_direction(direction)
    vals, mass = _atoms_from(dec, eps, direction)
    if eps0 is None:
        eps0 = _triple_eps0(dec)
    return Gparv(vals, mass, eps0, eps)


def gparv_lower(a0: FiniteDist, a1: FiniteDist, a2: FiniteDist, eps: float,
                eps0: Optional[float] = None) -> Gparv:
    """Variable whose divergence is exact for one neighbour pair and n-1 copies of a2."""
    return gparv_reference(reference_decomposition(a0, a1, a2), eps, eps0)


def gparv_std_clone(eps0: float, eps: float, direction: Direction = "forward") -> Gparv:
    """Three-point variable of the standard clone reduction."""
    _check_direction(direction)
    e = math.exp(eps0)
    a0 = np.array([e / (e + 1), 1 / (e + 1), 0.0])
    a1 = a0[[1, 0, 2]]
    a2 = np.array([1 / (2 * e), 1 / (2 * e), 1 - 1 / e])
    if direction == "reverse":
        a0, a1 = a1, a0
    vals = (a0 - math.exp(eps) * a1) / a2
    return Gparv(vals, a2, eps0, eps)


def _laplace_upper_part(eps0: float, eps: float) -> ContinuousPart:
    ee, ea = math.exp(eps), math.exp(eps0)
    lo, mid, hi = 1 - ea * ee, 1 - ee, ea - ee

    def left_branch(u):
        return 0.5 * np.sqrt(ee / np.maximum(1 - u, ee))

    def right_branch(u):
        return 1 - 0.5 / np.sqrt(np.maximum(u + ee, 1.0))

    def cdf(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < lo, 0.0, np.where(u < mid, left_branch(u),
                        np.where(u < hi, right_branch(u), 1.0)))

    def cdf_left(u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= lo, 0.0, np.where(u <= mid, left_branch(u),
                        np.where(u <= hi, right_branch(u), 1.0)))

    mean = math.exp(eps0 / 2) * (1 - ee)
    return ContinuousPart(math.exp(-eps0 / 2), lo, hi, cdf, cdf_left, mean, "laplace01-upper")


def gparv_laplace_upper(eps0: float, eps: float, direction: Direction = "forward") -> Gparv:
    """Laplace noise on inputs {0, 1}: blanket part is continuous with weight e^(-eps0/2).

    The two directions give the same law (reflect y -> 1 - y).
    """
    _check_direction(direction)
    part = _laplace_upper_part(eps0, eps)
    return Gparv([0.0], [1 - part.weight], eps0, eps, part)


def gparv_laplace_lower(eps0: float, eps: float) -> Gparv:
    """Laplace on {0, 1} with every other user holding input 1.

    G = exp(eps0 (|y - 1| - |y|)) - e^eps with y ~ Laplace(1, 1/eps0). Atoms of
    mass 1/2 at the bottom and e^(-eps0)/2 at the top; continuous in between.
    """
    ee, ea = math.exp(eps), math.exp(eps0)
    lo, hi = 1 / ea - ee, ea - ee
    h = math.exp(-eps0 / 2)

    def body(u):
        return 1 - 0.5 * h / np.sqrt(np.maximum(u + ee, 1 / ea))

    def cdf(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < lo, 0.0, np.where(u < hi, body(u), 1.0))

    def cdf_left(u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= lo, 0.0, np.where(u <= hi, body(u), 1.0))

    part = ContinuousPart(1.0, lo, hi, cdf, cdf_left, 1 - ee, "laplace01-lower")
    return Gparv([], [], eps0, eps, part)
