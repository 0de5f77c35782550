"""General clone decompositions: optimal construction, merging and composition.

A decomposition writes the output laws of two neighbouring inputs and of
every other user over shared components. Component j carries mass a_j under
the first input, b_j under the second and c_j under any input; the rest of
every user's law (mass beta) is private to that user.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .probdist import FiniteDist, Kernel
from .randomizers import PqrGamma

DEC_TOL = 1e-10
RATIO_RTOL = 1e-9


class NotBlanketDecompositionError(ValueError):
    """A component has c = 0 but positive mass under one of the neighbours."""


class InvalidDecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class CloneComponent:
    a: float
    b: float
    c: float
    tag: Optional[object] = None


@dataclass(frozen=True, eq=False)
class CloneDecomposition:
    """Components stored column-wise as read-only arrays."""

    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    beta: float = 0.0
    tags: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        arrs = []
        for name in ("a", "b", "c"):
            v = np.array(getattr(self, name), dtype=float).ravel()
            v.setflags(write=False)
            arrs.append(v)
        if not (len(arrs[0]) == len(arrs[1]) == len(arrs[2])):
            raise ValueError("a, b and c must have equal length")
        if self.tags is not None and len(self.tags) != len(arrs[0]):
            raise ValueError("one tag per component")
        for name, v in zip("abc", arrs):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def from_components(cls, components: Sequence[CloneComponent], beta: float) -> "CloneDecomposition":
        comps = list(components)
        tags = tuple(x.tag for x in comps) if any(x.tag is not None for x in comps) else None
        return cls([x.a for x in comps], [x.b for x in comps], [x.c for x in comps], beta, tags)

    @property
    def components(self) -> list[CloneComponent]:
        tags = self.tags or (None,) * len(self.a)
        return [CloneComponent(float(a), float(b), float(c), t)
                for a, b, c, t in zip(self.a, self.b, self.c, tags)]

    @property
    def gamma(self) -> float:
        return float(np.sum(self.c))

    def __len__(self) -> int:
        return len(self.a)

    def swapped(self) -> "CloneDecomposition":
        """Same decomposition with the roles of the two neighbours exchanged."""
        tags = None if self.tags is None else tuple(
            (t[1], t[0]) if isinstance(t, tuple) and len(t) == 2 else t for t in self.tags)
        return CloneDecomposition(self.b, self.a, self.c, self.beta, tags)

    def is_symmetric(self) -> bool:
        """True when swapping the neighbours gives the same merged decomposition."""
        x, y = simplify(self), simplify(self.swapped())
        return len(x) == len(y) and all(
            np.allclose(u, v, rtol=RATIO_RTOL, atol=DEC_TOL)
            for u, v in ((x.a, y.a), (x.b, y.b), (x.c, y.c)))

    def to_dict(self) -> dict:
        return {
            "components": [{"a": float(a), "b": float(b), "c": float(c)}
                           for a, b, c in zip(self.a, self.b, self.c)],
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CloneDecomposition":
        comps = doc["components"]
        return cls([x["a"] for x in comps], [x["b"] for x in comps],
                   [x["c"] for x in comps], doc["beta"])


@dataclass(frozen=True)
class Diagnostics:
    ok: bool
    violations: dict

    def __bool__(self) -> bool:
        return self.ok


def validate(dec: CloneDecomposition, tol: float = DEC_TOL) -> Diagnostics:
    """Check the clone constraints; violations map to their magnitudes."""
    v = {}
    sa, sb = float(np.sum(dec.a)), float(np.sum(dec.b))
    sc = float(np.sum(dec.c)) + dec.beta
    if abs(sa - 1) > tol:
        v["sum_a"] = 1 - sa
    if abs(sb - 1) > tol:
        v["sum_b"] = 1 - sb
    if abs(sc - 1) > tol:
        v["sum_c_plus_beta"] = 1 - sc
    if dec.beta < -tol:
        v["beta"] = dec.beta
    neg = min([0.0] + [float(x.min()) for x in (dec.a, dec.b, dec.c) if len(x)])
    if neg < -tol:
        v["negative_mass"] = neg
    return Diagnostics(not v, v)


def primary_optimal(kernel: Kernel, x0, x1) -> CloneDecomposition:
    """One component per output: the two neighbour rows and the column minimum."""
    i0, i1 = kernel.index_of(x0), kernel.index_of(x1)
    c = kernel.infimum()
    return CloneDecomposition(kernel.matrix[i0], kernel.matrix[i1], c,
                              max(0.0, 1.0 - float(c.sum())), kernel.outputs)


def reference_decomposition(a0: FiniteDist, a1: FiniteDist, a2: FiniteDist) -> CloneDecomposition:
    """Decomposition where every other user follows `a2` exactly (beta = 0).

    This is the shape used for lower bounds, where all other users hold the
    same third input.
    """
    labels = list(a2.outcomes)
    for d in (a0, a1):
        labels += [y for y in d.outcomes if y not in set(labels)]
    return CloneDecomposition(a0.aligned(labels), a1.aligned(labels),
                              a2.aligned(labels), 0.0, tuple(labels))


def _breaks(keys: np.ndarray, rtol: float) -> np.ndarray:
    """Mark positions where a sorted key jumps by more than rtol (relative)."""
    gap = np.abs(np.diff(keys)) > rtol * np.maximum(np.abs(keys[1:]), np.abs(keys[:-1]))
    return np.concatenate([[True], gap])


def _group_ids(r0: np.ndarray, r1: np.ndarray, rtol: float):
    """Permutation and group ids clustering ratio pairs coordinate-wise."""
    perm = np.lexsort((r1, r0))
    g0 = np.cumsum(_breaks(r0[perm], rtol))
    # Re-sort each r0 cluster by r1 before splitting on r1.
    perm = perm[np.lexsort((r1[perm], g0))]
    g0 = np.cumsum(_breaks(r0[perm], rtol))
    new = _breaks(r1[perm], rtol)
    new[1:] |= np.diff(g0) != 0
    return perm, np.cumsum(new) - 1


def simplify(dec: CloneDecomposition, rtol: float = RATIO_RTOL) -> CloneDecomposition:
    """Merge components sharing a ratio pair (a/c, b/c); output sorted by ratio."""
    a, b, c = dec.a, dec.b, dec.c
    dead = c <= 0
    if np.any(dead & ((a > 0) | (b > 0))):
        raise NotBlanketDecompositionError(
            "component with c = 0 carries mass under a neighbour input")
    a, b, c = a[~dead], b[~dead], c[~dead]
    if len(c) == 0:
        return CloneDecomposition([], [], [], dec.beta, ())
    perm, gid = _group_ids(a / c, b / c, rtol)
    A = np.bincount(gid, weights=a[perm])
    B = np.bincount(gid, weights=b[perm])
    C = np.bincount(gid, weights=c[perm])
    tags = tuple((float(x), float(y)) for x, y in zip(A / C, B / C))
    return CloneDecomposition(A, B, C, dec.beta, tags)


def five_component(pqr: PqrGamma, eps0: float) -> CloneDecomposition:
    """(e p, p, p), (p, e p, p), (e q, e q, q), (r, r, r); zero-mass parts dropped."""
    e = math.exp(eps0)
    rows = [((1.0, e), pqr.p, 1.0, e), ((e, 1.0), pqr.p, e, 1.0),
            ((1.0, 1.0), pqr.r, 1.0, 1.0), ((e, e), pqr.q, e, e)]
    # Same order simplify() produces: sorted by (r0, r1).
    rows = sorted((x for x in rows if x[1] > 0), key=lambda x: x[0])
    return CloneDecomposition([m * r0 for _, m, r0, _ in rows],
                              [m * r1 for _, m, _, r1 in rows],
                              [m for _, m, _, _ in rows],
                              pqr.beta, tuple(t for t, *_ in rows))


def as_pqr(dec: CloneDecomposition, eps0: float, rtol: float = 1e-9) -> Optional[PqrGamma]:
    """Recover (p, q, r) if `dec` has the five-component shape, else None."""
    e = math.exp(eps0)
    d = simplify(dec)
    found = {}
    for (r0, r1), c in zip(d.tags, d.c):
        key = None
        for cand, (u, v) in {"pa": (e, 1), "pb": (1, e), "q": (e, e), "r": (1, 1)}.items():
            if abs(r0 - u) <= rtol * u and abs(r1 - v) <= rtol * v:
                key = cand
        if key is None:
            return None
        found[key] = float(c)
    pa, pb = found.get("pa", 0.0), found.get("pb", 0.0)
    if abs(pa - pb) > 1e-12:
        return None
    return PqrGamma(pa, found.get("q", 0.0), found.get("r", 0.0))


def joint(decs: Sequence[CloneDecomposition]) -> CloneDecomposition:
    """Decomposition of independent randomizers applied to separate coordinates."""
    if not decs:
        raise ValueError("joint composition needs at least one decomposition")
    out = simplify(decs[0])
    gamma = out.gamma
    for d in decs[1:]:
        d = simplify(d)
        gamma *= d.gamma
        out = simplify(CloneDecomposition(np.outer(out.a, d.a).ravel(),
                                          np.outer(out.b, d.b).ravel(),
                                          np.outer(out.c, d.c).ravel(), 0.0))
    return CloneDecomposition(out.a, out.b, out.c, max(0.0, 1.0 - gamma), out.tags)


def parallel(weighted: Sequence[tuple[float, CloneDecomposition]], tol: float = 1e-9) -> CloneDecomposition:
    """Decomposition of a randomizer that runs mechanism i with probability w_i."""
    if not weighted:
        raise ValueError("parallel composition needs at least one part")
    w = np.array([x for x, _ in weighted], dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > tol:
        raise ValueError(f"parallel weights must be non-negative and sum to 1, got {w.sum()!r}")
    a = np.concatenate([wi * d.a for wi, (_, d) in zip(w, weighted)])
    b = np.concatenate([wi * d.b for wi, (_, d) in zip(w, weighted)])
    c = np.concatenate([wi * d.c for wi, (_, d) in zip(w, weighted)])
    beta = float(sum(wi * d.beta for wi, (_, d) in zip(w, weighted)))
    return simplify(CloneDecomposition(a, b, c, beta))


def constant_decomposition() -> CloneDecomposition:
    """The mechanism that ignores its input: one shared component, nothing left over."""
    return CloneDecomposition([1.0], [1.0], [1.0], 0.0, ((1.0, 1.0),))


def unchanged(dec: CloneDecomposition) -> CloneDecomposition:
    """Coordinate whose input is the same in both neighbours (first row used twice)."""
    return simplify(CloneDecomposition(dec.a, dec.a, dec.c, dec.beta))
