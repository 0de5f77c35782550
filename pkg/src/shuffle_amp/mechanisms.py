"""Composed randomizers and the amplification variables they induce.

A mechanism is a catalog randomizer, an explicit table, the constant
mechanism, or a joint / parallel composition of these. Each exposes the
variables used by the searches: `upper(eps)` from its optimal decomposition,
`lower(eps)` from a neighbour pair plus a third input shared by every other
user, and `clone(eps)`, the standard-clone baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .amplifier import BoundReport, delta_bound
from .decomposition import (CloneDecomposition, constant_decomposition, five_component,
                            joint, parallel, primary_optimal, simplify, unchanged)
from .gparv import (Gparv, gparv_laplace_lower, gparv_laplace_upper, gparv_reference,
                    gparv_std_clone, gparv_upper)
from .probdist import Kernel
from .randomizers import (Kind, RandomizerSpec, TableSizeError, UnsupportedKindError,
                          build_table, closed_form_pqr)

# Lower bounds for BLH, RAPPOR and OUE do not depend on D once D >= 3.
LOWER_BOUND_D = 3


class Mechanism:
    eps0: float

    def scaled(self, eps0: float) -> "Mechanism":
        raise NotImplementedError

    def upper_decomposition(self) -> CloneDecomposition:
        raise NotImplementedError

    def lower_decomposition(self) -> Optional[CloneDecomposition]:
        raise NotImplementedError

    @cached_property
    def _upper_dec(self) -> CloneDecomposition:
        return self.upper_decomposition()

    @cached_property
    def _directions(self) -> tuple:
        return ("forward",) if self._upper_dec.is_symmetric() else ("forward", "reverse")

    def upper(self, eps: float) -> list[Gparv]:
        return [gparv_upper(self._upper_dec, eps, self.eps0, d) for d in self._directions]

    @cached_property
    def _lower_dec(self) -> Optional[CloneDecomposition]:
        return self.lower_decomposition()

    def lower(self, eps: float) -> list[Gparv]:
        dec = self._lower_dec
        if dec is None:
            return []
        return [gparv_reference(dec, eps, self.eps0)]

    def clone(self, eps: float) -> list[Gparv]:
        return [gparv_std_clone(self.eps0, eps)]

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Single(Mechanism):
    """One randomizer; `pair` picks the neighbour inputs of a table."""

    spec: RandomizerSpec
    pair: Optional[tuple] = None

    @property
    def eps0(self) -> float:
        return self.spec.eps0

    def scaled(self, eps0: float) -> "Single":
        return Single(self.spec.with_eps0(eps0), self.pair)

    def describe(self) -> str:
        return self.spec.describe()

    def _table_pair(self, kernel: Kernel) -> tuple:
        if self.pair is not None:
            return self.pair
        if len(kernel.inputs) < 2:
            raise ValueError("the table has a single input; no neighbouring pair exists")
        return kernel.inputs[0], kernel.inputs[1]

    def upper_decomposition(self) -> CloneDecomposition:
        kind = self.spec.kind
        if kind is Kind.LAPLACE01:
            raise UnsupportedKindError("the Laplace randomizer has no finite decomposition")
        if kind is Kind.TABULAR:
            x0, x1 = self._table_pair(self.spec.table)
            return simplify(primary_optimal(self.spec.table, x0, x1))
        return five_component(closed_form_pqr(self.spec), self.eps0)

    def lower_decomposition(self) -> Optional[CloneDecomposition]:
        spec = self.spec
        kind = spec.kind
        if kind is Kind.LAPLACE01:
            raise UnsupportedKindError("the Laplace lower bound is continuous")
        if kind is Kind.KRR:
            return _krr_lower(spec.eps0, spec.size)
        if kind is Kind.HR:
            if spec.size is None or spec.size < 4:
                return None
            return _table_lower(build_table(spec), (1, 2, 3))
        if kind is Kind.TABULAR:
            kernel = spec.table
            x0, x1 = self._table_pair(kernel)
            rest = [x for x in kernel.inputs if x not in (x0, x1)]
            return _table_lower(kernel, (x0, x1, rest[0] if rest else x1))
        D = spec.size if spec.size is not None and spec.size < LOWER_BOUND_D else LOWER_BOUND_D
        table = build_table(RandomizerSpec(kind, spec.eps0, D))
        return _table_lower(table, (0, 1, 2 if D >= 3 else 1))

    def upper(self, eps: float) -> list[Gparv]:
        if self.spec.kind is Kind.LAPLACE01:
            return [gparv_laplace_upper(self.eps0, eps)]
        return super().upper(eps)

    def lower(self, eps: float) -> list[Gparv]:
        if self.spec.kind is Kind.LAPLACE01:
            return [gparv_laplace_lower(self.eps0, eps)]
        return super().lower(eps)


def _krr_lower(eps0: float, k: int) -> CloneDecomposition:
    """k-RR with every other user on a third symbol (the second one if k = 2)."""
    e = math.exp(eps0)
    p = 1.0 / (e + k - 1)
    if k == 2:
        return CloneDecomposition([e * p, p], [p, e * p], [p, e * p], 0.0)
    a = [e * p, p, p] + [p] * (k - 3)
    b = [p, e * p, p] + [p] * (k - 3)
    c = [p, p, e * p] + [p] * (k - 3)
    return simplify(CloneDecomposition(a, b, c, 0.0))


def _table_lower(kernel: Kernel, triple: tuple) -> CloneDecomposition:
    rows = [kernel.matrix[kernel.index_of(x)] for x in triple]
    return simplify(CloneDecomposition(rows[0], rows[1], rows[2], 0.0))


@dataclass(frozen=True, eq=False)
class Constant(Mechanism):
    """Ignores its input; used for subsampling."""

    @property
    def eps0(self) -> float:
        return 0.0

    def scaled(self, eps0: float) -> "Constant":
        return self

    def describe(self) -> str:
        return "bot"

    def upper_decomposition(self) -> CloneDecomposition:
        return constant_decomposition()

    def lower_decomposition(self) -> CloneDecomposition:
        return constant_decomposition()


@dataclass(frozen=True, eq=False)
class Joint(Mechanism):
    """Independent randomizers on the coordinates of one user's record.

    Coordinates with changed=False hold the same value in both neighbouring
    records (Hamming adjacency).
    """

    parts: tuple
    changed: Optional[tuple] = None

    def __post_init__(self):
        if not self.parts:
            raise ValueError("joint composition needs at least one coordinate")
        ch = tuple(self.changed) if self.changed is not None else (True,) * len(self.parts)
        if len(ch) != len(self.parts):
            raise ValueError("one changed flag per coordinate")
        if not any(ch):
            raise ValueError("at least one coordinate must differ between neighbours")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "changed", ch)

    @property
    def eps0(self) -> float:
        return math.fsum(p.eps0 for p in self.parts)

    def scaled(self, eps0: float) -> "Joint":
        f = eps0 / self.eps0
        return Joint(tuple(p.scaled(p.eps0 * f) for p in self.parts), self.changed)

    def describe(self) -> str:
        inner = ",".join(p.describe() + ("" if c else "[same]")
                         for p, c in zip(self.parts, self.changed))
        return f"joint[{inner}]"

    def upper_decomposition(self) -> CloneDecomposition:
        decs = [p.upper_decomposition() for p in self.parts]
        return joint([d if c else unchanged(d) for d, c in zip(decs, self.changed)])

    def lower_decomposition(self) -> Optional[CloneDecomposition]:
        decs = []
        for p, c in zip(self.parts, self.changed):
            d = p.lower_decomposition()
            if d is None:
                return None
            decs.append(d if c else CloneDecomposition(d.a, d.a, d.c, d.beta))
        return joint(decs)


@dataclass(frozen=True, eq=False)
class Parallel(Mechanism):
    """Each user runs part i with probability weights[i]; the index is published."""

    weights: tuple
    parts: tuple

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if len(w) != len(self.parts) or not len(w):
            raise ValueError("one weight per part")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError(f"parallel weights must be non-negative and sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def eps0(self) -> float:
        return max(p.eps0 for p, w in zip(self.parts, self.weights) if w > 0)

    def scaled(self, eps0: float) -> "Parallel":
        f = eps0 / self.eps0
        return Parallel(self.weights, tuple(p.scaled(p.eps0 * f) if p.eps0 > 0 else p
                                            for p in self.parts))

    def describe(self) -> str:
        return "parallel[" + ",".join(f"{w:g}:{p.describe()}"
                                      for w, p in zip(self.weights, self.parts)) + "]"

    def upper_decomposition(self) -> CloneDecomposition:
        return parallel([(w, p.upper_decomposition()) for w, p in zip(self.weights, self.parts)])

    def lower_decomposition(self) -> Optional[CloneDecomposition]:
        decs = [p.lower_decomposition() for p in self.parts]
        if any(d is None for d in decs):
            return None
        return parallel(list(zip(self.weights, decs)))


def subsample(inner: Mechanism, rate: float) -> Parallel:
    """Poisson subsampling: run `inner` with probability `rate`, else output a constant."""
    if not 0 < rate <= 1:
        raise ValueError("subsampling rate must lie in (0, 1]")
    return Parallel((rate, 1 - rate), (inner, Constant()))


def upper_family(mech: Mechanism):
    """eps0 -> (eps -> variables), rescaling the mechanism's budget."""
    def at(eps0):
        return (mech if eps0 == mech.eps0 else mech.scaled(eps0)).upper
    return at


def lower_family(mech: Mechanism):
    def at(eps0):
        m = mech if eps0 == mech.eps0 else mech.scaled(eps0)
        try:
            if not m.lower(eps0):
                return None
        except (UnsupportedKindError, TableSizeError):
            return None
        return m.lower
    return at


def clone_family(mech: Mechanism):
    def at(eps0):
        return (mech if eps0 == mech.eps0 else mech.scaled(eps0)).clone
    return at


@dataclass(frozen=True)
class PairReport:
    pair: tuple
    report: BoundReport


def worst_case_pair(kernel: Kernel, eps0: float, eps: float, n: int,
                    step: Optional[float] = None) -> PairReport:
    """Sweep every ordered input pair and keep the one with the largest delta."""
    best = None
    for x0 in kernel.inputs:
        for x1 in kernel.inputs:
            if x0 == x1:
                continue
            dec = simplify(primary_optimal(kernel, x0, x1))
            rep = delta_bound(gparv_upper(dec, eps, eps0), n, step)
            if best is None or rep.delta_upper > best.report.delta_upper:
                best = PairReport((x0, x1), rep)
    if best is None:
        raise ValueError("the table needs at least two inputs")
    return best


__all__ = ["Mechanism", "Single", "Constant", "Joint", "Parallel", "subsample",
           "upper_family", "lower_family", "clone_family", "worst_case_pair", "PairReport"]
