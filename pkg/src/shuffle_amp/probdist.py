"""Finite probability distributions and conditional kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

MASS_TOL = 1e-12


class DomainMismatchError(ValueError):
    """Two distributions were compared over different outcome sets."""


class InvalidWeightError(ValueError):
    """A mixture weight was negative or the weights do not sum to one."""


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """Probability mass function over a finite list of opaque labels.

    Labels are kept in the order given. Zero-mass outcomes are allowed, which
    keeps rows of a kernel aligned.
    """

    outcomes: tuple
    masses: np.ndarray = field(repr=False)
    atol: float = field(default=MASS_TOL, repr=False)

    def __post_init__(self):
        outcomes = tuple(self.outcomes)
        masses = _frozen(self.masses)
        if masses.ndim != 1 or masses.shape[0] != len(outcomes):
            raise ValueError("masses must be a 1-D array aligned with outcomes")
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("outcome labels must be distinct")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and non-negative")
        total = float(np.sum(masses))
        if abs(total - 1.0) > self.atol:
            raise ValueError(f"masses sum to {total!r}, not 1")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_dict(cls, mapping: Mapping[Hashable, float]) -> "FiniteDist":
        return cls(tuple(mapping.keys()), list(mapping.values()))

    @classmethod
    def point(cls, label) -> "FiniteDist":
        return cls((label,), [1.0])

    @classmethod
    def uniform(cls, labels: Iterable) -> "FiniteDist":
        labels = tuple(labels)
        return cls(labels, np.full(len(labels), 1.0 / len(labels)))

    def __len__(self) -> int:
        return len(self.outcomes)

    def __getitem__(self, label) -> float:
        return float(self.masses[self._index()[label]])

    def get(self, label, default: float = 0.0) -> float:
        i = self._index().get(label)
        return default if i is None else float(self.masses[i])

    def _index(self) -> dict:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {y: i for i, y in enumerate(self.outcomes)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def as_dict(self) -> dict:
        return dict(zip(self.outcomes, self.masses.tolist()))

    def aligned(self, outcomes: Sequence) -> np.ndarray:
        """Masses re-ordered to `outcomes`; labels missing here get mass 0."""
        return np.array([self.get(y) for y in outcomes])

    def allclose(self, other: "FiniteDist", atol: float = 1e-12) -> bool:
        if set(self.outcomes) != set(other.outcomes):
            return False
        return bool(np.allclose(self.masses, other.aligned(self.outcomes), rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class Kernel:
    """Conditional law R(x)(y) stored as a dense |inputs| x |outputs| matrix."""

    inputs: tuple
    outputs: tuple
    matrix: np.ndarray = field(repr=False)
    atol: float = field(default=MASS_TOL, repr=False)

    def __post_init__(self):
        inputs, outputs = tuple(self.inputs), tuple(self.outputs)
        matrix = _frozen(self.matrix)
        if matrix.shape != (len(inputs), len(outputs)):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match "
                f"{len(inputs)} inputs x {len(outputs)} outputs")
        if len(set(inputs)) != len(inputs) or len(set(outputs)) != len(outputs):
            raise ValueError("input and output labels must be distinct")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise ValueError("kernel entries must be finite and non-negative")
        sums = matrix.sum(axis=1)
        bad = np.abs(sums - 1.0) > self.atol
        if np.any(bad):
            x = inputs[int(np.argmax(bad))]
            raise ValueError(f"row {x!r} sums to {sums[np.argmax(bad)]!r}, not 1")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_rows(cls, rows: Mapping[Hashable, FiniteDist]) -> "Kernel":
        inputs = tuple(rows)
        outputs = rows[inputs[0]].outcomes
        for x in inputs:
            if rows[x].outcomes != outputs:
                raise DomainMismatchError("all rows must share the same outcome list")
        return cls(inputs, outputs, np.stack([rows[x].masses for x in inputs]))

    def index_of(self, x) -> int:
        try:
            return self.inputs.index(x)
        except ValueError:
            raise KeyError(f"unknown input label {x!r}") from None

    def row(self, x) -> FiniteDist:
        return FiniteDist(self.outputs, self.matrix[self.index_of(x)], atol=self.atol)

    def infimum(self) -> np.ndarray:
        """Per-output minimum over inputs (unnormalized blanket)."""
        return self.matrix.min(axis=0)

    def max_log_ratio(self) -> float:
        """Smallest eps0 for which the kernel is eps0-LDP (inf if supports differ)."""
        hi = self.matrix.max(axis=0)
        lo = self.matrix.min(axis=0)
        if np.any((lo == 0) & (hi > 0)):
            return float("inf")
        live = hi > 0
        return float(np.max(np.log(hi[live] / lo[live]))) if np.any(live) else 0.0


def hockey_stick(p: FiniteDist, q: FiniteDist, alpha: float) -> float:
    """Sum over outcomes of max(0, p(y) - alpha * q(y))."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if set(p.outcomes) != set(q.outcomes):
        raise DomainMismatchError("p and q are defined over different outcome sets")
    diff = p.masses - alpha * q.aligned(p.outcomes)
    return float(np.clip(np.sum(diff[diff > 0]), 0.0, 1.0))


def mixture(parts: Sequence[tuple[float, FiniteDist]]) -> FiniteDist:
    """Pointwise weighted sum over the union of outcome labels."""
    if not parts:
        raise InvalidWeightError("mixture needs at least one part")
    weights = np.array([w for w, _ in parts], dtype=float)
    if np.any(weights < 0):
        raise InvalidWeightError("mixture weights must be non-negative")
    if abs(weights.sum() - 1.0) > MASS_TOL:
        raise InvalidWeightError(f"mixture weights sum to {weights.sum()!r}")
    labels: dict = {}
    for _, d in parts:
        for y in d.outcomes:
            labels.setdefault(y, len(labels))
    out = np.zeros(len(labels))
    for w, d in parts:
        out[[labels[y] for y in d.outcomes]] += w * d.masses
    return FiniteDist(tuple(labels), out)


def product(p: FiniteDist, q: FiniteDist) -> FiniteDist:
    """Independent pair (A, B) with A ~ p and B ~ q, labelled by tuples."""
    labels = tuple((a, b) for a in p.outcomes for b in q.outcomes)
    return FiniteDist(labels, np.outer(p.masses, q.masses).ravel())
