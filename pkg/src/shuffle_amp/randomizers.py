"""Catalog of local randomizers: closed-form decomposition masses and explicit tables."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .probdist import Kernel

# Largest explicit output space we are willing to enumerate.
MAX_TABLE_OUTPUTS = 2**20
MAX_TABLE_ENTRIES = 2**25
LDP_RTOL = 1e-9
JSON_ROW_TOL = 1e-9


class Kind(enum.Enum):
    KRR = "krr"
    BLH = "blh"
    RAPPOR = "rappor"
    OUE = "oue"
    HR = "hr"
    LAPLACE01 = "laplace01"
    TABULAR = "tabular"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown randomizer kind {name!r}") from None


class UnsupportedKindError(ValueError):
    pass


class TableSizeError(ValueError):
    """Explicit table would exceed the enumeration limit."""


class LDPViolationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RandomizerSpec:
    """A local randomizer from the catalog, or an explicit table.

    `size` is k for k-RR and the domain size D for the other catalog kinds.
    When `asymptotic` is left as None it defaults to True exactly when no
    size is given.
    """

    kind: Kind
    eps0: float
    size: Optional[int] = None
    table: Optional[Kernel] = field(default=None, repr=False)
    asymptotic: Optional[bool] = None

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, Kind) else Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if not (self.eps0 > 0 and math.isfinite(self.eps0)):
            raise ValueError("eps0 must be a positive finite number")
        if self.size is not None and int(self.size) != self.size:
            raise ValueError("size must be an integer")
        size = None if self.size is None else int(self.size)
        object.__setattr__(self, "size", size)
        if kind is Kind.KRR and (size is None or size < 2):
            raise ValueError("k-RR needs k >= 2")
        if kind in (Kind.BLH, Kind.RAPPOR, Kind.OUE) and size is not None and size < 2:
            raise ValueError(f"{kind.value} needs D >= 2")
        if kind is Kind.HR and size is not None and (size < 2 or size & (size - 1)):
            raise ValueError("HR needs D to be a power of two, D >= 2")
        if kind is Kind.LAPLACE01 and size is not None:
            raise ValueError("laplace01 takes no size")
        if kind is Kind.TABULAR:
            if self.table is None:
                raise ValueError("tabular randomizer needs a table")
            check_ldp(self.table, self.eps0)
        elif self.table is not None:
            raise ValueError("only tabular randomizers carry a table")
        if kind is Kind.KRR and self.asymptotic:
            raise ValueError("k-RR has no asymptotic form")
        if self.asymptotic is False and size is None and kind in (
                Kind.BLH, Kind.RAPPOR, Kind.OUE, Kind.HR):
            raise ValueError("exact formulas need D")

    @property
    def is_asymptotic(self) -> bool:
        if self.kind not in (Kind.BLH, Kind.RAPPOR, Kind.OUE, Kind.HR):
            return False
        return self.size is None if self.asymptotic is None else bool(self.asymptotic)

    def with_eps0(self, eps0: float) -> "RandomizerSpec":
        if self.kind is Kind.TABULAR:
            raise ValueError("a tabular randomizer has a fixed eps0")
        return RandomizerSpec(self.kind, eps0, self.size, None, self.asymptotic)

    def describe(self) -> str:
        if self.kind is Kind.KRR:
            return f"krr(k={self.size})"
        if self.size is None or self.kind in (Kind.LAPLACE01, Kind.TABULAR):
            return self.kind.value
        tail = ",asymptotic" if self.is_asymptotic else ""
        return f"{self.kind.value}(D={self.size}{tail})"


@dataclass(frozen=True)
class PqrGamma:
    """Masses of the five-component form; beta is the leftover."""

    p: float
    q: float
    r: float

    def __post_init__(self):
        if min(self.p, self.q, self.r) < -1e-15:
            raise ValueError(f"negative component mass in {self}")
        if self.beta < -1e-12:
            raise ValueError(f"2p + q + r exceeds 1 in {self}")

    @property
    def gamma(self) -> float:
        return 2 * self.p + self.q + self.r

    @property
    def beta(self) -> float:
        return 1.0 - self.gamma


def closed_form_pqr(spec: RandomizerSpec) -> PqrGamma:
    """Five-component masses (p, q, r) for the catalog randomizers."""
    e = math.exp(spec.eps0)
    s = math.exp(spec.eps0 / 2)
    D = spec.size
    asym = spec.is_asymptotic
    kind = spec.kind
    if kind is Kind.KRR:
        p = 1.0 / (e + D - 1)
        return PqrGamma(p, 0.0, (D - 2) * p)
    if kind is Kind.BLH:
        p = 1.0 / (2 * (e + 1))
        if asym:
            return PqrGamma(p, p, p)
        t = 1.0 / (2 ** (D - 1) * (e + 1))
        return PqrGamma(p, p - t, p + e * t)
    if kind is Kind.RAPPOR:
        p = 1.0 / (1 + s) ** 2
        if asym:
            return PqrGamma(p, p / s, p * s)
        t = 1.0 / (1 + s) ** D
        return PqrGamma(p, (p - t) / s, s * (p + t))
    if kind is Kind.OUE:
        p = 1.0 / (2 * (e + 1))
        if asym:
            return PqrGamma(p, p / e, p * e)
        t = 1.0 / (2 * (e + 1) ** (D - 1))
        return PqrGamma(p, (p - t) / e, e * p + t)
    if kind is Kind.HR:
        p = 1.0 / (2 * (e + 1))
        if asym:
            return PqrGamma(p, p, p)
        if D < 4:
            raise ValueError("HR with D = 2 has a single admissible input; no pair to decompose")
        t = 2.0 / ((e + 1) * D)
        return PqrGamma(p, p - t, p + e * t)
    raise UnsupportedKindError(f"no closed form for {kind.value}")


def check_ldp(kernel: Kernel, eps0: float, rtol: float = LDP_RTOL) -> None:
    """Raise unless every output ratio across inputs is at most e^eps0 (1 + rtol)."""
    hi = kernel.matrix.max(axis=0)
    lo = kernel.matrix.min(axis=0)
    bound = math.exp(eps0) * (1 + rtol)
    bad = hi > bound * lo
    if np.any(bad):
        j = int(np.argmax(bad))
        ratio = np.inf if lo[j] == 0 else hi[j] / lo[j]
        raise LDPViolationError(
            f"output {kernel.outputs[j]!r} has ratio {ratio:.6g} > e^eps0 = {math.exp(eps0):.6g}")


def _bits(v: int, D: int) -> tuple:
    return tuple((v >> i) & 1 for i in range(D))


def build_table(spec: RandomizerSpec) -> Kernel:
    """Explicit probability table R(x)(y) for a catalog randomizer."""
    kind, eps0, D = spec.kind, spec.eps0, spec.size
    if kind is Kind.TABULAR:
        return spec.table
    if kind is Kind.LAPLACE01:
        raise UnsupportedKindError("the Laplace randomizer has a continuous output space")
    if D is None:
        raise ValueError(f"{kind.value} table needs an explicit size")
    n_out = {Kind.KRR: D, Kind.BLH: 2.0 ** (D + 1), Kind.RAPPOR: 2.0 ** D,
             Kind.OUE: 2.0 ** D, Kind.HR: D}[kind]
    n_in = D - 1 if kind is Kind.HR else D
    if n_out > MAX_TABLE_OUTPUTS or n_out * n_in > MAX_TABLE_ENTRIES:
        raise TableSizeError(f"{spec.describe()} table has {n_out:.0f} outputs; too large")
    e = math.exp(eps0)

    if kind is Kind.KRR:
        m = np.full((D, D), 1.0 / (e + D - 1))
        np.fill_diagonal(m, e / (e + D - 1))
        return Kernel(tuple(range(D)), tuple(range(D)), m)

    if kind is Kind.BLH:
        # Full hash family {f: [D] -> [2]}; h is encoded by its bit tuple.
        hashes = [_bits(v, D) for v in range(2 ** D)]
        outputs = tuple((h, bit) for h in hashes for bit in (0, 1))
        hx = np.array(hashes)  # (2^D, D)
        bit = np.array([0, 1])
        match = hx.T[:, :, None] == bit[None, None, :]  # (D, 2^D, 2)
        m = np.where(match, e / (1 + e), 1 / (1 + e)) / 2 ** D
        return Kernel(tuple(range(D)), outputs, m.reshape(D, -1))

    if kind is Kind.RAPPOR:
        ys = np.array([_bits(v, D) for v in range(2 ** D)])
        enc = np.eye(D, dtype=int)
        dh = (enc[:, None, :] != ys[None, :, :]).sum(axis=2)
        m = np.exp((D - dh) * eps0 / 2) / (1 + math.exp(eps0 / 2)) ** D
        return Kernel(tuple(range(D)), tuple(map(tuple, ys)), m)

    if kind is Kind.OUE:
        ys = np.array([_bits(v, D) for v in range(2 ** D)])
        weight = ys.sum(axis=1)
        # Own bit is a fair coin; every other bit is 1 with probability 1/(1+e).
        others = weight[None, :] - ys.T
        m = np.exp((D - 1 - others) * eps0) / (2 * (1 + e) ** (D - 1))
        return Kernel(tuple(range(D)), tuple(map(tuple, ys)), m)

    if kind is Kind.HR:
        xs = np.arange(1, D)
        ys = np.arange(D)
        parity = np.array([[bin(x & y).count("1") & 1 for y in ys] for x in xs])
        w = np.exp(eps0 / 2 * (1 - 2 * parity))
        m = w / w.sum(axis=1, keepdims=True)
        return Kernel(tuple(xs.tolist()), tuple(ys.tolist()), m)

    raise UnsupportedKindError(kind.value)


def laplace01_cdf_parv(eps0: float, eps: float, t):
    """CDF of the blanket-conditional amplification variable for Laplace on {0, 1}.

    Vectorized over `t`. gamma = exp(-eps0/2) scales the branch points.
    """
    t = np.asarray(t, dtype=float)
    g = math.exp(-eps0 / 2)
    ee = math.exp(eps)
    t0 = g * (1 - math.exp(eps0 + eps))
    t1 = g * (1 - ee)
    t2 = g * (math.exp(eps0) - ee)
    u = t / g
    with np.errstate(invalid="ignore", divide="ignore"):
        left = 0.5 * np.sqrt(ee / (1 - u))
        right = 1 - 0.5 / np.sqrt(u + ee)
    out = np.where(t < t0, 0.0, np.where(t < t1, left, np.where(t < t2, right, 1.0)))
    return out if out.ndim else float(out)


def load_kernel_json(source) -> Kernel:
    """Read a tabular kernel from {"inputs", "outputs", "rows"} JSON.

    `source` is a path, a JSON string, or an already-parsed mapping. Rows
    are renormalized after the 1e-9 row-sum check.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        doc = json.loads(Path(source).read_text())
    else:
        doc = json.loads(source)
    try:
        inputs = [_label(v) for v in doc["inputs"]]
        outputs = [_label(v) for v in doc["outputs"]]
        rows = np.array(doc["rows"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed kernel document: {exc}") from None
    if rows.shape != (len(inputs), len(outputs)):
        raise ValueError(f"rows have shape {rows.shape}, expected {(len(inputs), len(outputs))}")
    if np.any(rows < 0) or not np.all(np.isfinite(rows)):
        raise ValueError("kernel rows must be finite and non-negative")
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1) > JSON_ROW_TOL):
        i = int(np.argmax(np.abs(sums - 1)))
        raise ValueError(f"row {inputs[i]!r} sums to {sums[i]!r}")
    return Kernel(tuple(inputs), tuple(outputs), rows / sums[:, None])


def _label(v):
    # JSON lists are unhashable; labels come back as tuples.
    return tuple(_label(x) for x in v) if isinstance(v, list) else v


def tabular(kernel: Kernel, eps0: Optional[float] = None) -> RandomizerSpec:
    """Wrap a kernel; eps0 defaults to its tightest LDP level."""
    if eps0 is None:
        eps0 = kernel.max_log_ratio()
        if not math.isfinite(eps0):
            raise LDPViolationError("kernel rows have different supports")
        eps0 = max(eps0, 1e-12)
    return RandomizerSpec(Kind.TABULAR, eps0, table=kernel)


__all__ = [
    "Kind", "RandomizerSpec", "PqrGamma", "closed_form_pqr", "build_table",
    "laplace01_cdf_parv", "load_kernel_json", "check_ldp", "tabular",
    "UnsupportedKindError", "TableSizeError", "LDPViolationError",
]
