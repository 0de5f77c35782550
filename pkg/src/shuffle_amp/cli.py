"""Command-line interface.

Examples::

    shuffle-amp bound --randomizer krr --k 10 --eps0 1.15 --n 1000 --eps 0.1
    shuffle-amp eps0 --randomizer krr --k 10 --n 1000 --eps 0.1 --delta 1e-6
    shuffle-amp curve --randomizer blh --n 10000 --eps0-values 0.5:4:0.5
    shuffle-amp decompose --parallel "0.8:krr(k=10),0.2:bot" --eps0 2
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .amplifier import (ResourceLimitError, SearchRangeError, curve, default_step, delta_bound,
                        find_eps0, find_epsilon)
from .decomposition import as_pqr
from .mechanisms import (Constant, Joint, Mechanism, Parallel, Single, lower_family,
                         subsample, upper_family, worst_case_pair)
from .randomizers import (Kind, RandomizerSpec, TableSizeError, load_kernel_json, tabular)

SCHEMA = "shuffle-amp/1"
CURVE_COLUMNS = ("eps0", "n", "eps_upper", "eps_lower", "delta_target", "grid_step")
EXIT_OK, EXIT_INVALID, EXIT_RESOURCE = 0, 2, 3

_SPEC_RE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*(?:\((.*)\))?\s*$")


class UsageError(ValueError):
    pass


def _split_top(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise UsageError(f"unbalanced parentheses in {text!r}")
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth:
        raise UsageError(f"unbalanced parentheses in {text!r}")
    out.append("".join(cur))
    return [s.strip() for s in out if s.strip()]


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes"):
        return True
    if v.lower() in ("0", "false", "no"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def parse_randomizer(text: str, eps0: Optional[float] = None) -> tuple[Mechanism, dict]:
    """Parse `name(key=value,...)`; returns the mechanism and any extra keys.

    Recognized keys: k, D, eps0, asymptotic, table. `bot` is the constant
    mechanism. Unrecognized keys are returned for the caller (e.g. `changed`).
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise UsageError(f"cannot parse randomizer {text!r}")
    name, body = m.group(1).lower(), m.group(2) or ""
    opts = {}
    for item in _split_top(body):
        if "=" not in item:
            if item.lower() == "asymptotic":
                opts["asymptotic"] = "true"
                continue
            raise UsageError(f"expected key=value in {text!r}, got {item!r}")
        k, v = item.split("=", 1)
        opts[k.strip().lower()] = v.strip()
    if name == "bot":
        return Constant(), opts
    kind = Kind.parse(name)
    e0 = float(opts.pop("eps0")) if "eps0" in opts else eps0
    size = opts.pop("k", None) or opts.pop("d", None)
    asym = _parse_bool(opts.pop("asymptotic")) if "asymptotic" in opts else None
    table = opts.pop("table", None)
    if kind is Kind.TABULAR:
        if table is None:
            raise UsageError("tabular randomizer needs table=<file>")
        return Single(tabular(load_kernel_json(table), e0)), opts
    if e0 is None:
        raise UsageError(f"no eps0 given for {text!r}")
    spec = RandomizerSpec(kind, e0, None if size is None else int(size), asymptotic=asym)
    return Single(spec), opts


def parse_parallel_spec(text: str, eps0: Optional[float] = None, tol: float = 1e-9):
    """Parse "w1:spec1,w2:spec2,..." into (weight, mechanism) pairs."""
    entries = []
    for item in _split_top(text):
        if ":" not in item:
            raise UsageError(f"parallel entry {item!r} needs the form weight:randomizer")
        w, rest = item.split(":", 1)
        try:
            weight = float(w)
        except ValueError:
            raise UsageError(f"bad weight {w!r}") from None
        if weight < 0 or not math.isfinite(weight):
            raise UsageError(f"weight {weight} must be a non-negative number")
        mech, extra = parse_randomizer(rest, eps0)
        if extra:
            raise UsageError(f"unknown options {sorted(extra)} in {item!r}")
        entries.append((weight, mech))
    if not entries:
        raise UsageError("empty parallel specification")
    total = math.fsum(w for w, _ in entries)
    if abs(total - 1) > tol:
        raise UsageError(f"parallel weights sum to {total!r}, not 1")
    return entries


def build_mechanism(args) -> Mechanism:
    eps0 = args.eps0
    if args.parallel:
        entries = parse_parallel_spec(args.parallel, eps0)
        mech: Mechanism = Parallel(tuple(w for w, _ in entries), tuple(m for _, m in entries))
    elif args.joint and not args.joint.strip().isdigit():
        items = _split_top(args.joint)
        share = None if eps0 is None else eps0 / len(items)
        parts, changed = [], []
        for item in items:
            m, extra = parse_randomizer(item, share)
            ch = _parse_bool(extra.pop("changed")) if "changed" in extra else True
            if extra:
                raise UsageError(f"unknown options {sorted(extra)} in {item!r}")
            parts.append(m)
            changed.append(ch)
        mech = Joint(tuple(parts), tuple(changed))
    else:
        if not args.randomizer:
            raise UsageError("give --randomizer, --parallel or a --joint list")
        text = args.randomizer
        if args.table_file:
            text = f"tabular(table={args.table_file})"
        elif "(" not in text:
            opts = []
            if args.k is not None:
                opts.append(f"k={args.k}")
            if args.D is not None:
                opts.append(f"D={args.D}")
            if args.asymptotic:
                opts.append("asymptotic")
            if opts:
                text += "(" + ",".join(opts) + ")"
        mech, extra = parse_randomizer(text, eps0)
        if extra:
            raise UsageError(f"unknown options {sorted(extra)}")
        if args.joint:
            m = int(args.joint)
            if m < 1:
                raise UsageError("--joint needs a positive integer")
            if m > 1:
                mech = Joint((mech.scaled(mech.eps0 / m),) * m)
    if args.adjacency_hamming is not None:
        if not isinstance(mech, Joint):
            raise UsageError("--adjacency-hamming applies to joint compositions")
        d = args.adjacency_hamming
        if not 1 <= d <= len(mech.parts):
            raise UsageError(f"--adjacency-hamming must lie in 1..{len(mech.parts)}")
        mech = Joint(mech.parts, tuple(i < d for i in range(len(mech.parts))))
    if args.subsample is not None:
        mech = subsample(mech, args.subsample)
    return mech


def _eps0_values(text: str) -> list[float]:
    if ":" in text and "," not in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise UsageError("range must be start:stop:step")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def _float(x):
    if x is None:
        return None
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _emit(doc, args, stream):
    text = _render(doc, args.format)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        stream.write(text)


def _render(doc, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if "rows" in doc and isinstance(doc["rows"], list):
        writer.writerow(doc["columns"])
        for row in doc["rows"]:
            writer.writerow(["" if row[c] is None else repr(row[c]) for c in doc["columns"]])
    else:
        writer.writerow(["key", "value"])
        for k, v in _flatten(doc):
            writer.writerow([k, "" if v is None else (repr(v) if isinstance(v, float) else v)])
    return buf.getvalue()


def _flatten(doc, prefix=""):
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, list):
            yield key, json.dumps(v)
        else:
            yield key, v


def _report_doc(rep) -> dict:
    return {k: _float(v) for k, v in rep.to_dict().items()}


def cmd_bound(args, mech):
    eps = args.eps
    step = args.step or default_step(mech.eps0)
    doc = {}
    if args.worst_case:
        if not (isinstance(mech, Single) and mech.spec.kind is Kind.TABULAR):
            raise UsageError("--worst-case applies to tabular randomizers")
        pr = worst_case_pair(mech.spec.table, mech.eps0, eps, args.n, step)
        rep = pr.report
        doc["pair"] = list(pr.pair)
    else:
        rep = delta_bound(mech.upper(eps), args.n, step, "round_up")
    out = _report_doc(rep)
    if not args.no_lower:
        low = lower_family(mech)(mech.eps0)
        if low is not None:
            out["delta_lower"] = delta_bound(low(eps), args.n, step, "round_down").delta_lower
    if args.clone:
        out["delta_clone"] = delta_bound(mech.clone(eps), args.n, step, "round_up").delta_upper
    doc.update(out)
    return doc


def cmd_epsilon(args, mech):
    step = args.step or default_step(mech.eps0)
    eps = find_epsilon(mech.upper, args.n, args.delta, step, args.tol)
    rep = delta_bound(mech.upper(eps), args.n, step)
    return {"eps": eps, "delta_target": args.delta, "report": _report_doc(rep)}


def cmd_eps0(args, mech):
    if args.eps is None:
        raise UsageError("eps0 search needs --eps (the target)")
    step_fn = (lambda e0: args.step) if args.step else None
    e0 = find_eps0(upper_family(mech), args.n, args.delta, args.eps,
                   args.grid_step, args.eps0_max, step_fn)
    m = mech.scaled(e0)
    rep = delta_bound(m.upper(args.eps), args.n, args.step or default_step(e0))
    return {"eps0": e0, "eps_target": args.eps, "delta_target": args.delta,
            "grid_step": args.grid_step, "report": _report_doc(rep)}


def cmd_curve(args, mech):
    if not args.eps0_values:
        raise UsageError("curve needs --eps0-values")
    values = _eps0_values(args.eps0_values)
    step_fn = (lambda e0: args.step) if args.step else None
    low = None if args.no_lower else lower_family(mech)
    pts = curve(upper_family(mech), args.n, args.delta, values, low, step_fn, args.tol)
    rows = [{"eps0": p.eps0, "n": args.n, "eps_upper": p.eps_upper, "eps_lower": p.eps_lower,
             "delta_target": args.delta, "grid_step": args.step or default_step(p.eps0)}
            for p in pts]
    return {"columns": list(CURVE_COLUMNS), "rows": rows}


def cmd_decompose(args, mech):
    dec = mech.upper_decomposition()
    doc = dec.to_dict()
    doc["gamma"] = dec.gamma
    pqr = as_pqr(dec, mech.eps0)
    if pqr is not None:
        doc.update({"p": pqr.p, "q": pqr.q, "r": pqr.r})
    return doc


def cmd_gparv_dump(args, mech):
    eps = args.eps
    if args.which == "lower":
        low = lower_family(mech)(mech.eps0)
        gs = low(eps) if low is not None else []
    else:
        gs = getattr(mech, args.which)(eps)
    return {"which": args.which, "variables": [g.to_dict() for g in gs],
            "means": [g.mean() for g in gs], "expected_mean": 1 - math.exp(eps)}


COMMANDS = {"bound": cmd_bound, "epsilon": cmd_epsilon, "eps0": cmd_eps0, "curve": cmd_curve,
            "decompose": cmd_decompose, "gparv-dump": cmd_gparv_dump}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INVALID)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shuffle-amp", description="Privacy amplification bounds for shuffled local randomizers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        g = s.add_argument_group("randomizer")
        g.add_argument("--randomizer", help="krr, blh, rappor, oue, hr, laplace01 or tabular")
        g.add_argument("--k", type=int)
        g.add_argument("--D", type=int)
        g.add_argument("--asymptotic", action="store_true")
        g.add_argument("--eps0", type=float)
        g.add_argument("--table-file")
        g.add_argument("--joint", help="m (split eps0 evenly) or a list like 'krr(k=4),blh(D=3,changed=0)'")
        g.add_argument("--adjacency-hamming", type=int, help="only the first d coordinates differ")
        g.add_argument("--parallel", help="e.g. '0.5:krr(k=10),0.5:blh'; 'bot' is the constant mechanism")
        g.add_argument("--subsample", type=float, help="Poisson sampling rate")
        s.add_argument("--n", type=int, default=None)
        s.add_argument("--eps", type=float)
        s.add_argument("--delta", type=float, default=1e-6)
        s.add_argument("--step", type=float, help="lattice step (default (e^eps0 - 1)/1000)")
        s.add_argument("--tol", type=float, default=1e-3)
        s.add_argument("--format", choices=("json", "csv"), default="csv" if name == "curve" else "json")
        s.add_argument("--output")
        if name == "bound":
            s.add_argument("--worst-case", action="store_true", help="sweep all input pairs of a table")
            s.add_argument("--no-lower", action="store_true")
            s.add_argument("--clone", action="store_true", help="also report the standard-clone bound")
        if name == "eps0":
            s.add_argument("--grid-step", type=float, default=0.01)
            s.add_argument("--eps0-max", type=float, default=10.0)
        if name == "curve":
            s.add_argument("--eps0-values")
            s.add_argument("--no-lower", action="store_true")
        if name == "gparv-dump":
            s.add_argument("--which", choices=("upper", "lower", "clone"), default="upper")
    return p


def _check_args(args):
    needs_n = args.command in ("bound", "epsilon", "eps0", "curve")
    if needs_n and (args.n is None or args.n < 1):
        raise UsageError("--n must be a positive integer")
    if args.command in ("bound", "gparv-dump") and (args.eps is None or args.eps < 0):
        raise UsageError("--eps must be a non-negative number")
    if not 0 < args.delta < 1:
        raise UsageError("--delta must lie in (0, 1)")
    if args.step is not None and not args.step > 0:
        raise UsageError("--step must be positive")
    if args.command in ("eps0", "curve") and args.eps0 is None:
        args.eps0 = 1.0  # placeholder; the search rescales it


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _check_args(args)
        mech = build_mechanism(args)
        body = COMMANDS[args.command](args, mech)
    except (ResourceLimitError, TableSizeError, MemoryError) as exc:
        sys.stderr.write(f"shuffle-amp: resource limit: {exc}\n")
        return EXIT_RESOURCE
    except (ValueError, KeyError, SearchRangeError, OSError) as exc:
        sys.stderr.write(f"shuffle-amp: error: {exc}\n")
        return EXIT_INVALID
    if args.format == "json":
        doc = {"schema": SCHEMA, "command": args.command, "mechanism": mech.describe(),
               "eps0": mech.eps0 if args.command != "eps0" else body.get("eps0")}
        doc.update(body)
    else:
        doc = body
    _emit(doc, args, stdout)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
