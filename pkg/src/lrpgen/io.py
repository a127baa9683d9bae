"""Instance files, results files and classical benchmark parsing.

The canonical instance format is line oriented text. Every float is written
with :meth:`float.hex` so a parse of an emitted file reproduces the exact
64-bit values::

    lrpgen-instance 1
    name demo
    n 2
    m 1
    capacity 0x1.4000000000000p+4
    setup_cost 0x1.3333333333333p-2
    normalized 1
    coefficients alpha 0x1p+0 beta 0x1p+0 ...
    depots
    D <x> <y> <max_supply> <opening_cost>
    customers
    C <x> <y> <demand>
    ...
    end

Decimal literals are accepted on input as well.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterator

import numpy as np

from .cost import CostBreakdown, CostCoefficients
from .errors import ParseError, UnsupportedDialect
from .instance import FleetConfig, Instance
from .solution import RoutePlan

MAGIC = "lrpgen-instance"
VERSION = 1
_COEFF_NAMES = ("alpha", "beta", "delta", "lam", "epsilon", "l_min", "l_max")


def _hex(x: float) -> str:
    return float(x).hex()


def _num(token: str, line: int, col: int) -> float:
    t = token.lower()
    try:
        if "x" in t or t.lstrip("+-") in ("inf", "infinity", "nan"):
            return float.fromhex(token)
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", line, col) from None


# -- canonical format -----------------------------------------------------------

def emit_canonical(instance: Instance, coeffs: CostCoefficients | None = None) -> str:
    out = [f"{MAGIC} {VERSION}", f"name {'_'.join((instance.name or '-').split())}", f"n {instance.n}", f"m {instance.m}",
           f"capacity {_hex(instance.fleet.capacity)}", f"setup_cost {_hex(instance.fleet.setup_cost)}",
           f"normalized {int(instance.normalized)}"]
    if coeffs is not None:
        out.append("coefficients " + " ".join(f"{k} {_hex(getattr(coeffs, k))}" for k in _COEFF_NAMES))
    out.append("depots")
    for (x, y), M, O in zip(instance.depot_xy, instance.max_supply, instance.opening_cost):
        out.append(f"D {_hex(x)} {_hex(y)} {_hex(M)} {_hex(O)}")
    out.append("customers")
    for (x, y), q in zip(instance.customer_xy, instance.demand):
        out.append(f"C {_hex(x)} {_hex(y)} {_hex(q)}")
    out.append("end")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class CanonicalDocument:
    instance: Instance
    coeffs: CostCoefficients | None


class _Lines:
    def __init__(self, text: str):
        self.lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())
                      if ln.strip() and not ln.lstrip().startswith("#")]
        self.pos = 0
        self.last = len(text.splitlines())

    def next(self, section: str) -> tuple[int, list[tuple[str, int]]]:
        if self.pos >= len(self.lines):
            raise ParseError(f"file truncated: missing {section}", self.last + 1, 1)
        no, ln = self.lines[self.pos]
        self.pos += 1
        toks, col = [], 0
        for tok in ln.split():
            col = ln.index(tok, col)
            toks.append((tok, col + 1))
            col += len(tok)
        return no, toks


def _keyword(lines: _Lines, key: str, count: int = 1):
    no, toks = lines.next(key)
    if toks[0][0] != key:
        raise ParseError(f"expected {key!r}, found {toks[0][0]!r}", no, toks[0][1])
    if len(toks) != count + 1:
        raise ParseError(f"{key!r} takes {count} value(s)", no, toks[-1][1])
    return no, toks[1:]


def parse_canonical_document(text: str) -> CanonicalDocument:
    lines = _Lines(text)
    no, toks = lines.next("header")
    if toks[0][0] != MAGIC:
        raise ParseError(f"not an instance file (expected {MAGIC!r})", no, toks[0][1])
    if len(toks) < 2 or toks[1][0] != str(VERSION):
        raise ParseError(f"unsupported format version {toks[1][0] if len(toks) > 1 else '?'}", no,
                         toks[1][1] if len(toks) > 1 else toks[0][1])
    _, (name,) = _keyword(lines, "name")
    header = {}
    for key in ("n", "m"):
        ln, ((tok, col),) = _keyword(lines, key)
        if not tok.isdigit():
            raise ParseError(f"{key} must be a non-negative integer", ln, col)
        header[key] = int(tok)
    nums = {}
    for key in ("capacity", "setup_cost", "normalized"):
        ln, ((tok, col),) = _keyword(lines, key)
        nums[key] = _num(tok, ln, col)
    coeffs = None
    no, toks = lines.next("depots section")
    if toks[0][0] == "coefficients":
        vals = {}
        rest = toks[1:]
        if len(rest) != 2 * len(_COEFF_NAMES):
            raise ParseError("coefficient block must list all seven weights", no, toks[0][1])
        for (k, kc), (v, vc) in zip(rest[::2], rest[1::2]):
            if k not in _COEFF_NAMES:
                raise ParseError(f"unknown coefficient {k!r}", no, kc)
            vals[k] = _num(v, no, vc)
        coeffs = CostCoefficients(**vals)
        no, toks = lines.next("depots section")
    if toks[0][0] != "depots":
        raise ParseError(f"expected 'depots', found {toks[0][0]!r}", no, toks[0][1])

    def records(tag: str, count: int, width: int, section: str):
        rows = []
        for _ in range(count):
            ln, toks = lines.next(section)
            if toks[0][0] != tag:
                raise ParseError(f"expected a {tag!r} record in {section} (header promises {count})", ln, toks[0][1])
            if len(toks) != width + 1:
                raise ParseError(f"{tag!r} record needs {width} values", ln, toks[-1][1])
            rows.append([_num(t, ln, c) for t, c in toks[1:]])
        return np.array(rows, dtype=np.float64).reshape(count, width)

    dep = records("D", header["m"], 4, "depots section")
    no, toks = lines.next("customers section")
    if toks[0][0] != "customers":
        raise ParseError(f"expected 'customers' after {header['m']} depot records, found {toks[0][0]!r}",
                         no, toks[0][1])
    cus = records("C", header["n"], 3, "customers section")
    no, toks = lines.next("end marker")
    if toks[0][0] != "end":
        raise ParseError(f"expected 'end' after {header['n']} customer records, found {toks[0][0]!r}",
                         no, toks[0][1])
    try:
        inst = Instance(cus[:, :2], cus[:, 2], dep[:, :2], dep[:, 2], dep[:, 3],
                        FleetConfig(nums["capacity"], nums["setup_cost"]),
                        name="" if name[0] == "-" else name[0], normalized=bool(nums["normalized"]))
    except ValueError as exc:
        raise ParseError(f"invalid instance data: {exc}", no, 1) from None
    return CanonicalDocument(inst, coeffs)


def parse_canonical(text: str) -> Instance:
    return parse_canonical_document(text).instance


def instance_hash(instance: Instance) -> str:
    return hashlib.sha256(emit_canonical(instance).encode()).hexdigest()


# -- results --------------------------------------------------------------------

def result_record(instance: Instance, method: str, seed, cost: CostBreakdown, plan: RoutePlan,
                  wall_time: float, extra: dict | None = None) -> dict:
    rec = {
        "instance": instance.name or None,
        "instance_hash": instance_hash(instance),
        "method": method,
        "seed": seed,
        "cost": cost.as_dict(),
        "routes": [{"depot": r.depot, "stops": list(r.stops), "load": r.load} for r in plan.routes],
        "wall_time": wall_time,
    }
    if extra:
        rec.update(extra)
    return rec


def write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- classical benchmark layouts ----------------------------------------------------
# Each dialect is an ordered list of (field, count) where count names a header
# field ("n", "m") or is 1. Fields are read as a flat whitespace token stream.

DIALECTS: dict[str, list[tuple[str, str | int]]] = {
    "prodhon": [
        ("n", 1), ("m", 1),
        ("depot_xy", "2m"), ("customer_xy", "2n"),
        ("capacity", 1), ("depot_capacity", "m"), ("demand", "n"),
        ("opening_cost", "m"), ("route_cost", 1), ("rounding", 1),
    ],
    "barreto": [
        ("n", 1), ("m", 1),
        ("customer_xy", "2n"), ("depot_xy", "2m"),
        ("capacity", 1), ("depot_capacity", "m"), ("demand", "n"),
        ("opening_cost", "m"), ("route_cost", 1), ("rounding", 1),
    ],
}


@dataclass(frozen=True)
class BenchmarkInstance:
    """A parsed benchmark case.

    ``instance`` has coordinates mapped into the unit square via
    ``(raw - offset) / scale`` and keeps fixed costs in raw units, so
    ``scale * length + fixed costs`` reproduces the raw objective.
    ``raw`` is the untouched instance.
    """

    instance: Instance
    raw: Instance
    scale: float
    offset: tuple[float, float]
    rounding: int
    header: tuple[int, int]
    dialect: str

    def argmin_equivalent(self, coeffs: CostCoefficients = CostCoefficients()) -> tuple[Instance, CostCoefficients]:
        """Normalised instance and weights whose objective is the raw objective divided by ``scale``."""
        s = self.scale
        inst = self.instance
        fleet = FleetConfig(inst.fleet.capacity, inst.fleet.setup_cost / s)
        scaled = Instance(inst.customer_xy, inst.demand, inst.depot_xy, inst.max_supply,
                          inst.opening_cost / s, fleet, name=inst.name)
        return scaled, replace(coeffs, delta=coeffs.delta / s)


def _tokens(text: str) -> Iterator[tuple[str, int, int]]:
    for no, ln in enumerate(text.splitlines(), 1):
        col = 0
        for tok in ln.split():
            col = ln.index(tok, col)
            yield tok, no, col + 1
            col += len(tok)


def parse_benchmark(text: str, dialect: str = "prodhon", name: str = "") -> BenchmarkInstance:
    if dialect not in DIALECTS:
        raise UnsupportedDialect(f"unknown dialect {dialect!r}; known: {sorted(DIALECTS)}")
    toks = list(_tokens(text))
    last = (len(text.splitlines()) + 1, 1)
    pos = 0
    fields: dict = {}
    for key, count in DIALECTS[dialect]:
        if isinstance(count, str):
            mult = int(count[:-1] or 1)
            k = mult * fields[count[-1]]
        else:
            k = count
        if pos + k > len(toks):
            raise ParseError(f"file truncated while reading {key} ({k} values expected)", *last)
        vals = [_num(t, ln, c) for t, ln, c in toks[pos:pos + k]]
        if key in ("n", "m", "rounding"):
            t, ln, c = toks[pos]
            if vals[0] != int(vals[0]) or vals[0] < 0:
                raise ParseError(f"{key} must be a non-negative integer", ln, c)
            vals = [int(vals[0])]
        fields[key] = vals[0] if k == 1 and key in ("n", "m", "capacity", "route_cost", "rounding") else vals
        pos += k
    if pos != len(toks):
        t, ln, c = toks[pos]
        raise ParseError(f"unexpected trailing data {t!r}", ln, c)
    n, m = fields["n"], fields["m"]
    cxy = np.array(fields["customer_xy"]).reshape(n, 2)
    dxy = np.array(fields["depot_xy"]).reshape(m, 2)
    fleet = FleetConfig(float(fields["capacity"]), float(fields["route_cost"]))
    try:
        raw = Instance(cxy, np.array(fields["demand"]), dxy, np.array(fields["depot_capacity"]),
                       np.array(fields["opening_cost"]), fleet, name=name, normalized=False)
    except ValueError as exc:
        raise ParseError(f"invalid benchmark data: {exc}", 1, 1) from None
    allxy = np.concatenate([dxy, cxy])
    lo = allxy.min(axis=0)
    span = float((allxy.max(axis=0) - lo).max())
    scale = span if span > 0 else 1.0
    norm = Instance((cxy - lo) / scale, raw.demand, (dxy - lo) / scale, raw.max_supply, raw.opening_cost,
                    fleet, name=name)
    return BenchmarkInstance(norm, raw, scale, (float(lo[0]), float(lo[1])), int(fields["rounding"]),
                             (n, m), dialect)


SAMPLES = {
    "synthetic-20-5a.dat": "prodhon",
    "synthetic-12-3b.dat": "prodhon",
    "synthetic-15-2-barreto.dat": "barreto",
}


def bundled_samples() -> dict[str, str]:
    """Names of the bundled benchmark-layout sample files mapped to their dialect."""
    return dict(SAMPLES)


def read_bundled(name: str) -> BenchmarkInstance:
    text = resources.files("lrpgen.data").joinpath(name).read_text()
    return parse_benchmark(text, SAMPLES[name], name=name.rsplit(".", 1)[0])
