"""MATPOWER case files: parsing, validation and serialization of the DC subset.

Only the columns a lossless DC model needs are read; everything else in the
file is skipped. Out-of-service branches and generators are dropped.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

BUNDLED = ("case14", "case39")

_KIND = {1: "load", 2: "generator", 3: "reference"}
_KIND_CODE = {v: k for k, v in _KIND.items()}


class CaseError(ValueError):
    """Base class for problems with a case file or grid model."""


class CaseSyntaxError(CaseError):
    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseSemanticError(CaseError):
    pass


class ConnectivityError(CaseSemanticError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    load_mw: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float
    flow_limit_mw: float
    is_generator_stub: bool = False

    @property
    def susceptance(self):
        """Per-unit series susceptance ``1/x`` of the lossless line."""
        return 1.0 / self.reactance

    @property
    def key(self):
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min_mw: float
    p_max_mw: float
    cost_linear: float


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    name: str = ""

    @property
    def reference_bus(self):
        return next(b.id for b in self.buses if b.kind == "reference")

    def bus_index(self):
        return {b.id: i for i, b in enumerate(self.buses)}


_MPC = re.compile(r"\bmpc\.(\w+)\s*=\s*")
_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:Inf|inf|NaN|nan)")


def _blank_comments(text):
    # replace "% ..." with spaces so offsets keep their line/column meaning
    out = []
    for line in text.split("\n"):
        in_str = False
        cut = len(line)
        for i, ch in enumerate(line):
            if ch == "'":
                in_str = not in_str
            elif ch == "%" and not in_str:
                cut = i
                break
        out.append(line[:cut] + " " * (len(line) - cut))
    return "\n".join(out)


def _position(text, offset):
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _parse_matrix(text, start):
    """Parse ``[ ... ];`` starting at ``text[start] == '['``; return rows and end offset."""
    rows, row = [], []
    i = start + 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "]":
            if row:
                rows.append(row)
            j = i + 1
            while j < n and text[j] in " \t\r":
                j += 1
            if j >= n or text[j] != ";":
                raise CaseSyntaxError("expected ';' after ']'", *_position(text, j))
            return rows, j + 1
        if ch in ";\n":
            if row:
                rows.append(row)
                row = []
            i += 1
        elif ch in " \t\r,":
            i += 1
        else:
            m = _NUMBER.match(text, i)
            if not m:
                raise CaseSyntaxError(f"unexpected character {ch!r} in matrix", *_position(text, i))
            row.append(float(m.group()))
            i = m.end()
            if i < n and text[i] not in " \t\r,;\n]":
                raise CaseSyntaxError(f"malformed number near {text[m.start():i + 1]!r}", *_position(text, m.start()))
    raise CaseSyntaxError("unterminated matrix, missing '];'", *_position(text, start))


def _statements(text):
    clean = _blank_comments(text)
    fields = {}
    pos = 0
    for m in _MPC.finditer(clean):
        if m.start() < pos:
            continue
        name = m.group(1)
        i = m.end()
        if i < len(clean) and clean[i] == "[":
            rows, pos = _parse_matrix(clean, i)
            fields[name] = (rows, _position(clean, i))
        else:
            end = clean.find(";", i)
            if end < 0:
                raise CaseSyntaxError(f"missing ';' after mpc.{name}", *_position(clean, i))
            fields[name] = (clean[i:end].strip(), _position(clean, i))
            pos = end + 1
    return fields


def _need(fields, name):
    if name not in fields:
        raise CaseSemanticError(f"case file has no mpc.{name}")
    return fields[name]


def _columns(rows, where, name, count):
    for k, row in enumerate(rows):
        if len(row) < count:
            raise CaseSyntaxError(f"mpc.{name} row {k + 1} has {len(row)} columns, need {count}", *where)
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise CaseSyntaxError(f"mpc.{name} rows have differing lengths {sorted(lengths)}", *where)


def _int_id(value, what):
    if value != int(value) or value <= 0:
        raise CaseSemanticError(f"{what} {value!r} is not a positive integer")
    return int(value)


def parse_case(text, name=""):
    """Parse MATPOWER case text into a validated :class:`NetworkCase`."""
    fields = _statements(text)
    base_txt, base_where = _need(fields, "baseMVA")
    try:
        base_mva = float(base_txt)
    except (TypeError, ValueError):
        raise CaseSyntaxError(f"baseMVA {base_txt!r} is not a number", *base_where) from None

    bus_rows, where = _need(fields, "bus")
    _columns(bus_rows, where, "bus", 3)
    buses = []
    for row in bus_rows:
        code = int(row[1])
        if code not in _KIND:
            raise CaseSemanticError(f"bus {row[0]:g} has unsupported type {row[1]:g}")
        buses.append(Bus(_int_id(row[0], "bus id"), _KIND[code], float(row[2])))

    gen_rows, where = _need(fields, "gen")
    _columns(gen_rows, where, "gen", 10)
    cost_rows, cwhere = _need(fields, "gencost")
    if len(cost_rows) < len(gen_rows):
        raise CaseSemanticError(f"mpc.gencost has {len(cost_rows)} rows for {len(gen_rows)} generators")
    generators = []
    for row, cost in zip(gen_rows, cost_rows):
        if row[7] <= 0:
            continue
        if int(cost[0]) != 2:
            raise CaseSemanticError("only polynomial (model 2) generator costs are supported")
        ncoef = int(cost[3])
        coefs = cost[4:4 + ncoef]
        if len(coefs) < ncoef:
            raise CaseSyntaxError("gencost row shorter than its coefficient count", *cwhere)
        linear = coefs[-2] if ncoef >= 2 else 0.0
        generators.append(Generator(_int_id(row[0], "generator bus"), float(row[9]), float(row[8]), float(linear)))

    br_rows, where = _need(fields, "branch")
    _columns(br_rows, where, "branch", 11)
    raw = []
    for row in br_rows:
        if row[10] <= 0:
            continue
        rate = float(row[5])
        raw.append((_int_id(row[0], "branch endpoint"), _int_id(row[1], "branch endpoint"),
                    float(row[3]), rate if rate > 0 else math.inf))
    branches = _mark_stubs(raw, generators)
    return validate(NetworkCase(base_mva, tuple(buses), branches, tuple(generators), name))


def _mark_stubs(raw, generators):
    degree = {}
    for f, t, _, _ in raw:
        degree[f] = degree.get(f, 0) + 1
        degree[t] = degree.get(t, 0) + 1
    gen_buses = {g.bus for g in generators}

    def stub(bus):
        return degree.get(bus, 0) == 1 and bus in gen_buses

    return tuple(Branch(f, t, x, lim, stub(f) or stub(t)) for f, t, x, lim in raw)


def validate(case):
    """Check every grid invariant; return ``case`` unchanged when valid."""
    if not (case.base_mva > 0 and math.isfinite(case.base_mva)):
        raise CaseSemanticError(f"baseMVA must be positive, got {case.base_mva}")
    ids = set()
    for b in case.buses:
        if b.id in ids:
            raise CaseSemanticError(f"duplicate bus id {b.id}")
        if b.kind not in _KIND_CODE:
            raise CaseSemanticError(f"bus {b.id} has unknown kind {b.kind!r}")
        if not b.load_mw >= 0:
            raise CaseSemanticError(f"bus {b.id} has negative load {b.load_mw}")
        ids.add(b.id)
    refs = [b.id for b in case.buses if b.kind == "reference"]
    if len(refs) != 1:
        raise CaseSemanticError(f"expected exactly one reference bus, found {len(refs)} {refs}")
    for k, br in enumerate(case.branches):
        where = f"branch {k + 1} ({br.from_bus}-{br.to_bus})"
        if br.from_bus not in ids or br.to_bus not in ids:
            raise CaseSemanticError(f"{where} has a dangling endpoint")
        if br.from_bus == br.to_bus:
            raise CaseSemanticError(f"{where} is a self-loop")
        if not (br.reactance > 0 and math.isfinite(br.reactance)):
            raise CaseSemanticError(f"{where} needs a positive finite reactance, got {br.reactance}")
        if not br.flow_limit_mw > 0:
            raise CaseSemanticError(f"{where} has non-positive flow limit {br.flow_limit_mw}")
    if not case.generators:
        raise CaseSemanticError("case has no in-service generator")
    for k, g in enumerate(case.generators):
        if g.bus not in ids:
            raise CaseSemanticError(f"generator {k + 1} sits on nonexistent bus {g.bus}")
        if g.p_min_mw > g.p_max_mw:
            raise CaseSemanticError(f"generator {k + 1} at bus {g.bus}: Pmin {g.p_min_mw} > Pmax {g.p_max_mw}")
    _check_connected(case)
    return case


def _check_connected(case):
    adj = {b.id: [] for b in case.buses}
    for br in case.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    start = case.buses[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != len(adj):
        missing = sorted(set(adj) - seen)
        raise ConnectivityError(f"grid is disconnected; unreachable buses {missing}")


def _fmt(v):
    if math.isinf(v):
        return "0"
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def serialize(case):
    """Write ``case`` back as MATPOWER text restricted to the supported columns."""
    lines = [f"function mpc = {case.name or 'case'}", "mpc.version = '2';", f"mpc.baseMVA = {_fmt(case.base_mva)};", "",
             "%\tbus_i\ttype\tPd", "mpc.bus = ["]
    for b in case.buses:
        lines.append(f"\t{b.id}\t{_KIND_CODE[b.kind]}\t{_fmt(b.load_mw)};")
    lines += ["];", "", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    for g in case.generators:
        lines.append(f"\t{g.bus}\t0\t0\t0\t0\t1\t{_fmt(case.base_mva)}\t1\t{_fmt(g.p_max_mw)}\t{_fmt(g.p_min_mw)};")
    lines += ["];", "", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus", "mpc.branch = ["]
    for br in case.branches:
        lines.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{_fmt(br.reactance)}\t0\t{_fmt(br.flow_limit_mw)}\t0\t0\t0\t0\t1;")
    lines += ["];", "", "mpc.gencost = ["]
    for g in case.generators:
        lines.append(f"\t2\t0\t0\t2\t{_fmt(g.cost_linear)}\t0;")
    lines += ["];", ""]
    return "\n".join(lines)


def load_case(source):
    """Load a case from a path, or by bundled name (``"case14"``, ``"case39"``)."""
    if str(source) in BUNDLED:
        text = resources.files("iccopf.data").joinpath(f"{source}.m").read_text()
        return parse_case(text, name=str(source))
    path = Path(source)
    return parse_case(path.read_text(), name=path.stem)
