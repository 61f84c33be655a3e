"""Line-oriented circuit description language.

Example::

    param mu=0.1
    sweep mu 0.001 0.1 25 log
    source tmsv mu=mu sign=+ modes=a,b
    loss t=0.42 a
    bs t=0.5 a b
    detector D1 eta=0.68 nu=0 modes=a
    detector D2 eta=0.70 nu=0 modes=b
    pattern D1=click D2=click

Statements (one per line, ``#`` starts a comment):

``param NAME=VALUE``
    declare a scalar that values may refer to by name
``sweep NAME START STOP COUNT [linear|log]``
    scan a declared param; several sweeps form a grid (first one slowest)
``source KIND key=value... modes=m1,m2,...``
    KIND is vacuum, coherent (re, im), thermal (mu), tmsv (mu | lambda2, sign)
    or sagnac (mu | lambda2, sign; four modes AH, AV, BH, BV)
``bs t=V A B`` / ``polarizer theta=V H V`` / ``phase phi=V A`` /
``loss t=V A...`` / ``mismatch xi=V A B`` / ``swap A B``
    operations in the order they act; ``mismatch`` adds modes A.2, B.2,
    A.3, B.3 and ``bs`` between two mismatched pulses acts on all three pairs
``detector ID eta=V nu=V modes=m1,...``
``pattern ID=click|noclick|marginal ...``
``visibility ratio|contrast NAME HIGH LOW``
    report (P_high - P_low) / P_high (ratio) or / (P_high + P_low) (contrast)
    where P_high / P_low evaluate the pattern with param NAME set to HIGH / LOW
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

from .errors import InvalidArgument

Value = Union[float, str]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_LABEL = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.]*\Z")

SOURCE_KINDS = {
    # kind: (allowed keys, required keys, number of modes or None for >= 1)
    "vacuum": (set(), set(), None),
    "coherent": ({"re", "im"}, {"re"}, 1),
    "thermal": ({"mu"}, {"mu"}, 1),
    "tmsv": ({"mu", "lambda2", "sign"}, set(), 2),
    "sagnac": ({"mu", "lambda2", "sign"}, set(), 4),
}
OP_KINDS = {
    # kind: (parameter key or None, number of modes or None for >= 1)
    "bs": ("t", 2),
    "polarizer": ("theta", 2),
    "phase": ("phi", 1),
    "loss": ("t", None),
    "mismatch": ("xi", 2),
    "swap": (None, 2),
}
OUTCOMES = ("click", "noclick", "marginal")


class ParseError(InvalidArgument):
    """Syntax or validation error at a source location (1-based)."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


@dataclass(frozen=True)
class Param:
    name: str
    value: float
    loc: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Sweep:
    name: str
    start: float
    stop: float
    count: int
    scale: str = "linear"
    loc: tuple = field(default=(0, 0), compare=False)

    def values(self) -> list[float]:
        if self.count == 0:
            return []
        if self.count == 1:
            return [self.start]
        n = self.count - 1
        if self.scale == "log":
            a, b = math.log(self.start), math.log(self.stop)
            inner = [math.exp(a + (b - a) * k / n) for k in range(1, n)]
        else:
            inner = [self.start + (self.stop - self.start) * k / n for k in range(1, n)]
        # endpoints exactly as written
        return [self.start] + inner + [self.stop]


@dataclass(frozen=True)
class Source:
    kind: str
    params: tuple  # ((key, Value), ...) in written order
    modes: tuple
    loc: tuple = field(default=(0, 0), compare=False)

    def get(self, key, default=None):
        return dict(self.params).get(key, default)


@dataclass(frozen=True)
class Op:
    kind: str
    value: Value | None
    modes: tuple
    loc: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Detector:
    id: str
    eta: Value
    nu: Value
    modes: tuple
    loc: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class VisibilitySpec:
    kind: str
    param: str
    high: Value
    low: Value
    loc: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class CircuitProgram:
    params: tuple = ()
    sweeps: tuple = ()
    sources: tuple = ()
    ops: tuple = ()
    detectors: tuple = ()
    pattern: tuple = ()  # ((detector id, outcome), ...)
    visibility: VisibilitySpec | None = None

    def defaults(self) -> dict[str, float]:
        return {p.name: p.value for p in self.params}

    def mode_labels(self) -> list[str]:
        labels = [m for s in self.sources for m in s.modes]
        for op in self.ops:
            if op.kind == "mismatch":
                a, b = op.modes
                labels += [f"{a}.2", f"{b}.2", f"{a}.3", f"{b}.3"]
        return labels


class _Line:
    """Tokens of one line with their 1-based columns."""

    def __init__(self, number: int, text: str):
        self.number = number
        self.tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", text)]

    def error(self, index: int, message: str) -> ParseError:
        if index < len(self.tokens):
            col = self.tokens[index][1]
        elif self.tokens:
            tok, col = self.tokens[-1]
            col += len(tok)
        else:
            col = 1
        return ParseError(self.number, col, message)


def _number(line: _Line, k: int, text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise line.error(k, f"expected a number, got {text!r}") from None
    if not math.isfinite(x):
        raise line.error(k, f"non-finite number {text!r}")
    return x


def _value(line: _Line, k: int, text: str) -> Value:
    if _IDENT.match(text):
        return text
    return _number(line, k, text)


def _keyvals(line: _Line, start: int, stop: int | None = None) -> list[tuple[str, str, int]]:
    out = []
    for k in range(start, len(line.tokens) if stop is None else stop):
        tok = line.tokens[k][0]
        if "=" not in tok:
            raise line.error(k, f"expected key=value, got {tok!r}")
        key, _, val = tok.partition("=")
        if not key or not val:
            raise line.error(k, f"malformed key=value {tok!r}")
        out.append((key, val, k))
    return out


def _labels(line: _Line, k: int, text: str) -> tuple[str, ...]:
    labels = tuple(text.split(","))
    for lab in labels:
        if not _LABEL.match(lab):
            raise line.error(k, f"invalid mode label {lab!r}")
    if len(set(labels)) != len(labels):
        raise line.error(k, "mode listed twice")
    return labels


def parse(text: str) -> CircuitProgram:
    """Parse and validate a circuit program; errors carry line and column."""
    if not isinstance(text, str):
        raise ParseError(1, 1, "program text must be a string")
    params, sweeps, sources, ops, detectors, pattern = [], [], [], [], [], []
    visibility = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _Line(number, raw.split("#", 1)[0])
        if not line.tokens:
            continue
        head = line.tokens[0][0]
        loc = (number, line.tokens[0][1])
        toks = [t for t, _ in line.tokens]
        if head == "param":
            kv = _keyvals(line, 1)
            if len(kv) != 1:
                raise line.error(1, "param takes exactly one NAME=VALUE")
            name, val, k = kv[0]
            if not _IDENT.match(name):
                raise line.error(k, f"invalid parameter name {name!r}")
            params.append(Param(name, _number(line, k, val), loc))
        elif head == "sweep":
            if len(toks) not in (5, 6):
                raise line.error(min(len(toks), 5), "usage: sweep NAME START STOP COUNT [linear|log]")
            if not _IDENT.match(toks[1]):
                raise line.error(1, f"invalid parameter name {toks[1]!r}")
            start, stop = _number(line, 2, toks[2]), _number(line, 3, toks[3])
            if not re.fullmatch(r"\d+", toks[4]) or len(toks[4]) > 7:
                raise line.error(4, f"sweep count must be a non-negative integer, got {toks[4]!r}")
            scale = toks[5] if len(toks) == 6 else "linear"
            if scale not in ("linear", "log"):
                raise line.error(5, f"scale must be linear or log, got {scale!r}")
            if scale == "log" and not (start > 0 and stop > 0):
                raise line.error(2, "log sweep needs positive bounds")
            sweeps.append(Sweep(toks[1], start, stop, int(toks[4]), scale, loc))
        elif head == "source":
            sources.append(_parse_source(line, loc))
        elif head in OP_KINDS:
            ops.append(_parse_op(line, head, loc))
        elif head == "detector":
            detectors.append(_parse_detector(line, loc))
        elif head == "pattern":
            if len(toks) < 2:
                raise line.error(1, "pattern needs at least one ID=outcome")
            for key, val, k in _keyvals(line, 1):
                if val not in OUTCOMES:
                    raise line.error(k, f"outcome must be one of {', '.join(OUTCOMES)}, got {val!r}")
                pattern.append((key, val, (number, line.tokens[k][1])))
        elif head == "visibility":
            if visibility is not None:
                raise line.error(0, "duplicate visibility clause")
            if len(toks) != 5:
                raise line.error(min(len(toks), 5), "usage: visibility ratio|contrast NAME HIGH LOW")
            if toks[1] not in ("ratio", "contrast"):
                raise line.error(1, f"visibility kind must be ratio or contrast, got {toks[1]!r}")
            if not _IDENT.match(toks[2]):
                raise line.error(2, f"invalid parameter name {toks[2]!r}")
            visibility = VisibilitySpec(
                toks[1], toks[2], _value(line, 3, toks[3]), _value(line, 4, toks[4]), loc
            )
        else:
            raise line.error(0, f"unknown keyword {head!r}")
    program = CircuitProgram(
        tuple(params),
        tuple(sweeps),
        tuple(sources),
        tuple(ops),
        tuple(detectors),
        tuple((d, o) for d, o, _ in pattern),
        visibility,
    )
    _validate(program, pattern)
    return program


def _parse_source(line: _Line, loc) -> Source:
    if len(line.tokens) < 2:
        raise line.error(1, f"source needs a kind ({', '.join(SOURCE_KINDS)})")
    kind = line.tokens[1][0]
    if kind not in SOURCE_KINDS:
        raise line.error(1, f"unknown source kind {kind!r}")
    allowed, required, n_modes = SOURCE_KINDS[kind]
    params, modes = [], None
    seen = set()
    for key, val, k in _keyvals(line, 2):
        if key in seen:
            raise line.error(k, f"duplicate key {key!r}")
        seen.add(key)
        if key == "modes":
            modes = _labels(line, k, val)
        elif key not in allowed:
            raise line.error(k, f"source {kind} does not take {key!r}")
        elif key == "sign":
            if val not in ("+", "-"):
                raise line.error(k, f"sign must be + or -, got {val!r}")
            params.append((key, val))
        else:
            params.append((key, _value(line, k, val)))
    if modes is None:
        raise line.error(len(line.tokens), "missing modes=... clause")
    for key in required:
        if key not in seen:
            raise line.error(len(line.tokens), f"source {kind} requires {key}=")
    if kind in ("tmsv", "sagnac"):
        if ("mu" in seen) == ("lambda2" in seen):
            raise line.error(len(line.tokens), f"source {kind} takes exactly one of mu= or lambda2=")
    if n_modes is not None and len(modes) != n_modes:
        raise line.error(len(line.tokens) - 1, f"source {kind} needs {n_modes} mode(s), got {len(modes)}")
    return Source(kind, tuple(params), modes, loc)


def _parse_op(line: _Line, kind: str, loc) -> Op:
    key, n_modes = OP_KINDS[kind]
    toks = [t for t, _ in line.tokens]
    k = 1
    value = None
    if key is not None:
        if len(toks) < 2 or not toks[1].startswith(key + "="):
            raise line.error(1, f"{kind} expects {key}=VALUE first")
        value = _value(line, 1, toks[1][len(key) + 1 :])
        k = 2
    modes = tuple(toks[k:])
    for j, lab in enumerate(modes):
        if not _LABEL.match(lab):
            raise line.error(k + j, f"invalid mode label {lab!r}")
    if n_modes is None and not modes:
        raise line.error(k, f"{kind} needs at least one mode")
    if n_modes is not None and len(modes) != n_modes:
        raise line.error(min(k + len(modes), len(toks)), f"{kind} needs {n_modes} mode(s), got {len(modes)}")
    if len(set(modes)) != len(modes):
        raise line.error(k, f"{kind} lists a mode twice")
    return Op(kind, value, modes, loc)


def _parse_detector(line: _Line, loc) -> Detector:
    if len(line.tokens) < 2:
        raise line.error(1, "detector needs an id")
    det_id = line.tokens[1][0]
    if not _IDENT.match(det_id):
        raise line.error(1, f"invalid detector id {det_id!r}")
    fields = {"eta": 1.0, "nu": 0.0}
    modes, seen = None, set()
    for key, val, k in _keyvals(line, 2):
        if key in seen:
            raise line.error(k, f"duplicate key {key!r}")
        seen.add(key)
        if key == "modes":
            modes = _labels(line, k, val)
        elif key in fields:
            fields[key] = _value(line, k, val)
        else:
            raise line.error(k, f"detector does not take {key!r}")
    if modes is None:
        raise line.error(len(line.tokens), "missing modes=... clause")
    return Detector(det_id, fields["eta"], fields["nu"], modes, loc)


def _validate(program: CircuitProgram, pattern_locs) -> None:
    names: dict[str, tuple] = {}
    for p in program.params:
        if p.name in names:
            raise ParseError(*p.loc, f"parameter {p.name!r} declared twice")
        names[p.name] = p.loc
    swept = set()
    for s in program.sweeps:
        if s.name not in names:
            raise ParseError(*s.loc, f"sweep over undeclared parameter {s.name!r}")
        if s.name in swept:
            raise ParseError(*s.loc, f"parameter {s.name!r} swept twice")
        swept.add(s.name)

    def check_value(v, loc):
        if isinstance(v, str) and v not in names:
            raise ParseError(*loc, f"undeclared parameter {v!r}")

    declared: dict[str, tuple] = {}
    if not program.sources:
        raise ParseError(1, 1, "program declares no source")
    for s in program.sources:
        for _, v in s.params:
            if _ != "sign":
                check_value(v, s.loc)
        for m in s.modes:
            if m in declared:
                raise ParseError(*s.loc, f"mode {m!r} already declared at line {declared[m][0]}")
            declared[m] = s.loc
    mismatched: set[str] = set()
    for op in program.ops:
        if op.value is not None:
            check_value(op.value, op.loc)
        for m in op.modes:
            if m not in declared:
                raise ParseError(*op.loc, f"undeclared mode {m!r}")
        if op.kind == "mismatch":
            a, b = op.modes
            for aux in (f"{a}.2", f"{b}.2", f"{a}.3", f"{b}.3"):
                if aux in declared:
                    raise ParseError(*op.loc, f"mismatch would redeclare mode {aux!r}")
                declared[aux] = op.loc
            mismatched |= {a, b}
    used: dict[str, str] = {}
    ids = set()
    for d in program.detectors:
        if d.id in ids:
            raise ParseError(*d.loc, f"duplicate detector {d.id!r}")
        ids.add(d.id)
        check_value(d.eta, d.loc)
        check_value(d.nu, d.loc)
        for m in d.modes:
            if m not in declared:
                raise ParseError(*d.loc, f"undeclared mode {m!r}")
            if m in used:
                raise ParseError(*d.loc, f"mode {m!r} already measured by detector {used[m]!r}")
            used[m] = d.id
    seen = set()
    for det_id, _, loc in pattern_locs:
        if det_id not in ids:
            raise ParseError(*loc, f"pattern references unknown detector {det_id!r}")
        if det_id in seen:
            raise ParseError(*loc, f"detector {det_id!r} appears twice in pattern")
        seen.add(det_id)
    if program.detectors and not program.pattern:
        d = program.detectors[0]
        raise ParseError(*d.loc, "detectors declared but no pattern clause")
    if program.visibility is not None:
        v = program.visibility
        if v.param not in names:
            raise ParseError(*v.loc, f"visibility over undeclared parameter {v.param!r}")
        if v.param in swept:
            raise ParseError(*v.loc, f"visibility parameter {v.param!r} is also swept")
        check_value(v.high, v.loc)
        check_value(v.low, v.loc)


def _fmt(v: Value) -> str:
    return v if isinstance(v, str) else repr(float(v))


def format_program(program: CircuitProgram) -> str:
    """Canonical text; ``parse(format_program(p)) == p``."""
    out = []
    for p in program.params:
        out.append(f"param {p.name}={_fmt(p.value)}")
    for s in program.sweeps:
        out.append(f"sweep {s.name} {_fmt(s.start)} {_fmt(s.stop)} {s.count} {s.scale}")
    for s in program.sources:
        kv = " ".join(f"{k}={v if k == 'sign' else _fmt(v)}" for k, v in s.params)
        out.append(" ".join(x for x in ("source", s.kind, kv, "modes=" + ",".join(s.modes)) if x))
    for op in program.ops:
        key = OP_KINDS[op.kind][0]
        parts = [op.kind] + ([f"{key}={_fmt(op.value)}"] if key else []) + list(op.modes)
        out.append(" ".join(parts))
    for d in program.detectors:
        out.append(f"detector {d.id} eta={_fmt(d.eta)} nu={_fmt(d.nu)} modes={','.join(d.modes)}")
    if program.pattern:
        out.append("pattern " + " ".join(f"{d}={o}" for d, o in program.pattern))
    if program.visibility is not None:
        v = program.visibility
        out.append(f"visibility {v.kind} {v.param} {_fmt(v.high)} {_fmt(v.low)}")
    return "\n".join(out) + "\n"
