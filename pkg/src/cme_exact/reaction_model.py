"""Reaction systems, the reaction DSL, and classification into solvable families.

DSL, one reaction per line::

    2 A -> 0 A @ 0.025
    A + B -> C @ 1/40
    0 -> 2 A @ 3/5        # "0" or "∅" is the empty side

Blank lines and ``#`` comments are ignored.  Species are registered in order
of first appearance.  Rates are kept as exact :class:`~fractions.Fraction`
values (decimal literals are read exactly, so ``0.025`` is ``1/40``).
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "DSLSyntaxError",
    "Reaction",
    "ReactionSystem",
    "SystemClass",
    "parse_dsl",
    "serialize_dsl",
    "system_from_json",
    "system_to_json",
    "classify",
    "parse_initial",
]


class DSLSyntaxError(ValueError):
    """Malformed reaction text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Reaction:
    """``inputs -> outputs`` at base rate ``rate`` (stoichiometry per species)."""

    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    rate: Fraction

    def __post_init__(self):
        if len(self.inputs) != len(self.outputs):
            raise ValueError("input and output vectors differ in length")
        if any(k < 0 for k in self.inputs + self.outputs):
            raise ValueError("stoichiometric coefficients must be nonnegative")
        if not any(self.inputs) and not any(self.outputs):
            raise ValueError("empty reaction (nothing consumed or produced)")
        if self.rate < 0:
            raise ValueError(f"negative rate {self.rate}")
        if not isinstance(self.rate, Fraction):
            object.__setattr__(self, "rate", Fraction(self.rate))

    @property
    def nspecies(self) -> int:
        return len(self.inputs)

    @property
    def order(self) -> int:
        """Total number of consumed particles."""
        return sum(self.inputs)

    @property
    def change(self) -> tuple[int, ...]:
        return tuple(o - i for i, o in zip(self.inputs, self.outputs))

    def is_semilinear(self) -> bool:
        return self.order <= 1

    def widened(self, n: int) -> "Reaction":
        pad = (0,) * (n - self.nspecies)
        return Reaction(self.inputs + pad, self.outputs + pad, self.rate)


@dataclass(frozen=True)
class ReactionSystem:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    initial: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.species)
        if len(set(self.species)) != n:
            raise ValueError(f"duplicate species in {self.species}")
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        for r in self.reactions:
            if r.nspecies != n:
                raise ValueError(f"reaction over {r.nspecies} species in a {n}-species system")
        init = dict(self.initial) if self.initial else {(0,) * n: 1.0}
        clean = {}
        for state, p in init.items():
            state = tuple(int(k) for k in state)
            if len(state) != n or any(k < 0 for k in state):
                raise ValueError(f"bad initial state {state}")
            if p < 0:
                raise ValueError(f"negative initial probability {p} at {state}")
            if p > 0:
                clean[state] = clean.get(state, 0) + p
        total = sum(float(p) for p in clean.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"initial probabilities sum to {total}, not 1")
        object.__setattr__(self, "initial", dict(sorted(clean.items())))

    @property
    def nspecies(self) -> int:
        return len(self.species)

    def with_initial(self, initial: Mapping[tuple[int, ...], float]) -> "ReactionSystem":
        return ReactionSystem(self.species, self.reactions, initial)

    def max_initial(self) -> int:
        return max(max(s) if s else 0 for s in self.initial)

    def creates_particles(self) -> bool:
        return any(sum(r.outputs) > sum(r.inputs) and r.rate > 0 for r in self.reactions)

    def initial_polynomial_terms(self) -> dict[tuple[int, ...], float]:
        return dict(self.initial)


class SystemClass(enum.Enum):
    NON_BINARY = "NonBinary"
    BINARY_SJ = "BinarySJ"
    SEMILINEAR_MULTI = "SemiLinearMulti"
    GENERIC = "Generic"


_SJ_FAMILY = {(1, 0), (2, 0), (2, 1)}


def classify(system: ReactionSystem) -> SystemClass:
    """Solvable family of ``system`` (decided from stoichiometry only)."""
    reactions = [r for r in system.reactions if r.rate > 0]
    semilinear = all(r.is_semilinear() for r in reactions)
    if system.nspecies == 1:
        if semilinear:
            return SystemClass.NON_BINARY
        pairs = {(r.inputs[0], r.outputs[0]) for r in reactions}
        if pairs <= _SJ_FAMILY:
            return SystemClass.BINARY_SJ
        return SystemClass.GENERIC
    if semilinear:
        return SystemClass.SEMILINEAR_MULTI
    return SystemClass.GENERIC


# ---------------------------------------------------------------------
# DSL

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<arrow>->|→|⇀)
  | (?P<at>@)
  | (?P<plus>\+)
  | (?P<slash>/)
  | (?P<empty>∅)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<minus>-)
    """,
    re.VERBOSE,
)


def _tokenize(line: str, lineno: int):
    pos = 0
    out = []
    text = line.split("#", 1)[0].rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos + 1))
        pos = m.end()
    out.append(("eol", "", len(text) + 1))
    return out


class _LineParser:
    def __init__(self, tokens, lineno: int, registry: dict[str, int]):
        self.toks = tokens
        self.i = 0
        self.lineno = lineno
        self.registry = registry

    def peek(self):
        return self.toks[self.i]

    def take(self, kind: str | None = None):
        tok = self.toks[self.i]
        if kind is not None and tok[0] != kind:
            want = {"arrow": "'->'", "at": "'@'", "num": "a number", "ident": "a species name",
                    "eol": "end of line"}.get(kind, kind)
            got = tok[1] or "end of line"
            raise DSLSyntaxError(f"expected {want}, got {got!r}", self.lineno, tok[2])
        self.i += 1
        return tok

    def side(self) -> dict[str, int]:
        kind, val, col = self.peek()
        if kind == "empty" or (kind == "num" and val == "0" and self.toks[self.i + 1][0] in ("arrow", "at")):
            self.take()
            return {}
        counts: dict[str, int] = {}
        while True:
            coef = 1
            kind, val, col = self.peek()
            if kind == "num":
                if not val.isdigit():
                    raise DSLSyntaxError(f"stoichiometric coefficient must be an integer, got {val!r}",
                                         self.lineno, col)
                coef = int(val)
                self.take()
            name = self.take("ident")[1]
            self.registry.setdefault(name, len(self.registry))
            counts[name] = counts.get(name, 0) + coef
            if self.peek()[0] != "plus":
                return counts
            self.take()

    def rate(self) -> Fraction:
        kind, val, col = self.peek()
        if kind == "minus":
            raise DSLSyntaxError("negative rate", self.lineno, col)
        num = self.take("num")[1]
        if self.peek()[0] == "slash":
            self.take()
            _, den, dcol = self.take("num")
            if not (num.isdigit() and den.isdigit()):
                raise DSLSyntaxError("rational rate needs integer numerator and denominator",
                                     self.lineno, col)
            if int(den) == 0:
                raise DSLSyntaxError("zero denominator", self.lineno, dcol)
            return Fraction(int(num), int(den))
        return Fraction(num)

    def reaction(self):
        start_col = self.peek()[2]
        lhs = self.side()
        self.take("arrow")
        rhs = self.side()
        self.take("at")
        rate = self.rate()
        self.take("eol")
        if not any(lhs.values()) and not any(rhs.values()):
            raise DSLSyntaxError("empty reaction", self.lineno, start_col)
        return lhs, rhs, rate


def parse_dsl(text: str, initial: Mapping | None = None,
              species: Sequence[str] | None = None) -> ReactionSystem:
    """Parse reaction DSL text into a :class:`ReactionSystem`.

    ``species`` pre-registers names (and their order); ``initial`` maps count
    vectors to probabilities and defaults to the all-zero state.
    """
    registry: dict[str, int] = {name: k for k, name in enumerate(species or ())}
    raw = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(line, lineno)
        if tokens[0][0] == "eol":
            continue
        raw.append(_LineParser(tokens, lineno, registry).reaction())
    names = tuple(sorted(registry, key=registry.get))
    n = len(names)
    reactions = []
    for lhs, rhs, rate in raw:
        i = [0] * n
        o = [0] * n
        for name, c in lhs.items():
            i[registry[name]] += c
        for name, c in rhs.items():
            o[registry[name]] += c
        reactions.append(Reaction(tuple(i), tuple(o), rate))
    if initial is not None:
        initial = _normalize_initial(initial, n, names)
    return ReactionSystem(names, tuple(reactions), initial or {})


def _format_side(vec: Sequence[int], species: Sequence[str]) -> str:
    terms = [f"{k} {name}" for k, name in zip(vec, species) if k]
    return " + ".join(terms) if terms else "0"


def _format_rate(rate: Fraction) -> str:
    return str(rate.numerator) if rate.denominator == 1 else f"{rate.numerator}/{rate.denominator}"


def serialize_dsl(system: ReactionSystem) -> str:
    lines = []
    for r in system.reactions:
        lines.append(f"{_format_side(r.inputs, system.species)} -> "
                     f"{_format_side(r.outputs, system.species)} @ {_format_rate(r.rate)}")
    return "\n".join(lines) + ("\n" if lines else "")


def _normalize_initial(initial, n: int, names: Sequence[str]) -> dict[tuple[int, ...], float]:
    if isinstance(initial, int):
        if n != 1:
            raise ValueError("an integer initial state needs a single-species system")
        return {(initial,): 1.0}
    out = {}
    for key, p in dict(initial).items():
        if isinstance(key, str):
            state = tuple(int(v) for v in key.split(",")) if key.strip() else ()
        elif isinstance(key, int):
            state = (key,)
        else:
            state = tuple(int(v) for v in key)
        if len(state) != n:
            raise ValueError(f"initial state {key!r} has {len(state)} counts, system has {n} species")
        out[state] = out.get(state, 0.0) + float(p)
    return out


def parse_initial(spec: str, nspecies: int) -> dict[tuple[int, ...], float]:
    """Read ``--initial``: an integer (single species) or a JSON object."""
    spec = spec.strip()
    if re.fullmatch(r"\d+", spec):
        return _normalize_initial(int(spec), nspecies, ())
    return _normalize_initial(json.loads(spec), nspecies, ())


def system_to_json(system: ReactionSystem) -> dict:
    reactions = []
    for r in system.reactions:
        as_float = float(r.rate)
        reactions.append({
            "in": {s: k for s, k in zip(system.species, r.inputs) if k},
            "out": {s: k for s, k in zip(system.species, r.outputs) if k},
            # floats only when they round-trip exactly through their repr
            "rate": as_float if Fraction(repr(as_float)) == r.rate else _format_rate(r.rate),
        })
    return {
        "species": list(system.species),
        "reactions": reactions,
        "initial": {",".join(map(str, k)): float(v) for k, v in system.initial.items()},
    }


def _read_rate(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        # decimal repr keeps 0.025 as 1/40
        return Fraction(repr(value))
    return Fraction(value)


def system_from_json(data: Mapping | str) -> ReactionSystem:
    if isinstance(data, str):
        data = json.loads(data)
    species = list(data.get("species", []))
    index = {s: k for k, s in enumerate(species)}
    reactions = []
    for entry in data.get("reactions", []):
        for side in ("in", "out"):
            for name in entry.get(side, {}):
                if name not in index:
                    index[name] = len(species)
                    species.append(name)
    n = len(species)
    for entry in data.get("reactions", []):
        i = [0] * n
        o = [0] * n
        for name, k in entry.get("in", {}).items():
            i[index[name]] += int(k)
        for name, k in entry.get("out", {}).items():
            o[index[name]] += int(k)
        reactions.append(Reaction(tuple(i), tuple(o), _read_rate(entry["rate"])))
    initial = data.get("initial")
    init = _normalize_initial(initial, n, species) if initial else {}
    return ReactionSystem(tuple(species), tuple(reactions), init)

