"""Local rules of one-dimensional cellular automata over the alphabet {0..m}.

A rule of radius r is stored as a dense table indexed by the neighborhood
word (x_{-r}, ..., x_r) read as a base-(m+1) number, leftmost cell most
significant.  Finite configurations are windows padded by constant boundary
states; when the boundary states are quiescent the window dynamics equal
the dynamics on the whole line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TABLE_CAP = 1 << 24


class RuleError(ValueError):
    """Raised when a rule or configuration violates a precondition."""


class RuleParseError(RuleError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class TableCapExceeded(RuleError):
    pass


@dataclass(frozen=True, eq=False)
class LocalRule:
    """Dense local rule F: S^(2r+1) -> S with S = {0..state_count-1}."""

    state_count: int
    radius: int
    table: tuple[int, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.state_count < 2:
            raise RuleError("state_count must be at least 2")
        if self.radius < 0:
            raise RuleError("radius must be non-negative")
        table = tuple(int(v) for v in self.table)
        object.__setattr__(self, "table", table)
        expected = self.state_count ** (2 * self.radius + 1)
        if len(table) != expected:
            raise RuleError(f"table has {len(table)} entries, expected {expected}")
        bad = [i for i, v in enumerate(table) if not 0 <= v < self.state_count]
        if bad:
            raise RuleError(f"table entry {bad[0]} = {table[bad[0]]} is outside 0..{self.m}")

    def __eq__(self, other):
        if not isinstance(other, LocalRule):
            return NotImplemented
        return (self.state_count, self.radius, self.table) == (
            other.state_count, other.radius, other.table)

    def __hash__(self):
        return hash((self.state_count, self.radius, self.table))

    def __repr__(self):
        label = self.name or f"{len(self.table)}-entry table"
        return f"LocalRule({label}, states={self.state_count}, radius={self.radius})"

    @property
    def m(self) -> int:
        return self.state_count - 1

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @cached_property
    def lut(self) -> np.ndarray:
        lut = np.asarray(self.table, dtype=np.int8 if self.state_count <= 127 else np.int32)
        lut.setflags(write=False)
        return lut

    @cached_property
    def weights(self) -> np.ndarray:
        """Place values of the neighborhood positions -r..r."""
        return self.state_count ** np.arange(self.width - 1, -1, -1, dtype=np.int64)

    def index(self, word: Sequence[int]) -> int:
        if len(word) != self.width:
            raise RuleError(f"neighborhood must have {self.width} cells")
        idx = 0
        for s in word:
            idx = idx * self.state_count + int(s)
        return idx

    def word(self, index: int) -> tuple[int, ...]:
        digits = []
        for _ in range(self.width):
            index, d = divmod(index, self.state_count)
            digits.append(d)
        return tuple(reversed(digits))

    def __call__(self, *word: int) -> int:
        if len(word) == 1 and not isinstance(word[0], (int, np.integer)):
            word = tuple(word[0])
        return self.table[self.index(word)]

    def with_name(self, name: str) -> "LocalRule":
        return LocalRule(self.state_count, self.radius, self.table, name=name)


def step_valid(rule: LocalRule, cells: np.ndarray) -> np.ndarray:
    """One application of the rule to the interior of ``cells``.

    Works on the last axis and returns an array shorter by 2r: output j is F
    applied to cells[j : j + 2r + 1].  No padding is added.
    """
    n = cells.shape[-1] - 2 * rule.radius
    if n < 0:
        raise RuleError("array shorter than one neighborhood")
    base = rule.state_count
    idx = cells[..., 0:n].astype(np.int64)
    for j in range(1, rule.width):
        idx = idx * base + cells[..., j:j + n]
    return rule.lut[idx]


def neighborhood_words(rule: LocalRule) -> np.ndarray:
    """All (m+1)^(2r+1) neighborhoods as rows, in table order."""
    n = len(rule.table)
    idx = np.arange(n, dtype=np.int64)
    out = np.empty((n, rule.width), dtype=np.int64)
    for j in range(rule.width - 1, -1, -1):
        idx, out[:, j] = np.divmod(idx, rule.state_count)
    return out


@dataclass(frozen=True, eq=False)
class Configuration:
    """Cells over the window [lo, lo+len-1]; outside it the boundary constants."""

    lo: int
    cells: np.ndarray
    left: int
    right: int

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64).reshape(-1)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "left", int(self.left))
        object.__setattr__(self, "right", int(self.right))

    @property
    def hi(self) -> int:
        return self.lo + len(self.cells) - 1

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, i: int) -> int:
        if i < self.lo:
            return self.left
        if i > self.hi:
            return self.right
        return int(self.cells[i - self.lo])

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (self.lo == other.lo and self.left == other.left and self.right == other.right
                and np.array_equal(self.cells, other.cells))

    def __repr__(self):
        body = "".join(str(int(c)) for c in self.cells)
        return f"Configuration(lo={self.lo}, {self.left}|{body}|{self.right})"

    def shifted(self, offset: int) -> "Configuration":
        return Configuration(self.lo + offset, self.cells, self.left, self.right)

    def window(self, lo: int, hi: int) -> "Configuration":
        """The same configuration viewed through another window."""
        return Configuration(lo, [self[i] for i in range(lo, hi + 1)], self.left, self.right)

    def padded(self, k: int) -> np.ndarray:
        return np.concatenate([np.full(k, self.left, dtype=np.int64), self.cells,
                               np.full(k, self.right, dtype=np.int64)])

    def check_states(self, rule: LocalRule) -> None:
        states = [self.left, self.right, *(self.cells.tolist())]
        if min(states) < 0 or max(states) > rule.m:
            raise RuleError(f"configuration state outside 0..{rule.m}")

    @classmethod
    def constant(cls, state: int, lo: int, hi: int) -> "Configuration":
        return cls(lo, np.full(hi - lo + 1, state), state, state)

    @classmethod
    def step(cls, a: int, b: int, lo: int, hi: int) -> "Configuration":
        """The step of type a,b: a on negative coordinates, b elsewhere."""
        idx = np.arange(lo, hi + 1)
        return cls(lo, np.where(idx < 0, a, b), a, b)

    @classmethod
    def from_cells(cls, cells: Iterable[int], lo: int = 0, background: int = 0) -> "Configuration":
        return cls(lo, list(cells), background, background)


def _check_quiescent_boundary(rule: LocalRule, config: Configuration) -> None:
    config.check_states(rule)
    for side, s in (("left", config.left), ("right", config.right)):
        if not is_quiescent(rule, s):
            raise RuleError(f"{side} boundary state {s} is not quiescent")


def apply(rule: LocalRule, config: Configuration) -> Configuration:
    """One step on the window; boundaries must be quiescent."""
    _check_quiescent_boundary(rule, config)
    out = step_valid(rule, config.padded(rule.radius))
    return Configuration(config.lo, out, config.left, config.right)


def apply_power(rule: LocalRule, config: Configuration, n: int) -> Configuration:
    """The window restriction of f^n applied to the whole-line configuration.

    The window is widened by n*r on each side first, so the result is exact
    even when the evolving pattern leaves the original window.
    """
    if n < 0:
        raise RuleError("n must be non-negative")
    _check_quiescent_boundary(rule, config)
    cells = config.padded(n * rule.radius)
    for _ in range(n):
        cells = step_valid(rule, cells)
    return Configuration(config.lo, cells, config.left, config.right)


def compose_power(rule: LocalRule, p: int, cap: int = DEFAULT_TABLE_CAP) -> LocalRule:
    """Dense table of f^p, a rule of radius p*r."""
    if p < 1:
        raise RuleError("p must be at least 1")
    if p == 1:
        return rule
    radius = p * rule.radius
    size = rule.state_count ** (2 * radius + 1)
    if size > cap:
        raise TableCapExceeded(f"power table would have {size} entries (cap {cap})")
    target = LocalRule(rule.state_count, radius, (0,) * size)
    words = neighborhood_words(target)
    out = np.empty(size, dtype=np.int64)
    chunk = 1 << 16
    for start in range(0, size, chunk):
        cells = words[start:start + chunk]
        for _ in range(p):
            cells = step_valid(rule, cells)
        out[start:start + chunk] = cells[:, 0]
    name = f"{rule.name}^{p}" if rule.name else ""
    return LocalRule(rule.state_count, radius, tuple(out.tolist()), name=name)


@dataclass(frozen=True)
class MonotonicityVerdict:
    monotone: bool
    lower: tuple[int, ...] | None = None
    upper: tuple[int, ...] | None = None

    def __bool__(self):
        return self.monotone


def is_monotone(rule: LocalRule) -> MonotonicityVerdict:
    """Check x <= y => F(x) <= F(y) on neighborhoods.

    Raising one coordinate by one at a time suffices: any pair x <= y is
    joined by a chain of such unit raises, and <= is transitive.  On
    failure a witness pair (lower, upper) differing in one cell is returned.
    """
    words = neighborhood_words(rule)
    table = np.asarray(rule.table)
    for j in range(rule.width):
        w = int(rule.weights[j])
        src = np.nonzero(words[:, j] < rule.m)[0]
        bad = src[table[src] > table[src + w]]
        if bad.size:
            i = int(bad[0])
            return MonotonicityVerdict(False, rule.word(i), rule.word(i + w))
    return MonotonicityVerdict(True)


def is_quiescent(rule: LocalRule, state: int) -> bool:
    return rule.table[rule.index((state,) * rule.width)] == state


def quiescent_states(rule: LocalRule) -> tuple[int, ...]:
    return tuple(a for a in range(rule.state_count) if is_quiescent(rule, a))


def reflect(rule: LocalRule) -> LocalRule:
    """Mirror image: G(x_{-r..r}) = F(x_{r..-r})."""
    words = neighborhood_words(rule)
    mirrored = words[:, ::-1] @ rule.weights
    table = np.asarray(rule.table)[mirrored]
    name = f"reflect({rule.name})" if rule.name else ""
    return LocalRule(rule.state_count, rule.radius, tuple(table.tolist()), name=name)


def invert(rule: LocalRule) -> LocalRule:
    """Conjugate by the order-reversing state map a -> m - a."""
    words = neighborhood_words(rule)
    flipped = (rule.m - words) @ rule.weights
    table = rule.m - np.asarray(rule.table)[flipped]
    name = f"invert({rule.name})" if rule.name else ""
    return LocalRule(rule.state_count, rule.radius, tuple(table.tolist()), name=name)


def restrict(rule: LocalRule, low: int, high: int) -> LocalRule:
    """The rule on the sub-alphabet [low, high], relabelled to {0..high-low}."""
    if not 0 <= low < high <= rule.m:
        raise RuleError(f"invalid state interval [{low},{high}]")
    sub = LocalRule(high - low + 1, rule.radius, (0,) * (high - low + 1) ** rule.width)
    words = neighborhood_words(sub) + low
    outputs = np.asarray(rule.table)[words @ rule.weights]
    bad = np.nonzero((outputs < low) | (outputs > high))[0]
    if bad.size:
        w = tuple(int(v) for v in words[bad[0]])
        raise RuleError(f"[{low},{high}] is not closed: F{w} = {int(outputs[bad[0]])}")
    name = f"restrict({rule.name},[{low},{high}])" if rule.name else ""
    return LocalRule(sub.state_count, rule.radius, tuple((outputs - low).tolist()), name=name)


# --- builtin catalogue -------------------------------------------------------

def _from_function(states: int, radius: int, fn, name: str) -> LocalRule:
    proto = LocalRule(states, radius, (0,) * states ** (2 * radius + 1))
    table = tuple(int(fn(*w)) for w in neighborhood_words(proto).tolist())
    return LocalRule(states, radius, table, name=name)


def _galperin(a, b, c):
    if a == 0 and b <= 1 and c <= 1:
        return 0
    if b == 2 and c <= 1:
        return 1
    if c == 2 and a + b >= 2:
        return 2
    return b


def galperin3() -> LocalRule:
    """Three-state eroder that is not a stable eroder."""
    return _from_function(3, 1, _galperin, "galperin3")


def decrement(m: int) -> LocalRule:
    """Decrement a nonzero cell whose right neighbor is 0."""
    if m < 1:
        raise RuleError("decrement needs m >= 1")
    return _from_function(m + 1, 1, lambda a, b, c: b - 1 if b > 0 and c == 0 else b,
                          f"decrement{m}")


def min2() -> LocalRule:
    return _from_function(2, 1, lambda a, b, c: min(b, c), "min2")


def _bidir(a, b, c, d, e):
    if max(a, b, c, d) <= 1 and e == 0:
        return 0
    if c == 0 and min(d, e) >= 1:
        return 1
    if max(a, b) <= 1 and c == 2:
        return 1
    if a == 2 and min(b, c, d, e) >= 1:
        return 2
    return c


def bidir3() -> LocalRule:
    """Radius-2 ternary rule that erodes islands in both state orders.

    The four cases are pairwise disjoint.  The rule is fixed by the map
    x_i -> 2 - x_{-i}, so its inverted and reflected versions coincide.
    """
    return _from_function(3, 2, _bidir, "bidir3")


def wrapped4() -> LocalRule:
    """galperin3 extended by a state 3 that always erodes."""
    def g(a, b, c):
        if b <= 2:
            return _galperin(min(a, 2), b, min(c, 2))
        if a == b == c == 3:
            return 3
        return min(b, 2)
    return _from_function(4, 1, g, "wrapped4")


BUILTINS = {
    "galperin3": galperin3,
    "decrement": decrement,
    "min2": min2,
    "bidir3": bidir3,
    "wrapped4": wrapped4,
}


def builtin(name: str, param: int | None = None) -> LocalRule:
    if name not in BUILTINS:
        raise RuleError(f"unknown builtin {name!r}")
    if name == "decrement":
        if param is None:
            raise RuleError("builtin decrement needs a parameter m")
        return decrement(param)
    if param is not None:
        raise RuleError(f"builtin {name} takes no parameter")
    return BUILTINS[name]()


# --- rule files ----------------------------------------------------------------

_INT = re.compile(r"^-?\d+$")


def parse_rule(text: str) -> LocalRule:
    """Parse the ``ca-rule v1`` text format (see docs/formats.md)."""
    header_seen = False
    states = radius = None
    table: list[int] | None = None
    builtin_ref: tuple[str, int | None, int] | None = None
    in_table = False
    body_seen = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = line.split()
        if not tokens:
            continue
        col = len(line) - len(line.lstrip()) + 1
        key = tokens[0]
        if key == "ca-rule":
            if header_seen or body_seen or tokens[1:] != ["v1"]:
                raise RuleParseError(f"malformed header {line.strip()!r}", lineno, col)
            header_seen = True
            continue
        body_seen = True
        if in_table and _INT.match(key):
            table.extend(_entries(tokens, line, lineno))
            continue
        in_table = False
        if key in ("states", "radius"):
            if len(tokens) != 2 or not _INT.match(tokens[1]):
                raise RuleParseError(f"expected '{key} <integer>'", lineno, col)
            value = int(tokens[1])
            if key == "states":
                if states is not None:
                    raise RuleParseError("duplicate states line", lineno, col)
                if value < 2:
                    raise RuleParseError("states must be at least 2", lineno, line.index(tokens[1]) + 1)
                states = value
            else:
                if radius is not None:
                    raise RuleParseError("duplicate radius line", lineno, col)
                if value < 0:
                    raise RuleParseError("radius must be non-negative", lineno, line.index(tokens[1]) + 1)
                radius = value
        elif key == "table":
            if table is not None or builtin_ref is not None:
                raise RuleParseError("more than one table/builtin line", lineno, col)
            table = _entries(tokens[1:], line, lineno)
            in_table = True
        elif key == "builtin":
            if table is not None or builtin_ref is not None:
                raise RuleParseError("more than one table/builtin line", lineno, col)
            if len(tokens) not in (2, 3):
                raise RuleParseError("expected 'builtin <name> [param]'", lineno, col)
            name = tokens[1]
            if name not in BUILTINS:
                raise RuleParseError(f"unknown builtin {name!r}", lineno, line.index(name) + 1)
            param = None
            if len(tokens) == 3:
                if not _INT.match(tokens[2]):
                    raise RuleParseError("builtin parameter must be an integer", lineno,
                                         line.index(tokens[2]) + 1)
                param = int(tokens[2])
            builtin_ref = (name, param, lineno)
        else:
            raise RuleParseError(f"unexpected keyword {key!r}", lineno, col)

    if builtin_ref is not None:
        name, param, lineno = builtin_ref
        try:
            rule = builtin(name, param)
        except RuleError as exc:
            raise RuleParseError(str(exc), lineno) from None
        if states is not None and states != rule.state_count:
            raise RuleParseError(f"builtin {name} has {rule.state_count} states, not {states}", lineno)
        if radius is not None and radius != rule.radius:
            raise RuleParseError(f"builtin {name} has radius {rule.radius}, not {radius}", lineno)
        return rule
    if table is None:
        raise RuleParseError("missing table or builtin line", max(1, len(text.splitlines())))
    if states is None or radius is None:
        raise RuleParseError("explicit tables need 'states' and 'radius' lines", 1)
    expected = states ** (2 * radius + 1)
    if len(table) != expected:
        raise RuleParseError(f"table has {len(table)} entries, expected {expected}", _table_line(text))
    for pos, v in enumerate(table):
        if not 0 <= v < states:
            raise RuleParseError(f"table entry {pos} = {v} is outside 0..{states - 1}", _table_line(text))
    return LocalRule(states, radius, tuple(table))


def _entries(tokens: list[str], line: str, lineno: int) -> list[int]:
    out = []
    for tok in tokens:
        if not _INT.match(tok):
            raise RuleParseError(f"table entry {tok!r} is not an integer", lineno, line.find(tok) + 1)
        out.append(int(tok))
    return out


def _table_line(text: str) -> int:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.split("#", 1)[0].split()[:1] == ["table"]:
            return lineno
    return 1


def format_rule(rule: LocalRule) -> str:
    """Serialize as an explicit-table rule file."""
    lines = ["ca-rule v1", f"states {rule.state_count}", f"radius {rule.radius}"]
    entries = [str(v) for v in rule.table]
    row = rule.state_count ** min(rule.width, 3)
    chunks = [" ".join(entries[i:i + row]) for i in range(0, len(entries), row)]
    lines.append("table " + chunks[0])
    lines.extend(chunks[1:])
    return "\n".join(lines) + "\n"


def resolve_rule(ref: str) -> LocalRule:
    """Rule from ``builtin:<name>[:<param>]`` or a rule-file path."""
    if ref.startswith("builtin:"):
        parts = ref[len("builtin:"):].split(":")
        name = parts[0]
        param = None
        if len(parts) > 2:
            raise RuleError(f"malformed builtin reference {ref!r}")
        if len(parts) == 2:
            if not _INT.match(parts[1]):
                raise RuleError(f"malformed builtin parameter in {ref!r}")
            param = int(parts[1])
        return builtin(name, param)
    with open(ref, encoding="utf-8") as fh:
        return parse_rule(fh.read())
