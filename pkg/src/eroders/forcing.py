"""Minimal a,b-forcing sets, their hull intersections, and shrinking certificates.

V is a,b-forcing at level k when every configuration bounded by b that holds
at most a on V is pushed to at most a at the origin after k steps.  By
monotonicity it is enough to test the largest such configuration: a on V
and b elsewhere.  Only the window [-kr, kr] influences the origin, so
minimal forcing sets live inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np

from .rule import LocalRule, RuleError, is_monotone, quiescent_states, step_valid

DEFAULT_BUDGET = 1 << 22
DEFAULT_K_MAX = 8
_CHUNK = 1 << 15


@dataclass(frozen=True)
class ForcingFamily:
    a: int
    b: int
    k: int
    sets: tuple[tuple[int, ...], ...]
    complete: bool

    def __post_init__(self):
        for i, u in enumerate(self.sets):
            for v in self.sets[i + 1:]:
                if set(u) <= set(v) or set(v) <= set(u):
                    raise ValueError("forcing family is not an antichain")

    def __iter__(self):
        return iter(self.sets)

    def __len__(self):
        return len(self.sets)

    def lines(self) -> list[str]:
        return [f"forcing\t{self.a}\t{self.b}\t{self.k}\t{format_set(v)}" for v in self.sets]


@dataclass(frozen=True)
class Tau:
    """Intersection of the hulls of a forcing family, as [lo, hi].

    The whole window is always forcing, so a complete family is never empty;
    a search cut short by the budget may find nothing, which gives the whole
    line.  For incomplete families the interval is only an upper approximation.
    """

    lo: float
    hi: float
    complete: bool

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    def render(self) -> str:
        if self.empty:
            return "empty"
        return f"[{_fmt(self.lo)},{_fmt(self.hi)}]"


@dataclass(frozen=True)
class ShrinkingCertificate:
    a: int
    b: int
    k: int
    U: tuple[int, ...]
    V: tuple[int, ...]


def format_set(v) -> str:
    return "{" + ",".join(str(i) for i in v) + "}"


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return str(int(x))


def _check_pair(rule: LocalRule, a: int, b: int) -> None:
    quiet = quiescent_states(rule)
    if not (a < b and a in quiet and b in quiet):
        raise RuleError(f"({a},{b}) must be quiescent states with a < b")


def _forcing_rows(rule: LocalRule, configs: np.ndarray, k: int, a: int) -> np.ndarray:
    cells = configs
    for _ in range(k):
        cells = step_valid(rule, cells)
    return cells[:, 0] <= a


def is_forcing(rule: LocalRule, V, a: int, b: int, k: int) -> bool:
    _check_pair(rule, a, b)
    if k < 1:
        raise RuleError("level k must be positive")
    kr = k * rule.radius
    V = sorted(set(V))
    if any(not -kr <= v <= kr for v in V):
        raise RuleError(f"set {format_set(V)} leaves the level window [{-kr},{kr}]")
    x = np.full((1, 2 * kr + 1), b, dtype=np.int64)
    for v in V:
        x[0, v + kr] = a
    return bool(_forcing_rows(rule, x, k, a)[0])


def minimal_forcing_sets(rule: LocalRule, a: int, b: int, k: int,
                         budget: int = DEFAULT_BUDGET) -> ForcingFamily:
    """All inclusion-minimal forcing sets at level k, by size then lexicographically."""
    _check_pair(rule, a, b)
    if not is_monotone(rule):
        raise RuleError("rule is not monotone")
    if k < 1:
        raise RuleError("level k must be positive")
    kr = k * rule.radius
    n = 2 * kr + 1
    # A forcing set is minimal iff none of its one-smaller subsets is forcing,
    # so only the forcing sets of the previous size need to be remembered.
    found: list[tuple[int, ...]] = []
    generated = 0
    prev = np.zeros(0, dtype=np.int64)
    for size in range(1, n + 1):
        current = []
        any_open = False
        combos = combinations(range(n), size)
        while True:
            batch = list(islice(combos, _CHUNK))
            if not batch:
                break
            generated += len(batch)
            idx = np.asarray(batch, dtype=np.int64)
            configs = np.full((len(idx), n), b, dtype=np.int64)
            np.put_along_axis(configs, idx, a, axis=1)
            hits = _forcing_rows(rule, configs, k, a)
            any_open = any_open or not hits.all()
            idx = idx[hits]
            masks = _masks(idx, n)
            current.append(masks)
            if size > 1 and len(idx):
                minimal = ~_any_subset_in(masks, idx, prev)
            else:
                minimal = np.ones(len(idx), dtype=bool)
            for row in idx[minimal]:
                found.append(tuple(int(i) - kr for i in row))
            if generated >= budget:
                return ForcingFamily(a, b, k, tuple(found), False)
        if not any_open:
            # every set of this size is forcing, so no larger set can be minimal
            break
        prev = np.sort(np.concatenate(current)) if current else prev
    return ForcingFamily(a, b, k, tuple(found), True)


def _masks(idx: np.ndarray, n: int) -> np.ndarray:
    if n > 62:
        raise RuleError("level window wider than 62 cells")
    return (np.int64(1) << idx).sum(axis=1) if len(idx) else np.zeros(0, dtype=np.int64)


def _any_subset_in(masks: np.ndarray, idx: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """For each mask, whether removing one of its cells lands in the sorted pool."""
    out = np.zeros(len(masks), dtype=bool)
    if not len(pool):
        return out
    for j in range(idx.shape[1]):
        sub = masks - (np.int64(1) << idx[:, j])
        pos = np.searchsorted(pool, sub).clip(max=len(pool) - 1)
        out |= pool[pos] == sub
    return out


def tau(rule: LocalRule, a: int, b: int, k: int, budget: int = DEFAULT_BUDGET,
        family: ForcingFamily | None = None) -> Tau:
    fam = family or minimal_forcing_sets(rule, a, b, k, budget)
    return tau_of(fam)


def tau_of(fam: ForcingFamily) -> Tau:
    if not fam.sets:
        return Tau(-math.inf, math.inf, fam.complete)
    lo = max(min(v) for v in fam.sets)
    hi = min(max(v) for v in fam.sets)
    return Tau(lo, hi, fam.complete)


def certificate_of(fam: ForcingFamily) -> ShrinkingCertificate | None:
    """U minimizing max U and V maximizing min V; a certificate when max U < min V."""
    if not fam.sets:
        return None
    U = min(fam.sets, key=max)
    V = max(fam.sets, key=min)
    if max(U) < min(V):
        return ShrinkingCertificate(fam.a, fam.b, fam.k, U, V)
    return None


def shrinking_certificate(rule: LocalRule, a: int, b: int, k_max: int = DEFAULT_K_MAX,
                          budget: int = DEFAULT_BUDGET) -> tuple[ShrinkingCertificate | None, bool]:
    """Smallest-level certificate up to k_max, and whether the search was exhaustive."""
    complete = True
    for k in range(1, k_max + 1):
        fam = minimal_forcing_sets(rule, a, b, k, budget)
        cert = certificate_of(fam)
        if cert:
            return cert, complete
        complete = complete and fam.complete
    return None, complete


def check_certificate(rule: LocalRule, cert: ShrinkingCertificate) -> bool:
    """Independent re-check: both sets are forcing at the stated level and separated."""
    return (max(cert.U) < min(cert.V)
            and is_forcing(rule, cert.U, cert.a, cert.b, cert.k)
            and is_forcing(rule, cert.V, cert.a, cert.b, cert.k))


def sum_forcing(U, V) -> tuple[int, ...]:
    return tuple(sorted({u + v for u in U for v in V}))
