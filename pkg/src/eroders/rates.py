"""Evolution of step configurations and Gal'perin edge rates.

The step of type a,b holds a on negative coordinates and b elsewhere.  Under
a monotone rule every iterate is a ladder: a up to L^t, b from R^t on, and
an interface word strictly between.  Only that word is stored, so the
evolution is exact on the whole line at cost proportional to its length.

L_{a,b} = lim L^t/t and R_{a,b} = lim R^t/t.  Superadditivity of L^t + 1 and
subadditivity of R^t make (L^t + 1)/t a lower bound for L and R^t/t an upper
bound for R at every t; L <= R closes the bracket from the other side.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .rule import LocalRule, RuleError, is_monotone, quiescent_states, step_valid

EXACT_CYCLE = "exact-cycle"
EXACT_STABILIZED = "exact-stabilized"
BOUNDED = "bounded"


@dataclass(frozen=True)
class RateParams:
    T_max: int = 4096
    denominator_bound: int = 64
    confirm_window: int = 512

    def __post_init__(self):
        if self.T_max < 2 or self.denominator_bound < 1 or self.confirm_window < 1:
            raise ValueError("rate parameters must be positive")


@dataclass(frozen=True, eq=False)
class StepTrace:
    """Edges L^t, R^t for t = 0..horizon and the interface words between them."""

    a: int
    b: int
    L: np.ndarray
    R: np.ndarray
    words: tuple[bytes, ...]

    @property
    def horizon(self) -> int:
        return len(self.L) - 1

    def offset(self, t: int) -> int:
        """Coordinate of the first interface cell at time t."""
        return int(self.L[t]) + 1

    def word(self, t: int) -> tuple[int, ...]:
        return tuple(self.words[t])

    def row(self, t: int, lo: int, hi: int) -> np.ndarray:
        """The iterate f^t(x) restricted to [lo, hi]."""
        idx = np.arange(lo, hi + 1)
        out = np.where(idx <= self.L[t], self.a, self.b)
        word = np.frombuffer(self.words[t], dtype=np.uint8)
        start = self.offset(t)
        inside = (idx >= start) & (idx < start + len(word))
        out[inside] = word[idx[inside] - start]
        return out


class StepEvolver:
    """Incremental exact evolution of the step of type a,b."""

    def __init__(self, rule: LocalRule, a: int, b: int):
        quiet = quiescent_states(rule)
        if a == b or a not in quiet or b not in quiet:
            raise RuleError(f"({a},{b}) is not a pair of distinct quiescent states")
        self.rule, self.a, self.b = rule, a, b
        self.L = [-1]
        self.R = [0]
        self.words = [b""]
        self._word = np.zeros(0, dtype=np.uint8)

    @property
    def t(self) -> int:
        return len(self.L) - 1

    def advance(self) -> None:
        r = self.rule.radius
        # one extra cell each side so the outermost outputs see pure a / pure b
        pad = 2 * r + 1
        cells = np.concatenate([np.full(pad, self.a, dtype=np.uint8), self._word,
                                np.full(pad, self.b, dtype=np.uint8)])
        out = step_valid(self.rule, cells).astype(np.uint8)
        start = self.L[-1] + 1 - pad + r
        not_a = np.nonzero(out != self.a)[0]
        not_b = np.nonzero(out != self.b)[0]
        if not_a.size == 0 or not_b.size == 0:
            raise RuleError("step evolution left the ladder; is the rule monotone?")
        first, last = int(not_a[0]), int(not_b[-1])
        word = out[first:last + 1] if first <= last else out[0:0]
        if first > last + 1 or (word.size and ((word == self.a).any() or (word == self.b).any())):
            raise RuleError("step evolution left the ladder; is the rule monotone?")
        self.L.append(start + first - 1)
        self.R.append(start + max(first, last + 1))
        self._word = np.ascontiguousarray(word)
        self.words.append(self._word.tobytes())

    def trace(self) -> StepTrace:
        return StepTrace(self.a, self.b, np.asarray(self.L, dtype=np.int64),
                         np.asarray(self.R, dtype=np.int64), tuple(self.words))


def evolve_step(rule: LocalRule, a: int, b: int, T: int, check_monotone: bool = True) -> StepTrace:
    if check_monotone and not is_monotone(rule):
        raise RuleError("rule is not monotone")
    ev = StepEvolver(rule, a, b)
    for _ in range(T):
        ev.advance()
    return ev.trace()


def _run_until_cycle(rule: LocalRule, a: int, b: int, T_max: int):
    ev = StepEvolver(rule, a, b)
    seen = {b"": 0}
    while ev.t < T_max:
        ev.advance()
        key = ev.words[-1]
        if key in seen:
            return ev.trace(), (seen[key], ev.t)
        seen[key] = ev.t
    return ev.trace(), None


@dataclass(frozen=True)
class Evidence:
    cycle: tuple[int, int] | None = None
    shift: int | None = None
    window: tuple[int, int] | None = None
    candidate: str | None = None
    certificate: Fraction | None = None
    certificate_time: int | None = None
    k_hat: float | None = None
    k_hat_stable: bool | None = None


@dataclass(frozen=True)
class RateEstimate:
    """A rate with its certified interval; exact when lower == upper."""

    target: str
    a: int
    b: int
    lower: Fraction
    upper: Fraction
    status: str
    evidence: Evidence = field(default_factory=Evidence)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"empty interval for {self.target}_{{{self.a},{self.b}}}")
        if self.status != BOUNDED and self.lower != self.upper:
            raise ValueError("exact estimate with a non-degenerate interval")

    @property
    def exact(self) -> bool:
        return self.status != BOUNDED

    @property
    def value(self) -> Fraction | None:
        return self.lower if self.exact else None

    def render(self) -> str:
        if self.exact:
            return format_fraction(self.lower)
        return f"[{format_fraction(self.lower)},{format_fraction(self.upper)}]"


@dataclass(frozen=True)
class RatePair:
    L: RateEstimate
    R: RateEstimate


def format_fraction(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def rate_bounds(trace: StepTrace) -> tuple[Fraction, Fraction]:
    """Certified (lower bound for L, upper bound for R) from the whole trace."""
    lower, _ = _best_lower(trace.L)
    upper, _ = _best_upper(trace.R)
    return lower, upper


def _best_lower(L: np.ndarray) -> tuple[Fraction, int]:
    best = 1
    for i in range(2, len(L)):
        # cross-multiplied comparison of (L^i + 1)/i with the best so far
        if (int(L[i]) + 1) * best > (int(L[best]) + 1) * i:
            best = i
    return Fraction(int(L[best]) + 1, best), best


def _best_upper(R: np.ndarray) -> tuple[Fraction, int]:
    best = 1
    for i in range(2, len(R)):
        if int(R[i]) * best < int(R[best]) * i:
            best = i
    return Fraction(int(R[best]), best), best


def rate_by_cycle(trace: StepTrace) -> RatePair | None:
    """Exact rates from the first repeated interface word, if any."""
    first = {}
    for t, w in enumerate(trace.words):
        if w in first:
            return _cycle_pair(trace, first[w], t)
        first[w] = t
    return None


def _cycle_pair(trace: StepTrace, t1: int, t2: int) -> RatePair:
    shift = int(trace.L[t2] - trace.L[t1])
    assert shift == int(trace.R[t2] - trace.R[t1])
    value = Fraction(shift, t2 - t1)
    lo, lo_t = _best_lower(trace.L)
    up, up_t = _best_upper(trace.R)
    common = dict(cycle=(t1, t2), shift=shift)
    kl = _deviation(trace.L, value)
    kr = _deviation(trace.R, value)
    return RatePair(
        RateEstimate("L", trace.a, trace.b, value, value, EXACT_CYCLE,
                     Evidence(**common, certificate=lo, certificate_time=lo_t, k_hat=kl[0], k_hat_stable=kl[1])),
        RateEstimate("R", trace.a, trace.b, value, value, EXACT_CYCLE,
                     Evidence(**common, certificate=up, certificate_time=up_t, k_hat=kr[0], k_hat_stable=kr[1])),
    )


def _deviation(edge: np.ndarray, value: Fraction) -> tuple[float, bool]:
    """K-hat = max |X^t - t*value|, and whether the later half stays within the earlier half."""
    t = np.arange(len(edge), dtype=np.float64)
    dev = np.abs(edge - t * (value.numerator / value.denominator))
    half = len(edge) // 2
    k_hat = float(dev.max())
    stable = bool(dev[half:].max() <= dev[:half + 1].max() + 1e-9)
    return k_hat, stable


def _stabilized(edge: np.ndarray, D: int, window: int) -> tuple[Fraction, tuple[int, int]] | None:
    """Smallest period q <= D with constant increments over the trailing window."""
    T = len(edge) - 1
    for q in range(1, D + 1):
        start = T - q - window + 1
        if start < 0:
            break
        diffs = edge[start + q:] - edge[start:T - q + 1]
        if (diffs == diffs[0]).all():
            return Fraction(int(diffs[0]), q), (start, T)
    return None


def _candidate_sources(target: str, a: int, b: int, quiet: tuple[int, ...]) -> list[tuple[str, int, int]]:
    """Rates the target must coincide with one of: an edge rate always equals an edge rate of an intermediate pair."""
    lo, hi = min(a, b), max(a, b)
    if target == "R" and a > b:       # R_{b',a'} with a' < b': in {L_{c,a'} : a' < c <= b'}
        return [("L", c, b) for c in quiet if b < c <= a]
    if target == "L" and a < b:       # L_{a,b} in {R_{a,d} : a < d <= b}
        return [("R", a, d) for d in quiet if a < d <= b]
    if target == "R" and a < b:       # R_{a,b} in {L_{c,b} : a <= c < b}
        return [("L", c, b) for c in quiet if a <= c < b]
    return [("R", a, d) for d in quiet if b <= d < a]  # L_{a,b}, a > b


def _monotone_neighbours(target: str, a: int, b: int, quiet: tuple[int, ...]):
    """(other, direction): direction +1 means target >= other, -1 means target <= other."""
    out = []
    if a < b:
        if target == "L":   # L_{a,b} >= L_{a,b'} for b' > b;  <= for a < b' < b
            out += [(("L", a, c), +1) for c in quiet if c > b]
            out += [(("L", a, c), -1) for c in quiet if a < c < b]
        else:               # R_{a,b} >= R_{a',b} for a' > a (a' < b); <= for a' < a
            out += [(("R", c, b), +1) for c in quiet if a < c < b]
            out += [(("R", c, b), -1) for c in quiet if c < a]
    else:
        if target == "R":   # R_{b,a} <= R_{b',a} for b' > b; here pair is (a,b) with a > b
            out += [(("R", c, b), -1) for c in quiet if c > a]
            out += [(("R", c, b), +1) for c in quiet if b < c < a]
        else:               # L_{b,a} <= L_{b,a'} for a' > a
            out += [(("L", a, c), -1) for c in quiet if b < c < a]
            out += [(("L", a, c), +1) for c in quiet if c < b]
    return out


@dataclass
class _Work:
    trace: StepTrace
    cycle: RatePair | None
    lower: Fraction
    upper: Fraction


def rate_table(rule: LocalRule, params: RateParams = RateParams(), workers: int = 1) -> dict:
    """Rates for every ordered pair of distinct quiescent states.

    Returns a dict (a, b) -> RatePair.  Adjacent pairs are decided by cycle
    detection; the remaining ones by candidate matching against the other
    exact entries, then by stabilization of the edge increments, and are
    otherwise reported as certified brackets.
    """
    if not is_monotone(rule):
        raise RuleError("rule is not monotone")
    quiet = quiescent_states(rule)
    pairs = [(a, b) for a in quiet for b in quiet if a != b]

    def run(pair):
        trace, cyc = _run_until_cycle(rule, *pair, params.T_max)
        cycle = _cycle_pair(trace, *cyc) if cyc else None
        lo, up = rate_bounds(trace)
        return _Work(trace, cycle, lo, up)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            work = dict(zip(pairs, pool.map(run, pairs)))
    else:
        work = {p: run(p) for p in pairs}

    est: dict[tuple[str, int, int], RateEstimate] = {}
    brackets: dict[tuple[str, int, int], tuple[Fraction, Fraction]] = {}
    for (a, b), w in work.items():
        if w.cycle:
            est[("L", a, b)] = w.cycle.L
            est[("R", a, b)] = w.cycle.R
        else:
            brackets[("L", a, b)] = (w.lower, w.upper)
            brackets[("R", a, b)] = (w.lower, w.upper)

    def tighten():
        changed = False
        for key, (lo, up) in list(brackets.items()):
            for other, direction in _monotone_neighbours(*key, quiet):
                if other in est:
                    v = est[other].lower
                    if direction > 0 and v > lo:
                        lo, changed = v, True
                    if direction < 0 and v < up:
                        up, changed = v, True
            # L <= R within a pair
            t, a, b = key
            partner = ("R" if t == "L" else "L", a, b)
            if partner in est:
                v = est[partner].lower
                if t == "L" and v < up:
                    up, changed = v, True
                if t == "R" and v > lo:
                    lo, changed = v, True
            if lo > up:
                raise AssertionError(f"inconsistent bounds for {key}")
            brackets[key] = (lo, up)
        return changed

    progress = True
    while progress and brackets:
        progress = tighten()
        for key in sorted(brackets):
            lo, up = brackets[key]
            t, a, b = key
            edge = work[(a, b)].trace.L if t == "L" else work[(a, b)].trace.R
            hit = None
            if lo == up:
                hit = (lo, None)
            else:
                sources = _candidate_sources(t, a, b, quiet)
                values = sorted({est[s].lower for s in sources if s in est and lo <= est[s].lower <= up})
                unknown = [s for s in sources if s not in est and s != key]
                if len(values) == 1 and not unknown:
                    hit = (values[0], "".join(f"{s[0]}_{{{s[1]},{s[2]}}}" for s in sources
                                              if s in est and est[s].lower == values[0]))
            if hit is None:
                continue
            value, source = hit
            k = _deviation(edge, value)
            cert, cert_t = (_best_lower(edge) if t == "L" else _best_upper(edge))
            est[key] = RateEstimate(t, a, b, value, value, EXACT_STABILIZED,
                                    Evidence(candidate=source or "bracket", certificate=cert,
                                             certificate_time=cert_t, k_hat=k[0], k_hat_stable=k[1]))
            del brackets[key]
            progress = True

    # denominator-bounded stabilization for whatever is left
    for key in sorted(brackets):
        t, a, b = key
        tighten()
        lo, up = brackets[key]
        edge = work[(a, b)].trace.L if t == "L" else work[(a, b)].trace.R
        cert, cert_t = (_best_lower(edge) if t == "L" else _best_upper(edge))
        found = _stabilized(edge, params.denominator_bound, params.confirm_window)
        if found and lo <= found[0] <= up:
            value, window = found
            k = _deviation(edge, value)
            est[key] = RateEstimate(t, a, b, value, value, EXACT_STABILIZED,
                                    Evidence(window=window, certificate=cert, certificate_time=cert_t,
                                             k_hat=k[0], k_hat_stable=k[1]))
        else:
            est[key] = RateEstimate(t, a, b, lo, up, BOUNDED,
                                    Evidence(certificate=cert, certificate_time=cert_t))
        del brackets[key]

    return {(a, b): RatePair(est[("L", a, b)], est[("R", a, b)]) for a, b in pairs}


def rate(rule: LocalRule, a: int, b: int, params: RateParams = RateParams()) -> RatePair:
    """Rates of a single pair; other pairs are consulted for candidate values."""
    quiet = quiescent_states(rule)
    if a == b or a not in quiet or b not in quiet:
        raise RuleError(f"({a},{b}) is not a pair of distinct quiescent states")
    return rate_table(rule, params)[(a, b)]


def rate_lines(table: dict) -> list[str]:
    lines = []
    for (a, b) in sorted(table):
        pair = table[(a, b)]
        for est in (pair.L, pair.R):
            lines.append(f"rate\t{a}\t{b}\t{est.target}\t{est.render()}\t{est.status}")
    return lines


def additivity_violations(trace: StepTrace, limit: int) -> list[tuple[str, int, int]]:
    """Pairs (t, s) with t, s <= limit breaking super-/subadditivity."""
    T = trace.horizon
    n = min(limit, T // 2)
    t = np.arange(1, n + 1)
    L, R = trace.L, trace.R
    ts = t[:, None] + t[None, :]
    bad_l = np.argwhere(L[ts] < L[t][:, None] + L[t][None, :] + 1)
    bad_r = np.argwhere(R[ts] > R[t][:, None] + R[t][None, :])
    return [("L", int(i) + 1, int(j) + 1) for i, j in bad_l] + [("R", int(i) + 1, int(j) + 1) for i, j in bad_r]


def exact_value(table: dict, target: str, a: int, b: int) -> Fraction | None:
    est = getattr(table[(a, b)], target)
    return est.value


def lcm(values) -> int:
    return math.lcm(*values) if values else 1
