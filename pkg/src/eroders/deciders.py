"""Eroder, shrinking and stable-eroder decisions with certificates.

Answers are three-valued.  Rates enter as certified intervals, so X > Y is
established when lo(X) > hi(Y) and refuted when hi(X) <= lo(Y).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .forcing import (
    DEFAULT_BUDGET, DEFAULT_K_MAX, ShrinkingCertificate, check_certificate, minimal_forcing_sets,
    shrinking_certificate, tau_of, certificate_of,
)
from .rates import RateEstimate, RateParams, format_fraction, rate_table
from .rule import LocalRule, RuleError, is_monotone, quiescent_states

YES, NO, UNKNOWN = "yes", "no", "unknown"


@dataclass(frozen=True)
class DecideParams:
    rates: RateParams = RateParams()
    k_max: int = DEFAULT_K_MAX
    budget: int = DEFAULT_BUDGET
    # when rates already decide a pair, forcing sets are only cross-checked
    # on levels whose window has at most this many cells
    cross_check_cells: int = 15


@dataclass(frozen=True)
class Verdict:
    answer: str
    citations: tuple[str, ...] = ()
    chain: tuple[int, ...] | None = None
    forcing: ShrinkingCertificate | None = None
    budget: str = ""


def _cite(est: RateEstimate) -> str:
    name = f"{est.target}_{{{est.a},{est.b}}}"
    return f"{name}={est.render()}" if est.exact else f"{name} in {est.render()}"


def _greater(x: RateEstimate, y: RateEstimate) -> str:
    """Three-valued x > y on certified intervals."""
    if x.lower > y.upper:
        return YES
    if x.upper <= y.lower:
        return NO
    return UNKNOWN


class Analysis:
    """Shared rate table and forcing results for one rule."""

    def __init__(self, rule: LocalRule, params: DecideParams = DecideParams(), table: dict | None = None):
        if not is_monotone(rule):
            raise RuleError("rule is not monotone")
        self.rule = rule
        self.params = params
        self.quiet = quiescent_states(rule)
        self.table = table if table is not None else rate_table(rule, params.rates)
        self._shrinking: dict[tuple[int, int], Verdict] = {}

    def est(self, target: str, a: int, b: int) -> RateEstimate:
        return getattr(self.table[(a, b)], target)

    # -- shrinking ---------------------------------------------------------------------------

    def shrinking(self, a: int, b: int) -> Verdict:
        if (a, b) not in self._shrinking:
            self._shrinking[(a, b)] = self._decide_shrinking(a, b)
        return self._shrinking[(a, b)]

    def _decide_shrinking(self, a: int, b: int) -> Verdict:
        if not (a < b and a in self.quiet and b in self.quiet):
            raise RuleError(f"({a},{b}) must be quiescent states with a < b")
        L, R = self.est("L", a, b), self.est("R", b, a)
        by_rates = _greater(L, R)
        citations = (_cite(L), _cite(R))
        p = self.params
        cert, complete, searched = None, True, 0
        for k in range(1, p.k_max + 1):
            cells = 2 * k * self.rule.radius + 1
            if by_rates != UNKNOWN and cells > p.cross_check_cells and k > 1:
                break
            fam = minimal_forcing_sets(self.rule, a, b, k, p.budget)
            searched = k
            cert = certificate_of(fam)
            complete = complete and fam.complete
            if cert or not fam.complete:
                break
        if cert and by_rates == NO:
            raise AssertionError(f"forcing certificate contradicts rates for ({a},{b})")
        budget = f"forcing levels 1..{searched}" + ("" if complete else " (budget hit)")
        if cert:
            return Verdict(YES, citations if by_rates == YES else (), forcing=cert, budget=budget)
        if by_rates == YES:
            return Verdict(YES, citations, budget=budget)
        if by_rates == NO:
            return Verdict(NO, citations, budget=budget)
        return Verdict(UNKNOWN, citations, budget=budget)

    # -- eroder --------------------------------------------------------------------------------

    def eroder(self) -> Verdict:
        if 0 not in self.quiet:
            raise RuleError("state 0 is not quiescent")
        answers, cites = [], []
        for a in self.quiet:
            if a == 0:
                continue
            R, L = self.est("R", 0, a), self.est("L", a, 0)
            ans = _greater(R, L)
            answers.append(ans)
            cites.append((ans, f"{_cite(R)} {'>' if ans == YES else '<=' if ans == NO else '?'} {_cite(L)}"))
        if all(x == YES for x in answers):
            return Verdict(YES, tuple(c for _, c in cites))
        if NO in answers:
            return Verdict(NO, tuple(c for ans, c in cites if ans == NO)[:1])
        return Verdict(UNKNOWN, tuple(c for ans, c in cites if ans == UNKNOWN))

    # -- stable eroder ---------------------------------------------------------------------------

    def chain(self) -> tuple[tuple[int, ...] | None, bool]:
        """Shortest, then lexicographically least, chain 0 -> m of shrinking pairs.

        The flag tells whether every edge was decided, which makes the
        absence of a chain conclusive.
        """
        top = self.rule.m
        decided = True
        succ: dict[int, list[int]] = {a: [] for a in self.quiet}
        for a in self.quiet:
            for b in self.quiet:
                if a < b:
                    v = self.shrinking(a, b)
                    if v.answer == YES:
                        succ[a].append(b)
                    elif v.answer == UNKNOWN:
                        decided = False
        # breadth-first search visiting successors in increasing order gives the
        # lexicographically least among shortest paths
        parent = {0: None}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in succ[u]:
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        if top not in parent:
            return None, decided
        path = [top]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        return tuple(reversed(path)), decided

    def alt_stability(self) -> str:
        """Every quiescent a > 0 has a quiescent b < a with L_{b,a} > R_{a,b}."""
        per_state = []
        for a in self.quiet:
            if a == 0:
                continue
            found = [_greater(self.est("L", b, a), self.est("R", a, b)) for b in self.quiet if b < a]
            per_state.append(YES if YES in found else NO if all(x == NO for x in found) else UNKNOWN)
        if all(x == YES for x in per_state):
            return YES
        if NO in per_state:
            return NO
        return UNKNOWN

    def stable(self) -> Verdict:
        if 0 not in self.quiet or self.rule.m not in self.quiet:
            raise RuleError("states 0 and m must be quiescent")
        path, decided = self.chain()
        alt = self.alt_stability()
        graph = YES if path else (NO if decided else UNKNOWN)
        if UNKNOWN not in (graph, alt) and graph != alt:
            raise AssertionError(f"chain search says {graph}, rate formulation says {alt}")
        answer = graph if graph != UNKNOWN else alt
        if path:
            cites = []
            for a, b in zip(path, path[1:]):
                v = self.shrinking(a, b)
                cites.extend(v.citations)
                if v.forcing:
                    c = v.forcing
                    cites.append(f"U={_set(c.U)} < V={_set(c.V)} at level {c.k} for ({a},{b})")
            return Verdict(YES, tuple(cites), chain=path)
        if answer == NO:
            witness = []
            for a in self.quiet:
                if a > 0:
                    pairs = [(self.est("L", b, a), self.est("R", a, b)) for b in self.quiet if b < a]
                    if all(_greater(L, R) == NO for L, R in pairs):
                        witness = [f"{_cite(L)} <= {_cite(R)}" for L, R in pairs]
                        break
            if not witness:
                witness = ["no chain of shrinking pairs from 0 to m"]
            return Verdict(NO, tuple(witness))
        return Verdict(UNKNOWN, ("shrinking undecided for some pair",))


def _set(v) -> str:
    return "{" + ",".join(map(str, v)) + "}"


def is_shrinking(rule: LocalRule, a: int, b: int, params: DecideParams = DecideParams()) -> Verdict:
    return Analysis(rule, params).shrinking(a, b)


def is_eroder(rule: LocalRule, params: DecideParams = DecideParams()) -> Verdict:
    return Analysis(rule, params).eroder()


def is_stable_eroder(rule: LocalRule, params: DecideParams = DecideParams()) -> Verdict:
    return Analysis(rule, params).stable()


@dataclass(frozen=True)
class BinaryReport:
    eroder: str
    stable: str
    shrinking: str
    tau1_empty: str
    details: dict = field(default_factory=dict, compare=False)

    @property
    def answers(self) -> tuple[str, str, str, str]:
        return (self.eroder, self.stable, self.shrinking, self.tau1_empty)

    @property
    def agree(self) -> bool:
        decided = {x for x in self.answers if x != UNKNOWN}
        return len(decided) <= 1


def binary_equivalence_check(rule: LocalRule, params: DecideParams = DecideParams()) -> BinaryReport:
    """The four equivalent conditions for binary rules, each by its own route.

    Eroder from the rates R_{0,1} > L_{1,0}; stability from the chain search;
    shrinking from a forcing certificate at some level up to k_max (or the
    rates L_{0,1} > R_{1,0} when no certificate turns up); and the level-1
    hull intersection.
    """
    if rule.state_count != 2:
        raise RuleError("rule is not binary")
    if not is_monotone(rule):
        raise RuleError("rule is not monotone")
    if quiescent_states(rule) != (0, 1):
        raise RuleError("constant rules have a non-quiescent state")
    an = Analysis(rule, params)
    eroder = an.eroder().answer
    stable = an.stable().answer
    cert, complete = shrinking_certificate(rule, 0, 1, min(params.k_max, _levels_within(rule, 17)),
                                           params.budget)
    if cert:
        if not check_certificate(rule, cert):
            raise AssertionError("forcing certificate failed re-validation")
        shrinking = YES
    else:
        shrinking = _greater(an.est("L", 0, 1), an.est("R", 1, 0))
    t1 = tau_of(minimal_forcing_sets(rule, 0, 1, 1, params.budget))
    tau_answer = (YES if t1.empty else NO) if t1.complete else UNKNOWN
    return BinaryReport(eroder, stable, shrinking, tau_answer,
                        details={"certificate": cert, "tau1": t1.render()})


def _levels_within(rule: LocalRule, cells: int) -> int:
    if rule.radius == 0:
        return 1
    return max(1, (cells - 1) // (2 * rule.radius))


def decision_lines(rule: LocalRule, params: DecideParams = DecideParams(), table: dict | None = None) -> list[str]:
    an = Analysis(rule, params, table)
    lines = [f"eroder\t{an.eroder().answer}"]
    st = an.stable()
    lines.append(f"stable\t{st.answer}")
    if st.chain:
        lines.append("chain\t" + "<".join(map(str, st.chain)))
    return lines


def rational(x: Fraction) -> str:
    return format_fraction(x)
