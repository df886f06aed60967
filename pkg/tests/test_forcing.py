import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eroders.forcing import (
    certificate_of, check_certificate, is_forcing, minimal_forcing_sets, shrinking_certificate,
    sum_forcing, tau, tau_of,
)
from eroders.rule import LocalRule, RuleError, apply_power, Configuration, decrement, galperin3, min2, bidir3

from helpers import random_monotone_rule

IDENTITY = LocalRule(2, 0, (0, 1))


def brute_is_forcing(rule, V, a, b, k):
    """The definition itself: every x <= b with x <= a on V ends at most a at the origin."""
    kr = k * rule.radius
    cells = range(-kr, kr + 1)
    choices = [range(0, (a if i in V else b) + 1) for i in cells]
    for values in itertools.product(*choices):
        x = Configuration(-kr, values, b, b)
        # outside the window the configuration is b; only the window affects the origin
        if apply_power(rule, x, k)[0] > a:
            return False
    return True


def brute_minimal(rule, a, b, k):
    kr = k * rule.radius
    cells = list(range(-kr, kr + 1))
    forcing = [frozenset(s) for n in range(len(cells) + 1) for s in itertools.combinations(cells, n)
               if brute_is_forcing(rule, set(s), a, b, k)]
    return {s for s in forcing if not any(t < s for t in forcing)}


# --- membership ----------------------------------------------------------------------------

def test_decrement_examples():
    d = decrement(3)
    for k in range(1, 5):
        assert is_forcing(d, {0}, 0, 3, k)
    assert is_forcing(d, {1}, 0, 3, 3)
    assert not is_forcing(d, {1}, 0, 3, 2)


def test_empty_set_never_forcing():
    for rule, (a, b) in [(galperin3(), (0, 2)), (min2(), (0, 1)), (IDENTITY, (0, 1))]:
        assert not is_forcing(rule, set(), a, b, 1)


def test_membership_errors():
    with pytest.raises(RuleError, match="window"):
        is_forcing(min2(), {2}, 0, 1, 1)
    with pytest.raises(RuleError):
        is_forcing(min2(), {0}, 1, 0, 1)


@pytest.mark.parametrize("rule, a, b, k", [
    (galperin3(), 0, 2, 1), (galperin3(), 0, 1, 2), (galperin3(), 1, 2, 1), (min2(), 0, 1, 2),
    (decrement(3), 0, 3, 1), (decrement(2), 0, 2, 2),
])
def test_extremal_reduction_matches_definition(rule, a, b, k):
    kr = k * rule.radius
    cells = range(-kr, kr + 1)
    for n in range(len(cells) + 1):
        for V in itertools.combinations(cells, n):
            assert is_forcing(rule, set(V), a, b, k) == brute_is_forcing(rule, set(V), a, b, k)


# --- families ----------------------------------------------------------------------------------

def test_family_examples():
    assert minimal_forcing_sets(min2(), 0, 1, 1).sets == ((0,), (1,))
    assert minimal_forcing_sets(decrement(3), 0, 3, 2).sets == ((0,),)
    assert minimal_forcing_sets(decrement(3), 0, 3, 1).sets == ((0,),)
    assert minimal_forcing_sets(IDENTITY, 0, 1, 1).sets == ((0,),)
    assert (1,) in minimal_forcing_sets(decrement(3), 0, 3, 3).sets


@pytest.mark.parametrize("rule, a, b, k", [
    (galperin3(), 0, 2, 1), (galperin3(), 0, 2, 2), (galperin3(), 0, 1, 2), (galperin3(), 1, 2, 2),
    (min2(), 0, 1, 3), (decrement(3), 0, 3, 2), (decrement(2), 1, 2, 2),
])
def test_family_matches_brute_force(rule, a, b, k):
    fam = minimal_forcing_sets(rule, a, b, k)
    assert fam.complete
    assert {frozenset(v) for v in fam} == brute_minimal(rule, a, b, k)


def test_family_order_is_size_then_lexicographic():
    fam = minimal_forcing_sets(bidir3(), 0, 2, 3)
    keys = [(len(v), v) for v in fam]
    assert keys == sorted(keys)


def test_budget_flag():
    fam = minimal_forcing_sets(bidir3(), 0, 2, 4, budget=1000)
    assert not fam.complete
    full = minimal_forcing_sets(bidir3(), 0, 2, 4)
    assert set(fam.sets) <= set(full.sets)


def test_full_window_always_forcing():
    # a is quiescent, so filling the whole light cone with a forces a
    for rule, (a, b) in [(galperin3(), (0, 2)), (bidir3(), (1, 2)), (IDENTITY, (0, 1))]:
        for k in (1, 2):
            kr = k * rule.radius
            assert is_forcing(rule, range(-kr, kr + 1), a, b, k)


def test_report_lines():
    assert minimal_forcing_sets(min2(), 0, 1, 1).lines() == ["forcing\t0\t1\t1\t{0}", "forcing\t0\t1\t1\t{1}"]


# --- tau and certificates ---------------------------------------------------------------------

def test_tau_examples():
    assert tau(min2(), 0, 1, 1).empty
    t = tau(decrement(3), 0, 3, 2)
    assert (t.lo, t.hi) == (0, 0) and not t.empty
    t = tau(IDENTITY, 0, 1, 1)
    assert (t.lo, t.hi) == (0, 0)
    assert tau(decrement(3), 0, 3, 3).empty


def test_tau_of_truncated_empty_family_is_whole_line():
    fam = minimal_forcing_sets(bidir3(), 0, 2, 8, budget=1000)
    assert fam.sets == () and not fam.complete
    t = tau_of(fam)
    assert t.lo == -math.inf and t.hi == math.inf and not t.empty and not t.complete


def test_certificate_examples():
    cert, complete = shrinking_certificate(min2(), 0, 1)
    assert (cert.k, cert.U, cert.V) == (1, (0,), (1,)) and complete
    cert, _ = shrinking_certificate(decrement(3), 0, 3)
    assert (cert.k, cert.U, cert.V) == (3, (0,), (1,))
    assert check_certificate(decrement(3), cert)


def test_galperin_not_02_shrinking():
    cert, complete = shrinking_certificate(galperin3(), 0, 2, k_max=8)
    assert cert is None and complete


@pytest.mark.parametrize("rule, a, b", [(galperin3(), 0, 1), (galperin3(), 0, 2), (galperin3(), 1, 2),
                                        (decrement(3), 0, 3), (decrement(3), 1, 3), (bidir3(), 0, 1)])
def test_tau_empty_iff_certificate(rule, a, b):
    for k in range(1, 5):
        fam = minimal_forcing_sets(rule, a, b, k)
        assert tau_of(fam).empty == (certificate_of(fam) is not None)


# --- properties --------------------------------------------------------------------------------

def test_sum_examples():
    assert sum_forcing({0}, {0}) == (0,)
    assert sum_forcing({0}, {1}) == (1,)
    assert is_forcing(min2(), sum_forcing({0}, {1}), 0, 1, 2)
    d = decrement(3)
    assert is_forcing(d, sum_forcing(sum_forcing({0}, {0}), {0}), 0, 3, 3)


@pytest.mark.parametrize("rule, a, b", [(galperin3(), 0, 2), (galperin3(), 0, 1), (bidir3(), 0, 1),
                                        (decrement(3), 0, 3), (min2(), 0, 1)])
def test_upward_closure_and_sums(rule, a, b):
    rng = np.random.default_rng(1)
    kr = rule.radius
    fams = {k: minimal_forcing_sets(rule, a, b, k) for k in (1, 2)}
    for k, fam in fams.items():
        window = range(-k * kr, k * kr + 1)
        for V in fam:
            for _ in range(5):
                extra = {int(i) for i in rng.choice(window, size=min(3, len(window)))}
                assert is_forcing(rule, set(V) | extra, a, b, k)
    for U in fams[1]:
        for V in fams[1]:
            assert is_forcing(rule, sum_forcing(U, V), a, b, 2)
        for V in fams[2]:
            assert is_forcing(rule, sum_forcing(U, V), a, b, 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([(0, 1), (0, 2), (1, 2)]), st.integers(1, 2))
def test_random_rules_match_brute_force(seed, pair, k):
    rule = random_monotone_rule(np.random.default_rng(seed), 3, 1)
    a, b = pair
    fam = minimal_forcing_sets(rule, a, b, k)
    assert {frozenset(v) for v in fam} == brute_minimal(rule, a, b, k)
