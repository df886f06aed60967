import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eroders.rule import (
    Configuration, LocalRule, RuleError, RuleParseError, TableCapExceeded, apply, apply_power,
    builtin, compose_power, decrement, format_rule, galperin3, invert, is_monotone, min2,
    parse_rule, quiescent_states, reflect, resolve_rule, restrict, wrapped4, bidir3,
)


def identity(n=2):
    return LocalRule(n, 0, tuple(range(n)))


def galperin_oracle(a, b, c):
    # transcribed independently from the case list of the ternary example
    if a == 0 and max(b, c) <= 1:
        return 0
    if b == 2 and c < 2:
        return 1
    if a + b >= c == 2:
        return 2
    return b


def naive_run(fn, radius, cells, background, steps):
    """Whole-line simulation on a dict, growing the support as needed."""
    x = dict(enumerate(cells))
    for _ in range(steps):
        keys = range(min(x) - radius, max(x) + radius + 1)
        x = {i: fn(*(x.get(i + d, background) for d in range(-radius, radius + 1))) for i in keys}
    return x


# --- parsing --------------------------------------------------------------------

def test_parse_builtin_galperin3_matches_case_list():
    rule = parse_rule("builtin galperin3")
    assert (rule.state_count, rule.radius) == (3, 1)
    for w in itertools.product(range(3), repeat=3):
        assert rule(w) == galperin_oracle(*w)


def test_parse_explicit_identity():
    assert parse_rule("states 2\nradius 0\ntable 0 1") == identity()


def test_parse_decrement_param():
    rule = parse_rule("ca-rule v1\nbuiltin decrement 3  # four states")
    assert rule.state_count == 4
    for a, b, c in itertools.product(range(4), repeat=3):
        assert rule(a, b, c) == (b - 1 if b > 0 and c == 0 else b)


def test_parse_comments_and_continuation():
    text = "# header comment\nca-rule v1\nstates 2\nradius 1\ntable 0 0 0 1\n  0 0 0 1 # rest\n"
    assert parse_rule(text) == min2()


def test_format_roundtrip():
    for name in ("galperin3", "min2", "bidir3", "wrapped4"):
        rule = builtin(name)
        assert parse_rule(format_rule(rule)) == rule


@pytest.mark.parametrize("text, line, fragment", [
    ("ca-rule v2\nstates 2\nradius 0\ntable 0 1", 1, "malformed header"),
    ("states 2\nradius 0\ntable 0 1 1", 3, "expected 2"),
    ("states 2\nradius 0\ntable 0 2", 3, "outside"),
    ("states 2\n\nbuiltin nosuch", 3, "unknown builtin"),
    ("states 2\nradius 0\ntable 0 x", 3, "not an integer"),
    ("states 3\nbuiltin min2", 2, "has 2 states"),
    ("states 2\nradius 0\nfoo", 3, "unexpected keyword"),
])
def test_parse_errors_report_line(text, line, fragment):
    with pytest.raises(RuleParseError) as info:
        parse_rule(text)
    assert info.value.line == line
    assert fragment in str(info.value)


def test_unknown_builtin_column():
    with pytest.raises(RuleParseError) as info:
        parse_rule("builtin   nosuch")
    assert info.value.column == 11


def test_resolve_rule_references(tmp_path):
    assert resolve_rule("builtin:decrement:3") == decrement(3)
    path = tmp_path / "id.rule"
    path.write_text("ca-rule v1\nstates 2\nradius 0\ntable 0 1\n")
    assert resolve_rule(str(path)) == identity()
    with pytest.raises(RuleError):
        resolve_rule("builtin:min2:4")


def test_table_validation():
    with pytest.raises(RuleError):
        LocalRule(2, 1, (0,) * 7)
    with pytest.raises(RuleError):
        LocalRule(2, 0, (0, 2))
    with pytest.raises(RuleError):
        LocalRule(1, 0, (0,))


# --- simulation -------------------------------------------------------------------

def test_galperin_island_one_step():
    n = 6
    x = Configuration.from_cells([0] + [2] * n + [0])
    assert apply(galperin3(), x).cells.tolist() == [0] + [2] * (n - 1) + [1, 0]


def test_galperin_island_vanishes_after_2n():
    n = 7
    x = Configuration(-3, [0] * 3 + [2] * n + [0] * 3, 0, 0)
    assert not apply_power(galperin3(), x, 2 * n).cells.any()


def test_identity_apply():
    x = Configuration(5, [0, 1, 1, 0], 0, 1)
    assert apply(identity(), x) == x


def test_decrement_single_cell():
    rule = decrement(3)
    x = Configuration(-2, [0, 0, 3, 0, 0], 0, 0)
    assert apply(rule, x).cells.tolist() == [0, 0, 2, 0, 0]
    assert not apply_power(rule, x, 3).cells.any()


def test_apply_power_zero_is_identity():
    x = Configuration(0, [0, 2, 1, 0], 0, 0)
    assert apply_power(galperin3(), x, 0) == x


def test_non_quiescent_boundary_rejected():
    shift = LocalRule(2, 1, tuple(1 - w[1] for w in itertools.product(range(2), repeat=3)))
    with pytest.raises(RuleError, match="not quiescent"):
        apply(shift, Configuration(0, [0, 1], 0, 0))


def test_apply_power_is_whole_line_restriction():
    rule = galperin3()
    cells = [1, 2, 2, 0, 1, 2, 2, 2]
    x = Configuration(0, cells, 0, 0)
    for n in range(0, 12):
        line = naive_run(galperin_oracle, 1, cells, 0, n)
        assert apply_power(rule, x, n).cells.tolist() == [line.get(i, 0) for i in range(len(cells))]


def test_compose_power_examples():
    g = galperin3()
    assert compose_power(g, 1) == g
    g2 = compose_power(g, 2)
    assert g2.radius == 2 and len(g2.table) == 3 ** 5
    rng = np.random.default_rng(7)
    for _ in range(200):
        cells = rng.integers(0, 3, size=int(rng.integers(1, 12)))
        x = Configuration(int(rng.integers(-5, 5)), cells, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        assert apply(g2, x) == apply_power(g, x, 2)


def test_compose_power_cap():
    with pytest.raises(TableCapExceeded):
        compose_power(galperin3(), 6, cap=3 ** 12)


# --- monotonicity and transforms ------------------------------------------------------

def test_builtins_monotone():
    for rule in (galperin3(), decrement(3), min2(), bidir3(), wrapped4(), identity(3)):
        assert is_monotone(rule)


def test_non_monotone_witness():
    m = 2
    rule = LocalRule(3, 1, tuple((w[1] + 1) % (m + 1) for w in itertools.product(range(3), repeat=3)))
    verdict = is_monotone(rule)
    assert not verdict
    lo, hi = verdict.lower, verdict.upper
    assert all(u <= v for u, v in zip(lo, hi)) and rule(lo) > rule(hi)


def test_monotonicity_matches_pairwise_definition():
    rng = np.random.default_rng(3)
    words = list(itertools.product(range(3), repeat=3))
    for _ in range(200):
        table = tuple(int(v) for v in rng.integers(0, 3, size=27))
        rule = LocalRule(3, 1, table)
        brute = all(rule(u) <= rule(v) for u in words for v in words
                    if all(p <= q for p, q in zip(u, v)))
        assert bool(is_monotone(rule)) == brute


def test_quiescent_states():
    assert quiescent_states(galperin3()) == (0, 1, 2)
    assert quiescent_states(identity(3)) == (0, 1, 2)
    assert quiescent_states(decrement(3)) == (0, 1, 2, 3)


def test_reflect_and_invert_involutions():
    for rule in (galperin3(), bidir3(), decrement(2)):
        assert reflect(reflect(rule)) == rule
        assert invert(invert(rule)) == rule


def test_reflect_spot_values():
    r = reflect(galperin3())
    for w in [(0, 1, 2), (2, 2, 0), (1, 0, 2)]:
        assert r(w) == galperin_oracle(*w[::-1])


def test_invert_min2_is_max():
    mx = invert(min2())
    for a, b, c in itertools.product(range(2), repeat=3):
        assert mx(a, b, c) == max(b, c)


def test_bidir3_symmetry():
    f = bidir3()
    assert invert(reflect(f)) == f


def test_restrict_examples():
    sub = restrict(wrapped4(), 2, 3)
    assert sub.state_count == 2 and is_monotone(sub)
    assert restrict(galperin3(), 0, 2) == galperin3()
    assert restrict(galperin3(), 0, 1).state_count == 2
    grow = LocalRule(3, 0, (1, 2, 2))
    with pytest.raises(RuleError, match="not closed"):
        restrict(grow, 0, 1)


# --- properties -------------------------------------------------------------------------

def monotone_rules(states=3, radius=1):
    """Random monotone rules: the pointwise max over random up-closed sets of a random threshold."""
    width = 2 * radius + 1

    @st.composite
    def build(draw):
        seeds = draw(st.lists(st.tuples(st.lists(st.integers(0, states - 1), min_size=width, max_size=width),
                                        st.integers(0, states - 1)), max_size=8))
        words = list(itertools.product(range(states), repeat=width))
        table = []
        for w in words:
            out = 0
            for lower, value in seeds:
                if all(a >= b for a, b in zip(w, lower)):
                    out = max(out, value)
            table.append(out)
        # force all-constant words to be quiescent-compatible where possible
        return LocalRule(states, radius, tuple(table))
    return build()


configs = st.builds(
    lambda lo, cells, fill: Configuration(lo, cells, fill, fill),
    st.integers(-20, 20), st.lists(st.integers(0, 2), min_size=1, max_size=15), st.just(0))


@settings(max_examples=60, deadline=None)
@given(configs, st.integers(-30, 30))
def test_shift_equivariance(x, offset):
    rule = galperin3()
    assert apply(rule, x.shifted(offset)) == apply(rule, x).shifted(offset)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=20))
def test_monotone_order_preserved(pairs):
    lower = [min(p) for p in pairs]
    upper = [max(p) for p in pairs]
    for rule in (galperin3(), bidir3()):
        fx = apply(rule, Configuration(0, lower, 0, 0)).cells
        fy = apply(rule, Configuration(0, upper, 0, 0)).cells
        assert (fx <= fy).all()


def test_monotone_order_preserved_random_pairs():
    rng = np.random.default_rng(11)
    rule = wrapped4()
    for _ in range(1000):
        x = rng.integers(0, 4, size=12)
        y = np.maximum(x, rng.integers(0, 4, size=12))
        fx = apply(rule, Configuration(0, x, 0, 0)).cells
        fy = apply(rule, Configuration(0, y, 0, 0)).cells
        assert (fx <= fy).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(1, 10))
def test_constant_quiescent_fixed(a, length):
    x = Configuration.constant(a, 0, length - 1)
    assert apply(galperin3(), x) == x


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=10), st.integers(1, 3))
def test_compose_power_agrees_with_apply_power(cells, p):
    rule = galperin3()
    x = Configuration(0, cells, 0, 2)
    assert apply(compose_power(rule, p), x) == apply_power(rule, x, p)


@settings(max_examples=40, deadline=None)
@given(monotone_rules())
def test_transforms_preserve_monotonicity(rule):
    assert is_monotone(rule)
    assert is_monotone(reflect(rule)) and is_monotone(invert(rule))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=12), st.integers(1, 4))
def test_reflect_simulates_mirror(cells, steps):
    rule = galperin3()
    x = Configuration(0, cells, 0, 0)
    mirror = Configuration(-(len(cells) - 1), cells[::-1], 0, 0)
    ours = apply_power(rule, x, steps).cells
    theirs = apply_power(reflect(rule), mirror, steps).cells
    assert ours.tolist() == theirs[::-1].tolist()
