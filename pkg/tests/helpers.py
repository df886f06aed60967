import itertools

import numpy as np

from eroders.rates import rate_table
from eroders.rule import LocalRule, quiescent_states, reflect


def random_monotone_rule(rng: np.random.Generator, states: int = 3, radius: int = 1) -> LocalRule:
    """Random monotone rule whose every state is quiescent.

    Outputs are drawn inside [min w, max w] and then replaced by their
    running maximum over the cellwise-smaller neighborhoods, which keeps
    them inside that band and makes the table monotone.
    """
    width = 2 * radius + 1
    words = list(itertools.product(range(states), repeat=width))
    raw = {w: int(rng.integers(min(w), max(w) + 1)) for w in words}
    # words are in lexicographic order, so every cellwise-smaller word comes first
    table = {}
    for w in words:
        best = raw[w]
        for j in range(width):
            if w[j] > 0:
                below = w[:j] + (w[j] - 1,) + w[j + 1:]
                best = max(best, table[below])
        table[w] = best
    return LocalRule(states, radius, tuple(table[w] for w in words))


def brute_step_edges(fn, radius, a, b, T):
    """L^t and R^t of the step of type a,b by whole-window simulation."""
    span = radius * T + 3
    x = {i: (a if i < 0 else b) for i in range(-span, span)}
    Ls, Rs = [], []
    for t in range(T + 1):
        Ls.append(max(i for i, v in x.items() if v == a))
        Rs.append(min(i for i, v in x.items() if v == b))
        x = {i: fn(*(x.get(i + d, a if i + d < 0 else b) for d in range(-radius, radius + 1)))
             for i in x}
    return Ls, Rs


def values(table):
    out = {}
    for (a, b), pair in table.items():
        out[("L", a, b)] = pair.L.value
        out[("R", a, b)] = pair.R.value
    return out


def check_table_properties(rule, table):
    quiet = quiescent_states(rule)
    v = values(table)
    for (a, b), pair in table.items():
        if pair.L.exact and pair.R.exact:
            assert pair.L.value <= pair.R.value
            if not any(min(a, b) < c < max(a, b) for c in quiet):
                assert pair.L.value == pair.R.value
    for a in quiet:
        for b in quiet:
            for c in quiet:
                if a < b < c:
                    # monotonicity in the far state
                    for lhs, rhs in [(("L", a, b), ("L", a, c)), (("R", c, a), ("R", b, a)),
                                     (("R", a, c), ("R", b, c)), (("L", c, b), ("L", c, a))]:
                        if v[lhs] is not None and v[rhs] is not None:
                            assert v[lhs] >= v[rhs], (lhs, rhs)
    for a in quiet:
        for b in quiet:
            if a < b and v[("R", b, a)] is not None:
                cands = [v[("L", c, a)] for c in quiet if a < c <= b]
                if all(c is not None for c in cands):
                    assert v[("R", b, a)] in cands
    mirror = values(rate_table(reflect(rule)))
    for (t, a, b), x in v.items():
        y = mirror[("R" if t == "L" else "L", b, a)]
        if x is not None and y is not None:
            assert x == -y
