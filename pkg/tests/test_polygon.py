import dataclasses
import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eroders.geometry import Region, is_simple_region, merged_border
from eroders.noise import NoiseModel, NoisyTrajectory, SimConfig, simulate
from eroders.polygon import (
    Encoding, PolygonError, PolygonSystem, SpaceTimePolygon, TypedVertex, build_level_data, construct_system,
    decode_system, dump_system, encode_system, load_system, overlay_points, sample_systems, system_skeleton,
    verify_system,
)
from eroders.rule import Configuration, LocalRule, decrement, galperin3, min2

MIN3 = LocalRule(3, 1, tuple(min(b, c) for a, b, c in itertools.product(range(3), repeat=3))).with_name("min3")


def blank(T, W, ones=(), errors=()):
    grid = np.zeros((T + 1, W), dtype=np.uint8)
    err = np.zeros((T, W), dtype=bool)
    for t, j, s in ones:
        grid[t, j] = s
    for t, j in errors:
        err[t, j] = True
    return NoisyTrajectory(grid, err, seed=0, trial=0, lo=0, boundary=0)


def sampled(rule, model, T=40, W=160, seed=11, trials=600, count=30, chain=None):
    ld = build_level_data(rule, chain)
    trs = simulate(rule, model, SimConfig(W, T, seed=seed, trials=trials, boundary=0),
                   Configuration.from_cells([0] * W))
    return ld, sample_systems(rule, ld, trs, count=count)


@pytest.fixture(scope="module")
def min2_samples():
    return sampled(min2(), NoiseModel.independent_max(1, 0.1))


# --- level data ------------------------------------------------------------------------------------

def test_min2_level_data():
    ld = build_level_data(min2())
    assert ld.chain == (0, 1) and ld.power == 1 and ld.radius == 1
    assert (ld.U[0], ld.V[0]) == ((0,), (1,))
    d = ld.directions(1)
    assert d["L"] == {(-1, -1), (0, -1)}
    assert d["R"] == {(-1, 1)}
    assert d["C"] == {(1, 0), (2, 0)}
    assert d["B"] == {(-1, 0), (-2, 0)}
    assert ld.base_delta == (Fraction(1, 2),)
    assert ld.delta == (Fraction(1, 10),)
    assert ld.beta == (Fraction(1, 40), 1)


def test_two_level_beta_recursion():
    ld = build_level_data(MIN3, (0, 1, 2))
    assert ld.levels == 2
    assert ld.beta[2] == 1
    assert ld.beta[1] == ld.delta[1] / (2 * 1 * 2 + 2)
    assert ld.beta[0] == ld.delta[0] * ld.beta[1] / (2 * 1 * 2 + 2)
    assert all(0 < d < 1 for d in ld.delta)
    assert ld.level_of(0) == 0 and ld.level_of(1) == 1 and ld.level_of(2) == 2


def test_power_normalization():
    ld = build_level_data(decrement(2))
    assert ld.power == 2 and ld.radius == 2
    assert ld.u(1) < ld.v(1)
    assert ld.certificates[0].k == 2


def test_level_data_errors():
    with pytest.raises(PolygonError, match="certificate"):
        build_level_data(galperin3(), (0, 2))
    with pytest.raises(PolygonError, match="stable eroder"):
        build_level_data(galperin3())
    with pytest.raises(PolygonError, match="increase"):
        build_level_data(min2(), (1, 0))


# --- construction ----------------------------------------------------------------------------------

def test_single_error_gives_one_typed_root():
    T, W = 6, 20
    tr = blank(T, W, ones=[(T, 10, 1)], errors=[(T - 1, 10)])
    ld = build_level_data(min2())
    sy = construct_system(min2(), ld, tr)
    assert len(sy.polygons) == 1
    (root,) = sy.polygons[0].border
    assert root.point == (0, T) and root.kind == 2
    assert verify_system(sy, tr, ld).ok
    enc = encode_system(sy)
    assert enc.walk == ((0, T),)


def test_error_one_step_deeper_gives_a_triangle():
    # the root 1 is forced by the two 1s below it, one of which is an error
    T, W = 6, 20
    tr = blank(T, W, ones=[(T, 10, 1), (T - 1, 10, 1), (T - 1, 11, 1)], errors=[(T - 2, 10), (T - 2, 11)])
    ld = build_level_data(min2())
    sy = construct_system(min2(), ld, tr)
    (poly,) = sy.polygons
    assert set(poly.X) == {(0, T), (0, T - 1), (1, T - 1)}
    kinds = {v.point: v.kind for v in poly.border}
    assert kinds[(0, T)] == 3 and kinds[(0, T - 1)] == 2
    assert verify_system(sy, tr, ld).ok


def test_zero_target_is_rejected():
    tr = blank(4, 12)
    with pytest.raises(PolygonError, match="state 0"):
        construct_system(min2(), build_level_data(min2()), tr)


def test_untypable_vertex_is_reported():
    # a 1 with no error and no forcing support cannot be explained
    T, W = 4, 12
    tr = blank(T, W, ones=[(T, 6, 1)])
    with pytest.raises(PolygonError, match="no forcing witness"):
        construct_system(min2(), build_level_data(min2()), tr)


def test_cone_must_fit_the_window():
    tr = blank(10, 12, ones=[(10, 6, 1)], errors=[(9, 6)])
    with pytest.raises(PolygonError, match="cone"):
        construct_system(min2(), build_level_data(min2()), tr)


def test_min2_samples_verify(min2_samples):
    ld, systems = min2_samples
    assert len(systems) == 30
    for tr, sy in systems:
        report = verify_system(sy, tr, ld)
        assert report.ok, report.lines()
        verts = sy.vertices()
        assert sum(v.error for v in verts.values()) >= ld.beta_root * len(verts)
        for v in verts.values():
            if v.error:
                assert tr.is_error(sy.target[0] + v.i, v.t - 1)


def test_two_level_system_has_level_two_polygon():
    model = NoiseModel.custom([0.0, 0.5, 0.5], 0.3)
    ld, systems = sampled(MIN3, model, seed=3, trials=200, count=40, chain=(0, 1, 2))
    two = [(tr, sy) for tr, sy in systems if sy.at_level(2)]
    assert two
    for tr, sy in two:
        assert sy.supports.get(2)
        assert verify_system(sy, tr, ld).ok
        assert decode_system(encode_system(sy)) == system_skeleton(sy)
    assert any(v.support for _, sy in two for v in sy.vertices().values())


def test_power_two_systems_verify():
    ld, systems = sampled(decrement(2), NoiseModel.independent_max(2, 0.2), T=30, seed=5, trials=200, count=10)
    assert systems
    for tr, sy in systems:
        assert sy.power == 2
        assert verify_system(sy, tr, ld).ok


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_constructed_systems_always_verify(seed):
    ld = build_level_data(min2())
    trs = simulate(min2(), NoiseModel.independent_max(1, 0.2), SimConfig(64, 20, seed=seed, trials=40, boundary=0),
                   Configuration.from_cells([0] * 64))
    for tr, sy in sample_systems(min2(), ld, trs, count=3):
        assert verify_system(sy, tr, ld).ok
        enc = encode_system(sy)
        assert len(enc.walk) <= 2 * ld.levels * ld.radius * len(sy.vertices())


# --- verification of crafted systems -----------------------------------------------------------------

def _system(border, T, level=1):
    poly = SpaceTimePolygon(level, 0, tuple(border))
    return PolygonSystem((10, T), 1, 1, T, level, 1, (poly,), {})


def test_condition_d_violation_names_the_pair():
    T = 6
    tr = blank(T, 20, ones=[(T, 10, 1), (T - 1, 9, 1), (T - 1, 11, 1)], errors=[(T - 2, 9), (T - 2, 11),
                                                                                 (T - 1, 10)])
    # two hairs hanging from the root: the bottom vertices are 2 apart with nothing between them
    border = [TypedVertex(0, T, error=True), TypedVertex(-1, T - 1, error=True), TypedVertex(0, T, error=True),
              TypedVertex(1, T - 1, error=True)]
    report = verify_system(_system(border, T), tr, build_level_data(min2()))
    check = report.get("same-row-segments")
    assert not check.ok and "(-1, 5) (1, 5)" in check.detail


def test_forged_error_is_caught():
    T = 6
    tr = blank(T, 20, ones=[(T, 10, 1)], errors=[(T - 1, 10)])
    ld = build_level_data(min2())
    sy = construct_system(min2(), ld, tr)
    cleared = dataclasses.replace(tr, error_set=np.zeros_like(tr.error_set))
    report = verify_system(sy, cleared, ld)
    assert not report.get("type2-errors").ok
    assert not report.ok


def test_wrong_band_is_caught(min2_samples):
    ld, systems = min2_samples
    tr, sy = systems[0]
    grid = tr.grid.copy()
    i, t = sy.polygons[0].X[0]
    grid[t, sy.target[0] - tr.lo + i] = 0
    report = verify_system(sy, dataclasses.replace(tr, grid=grid), ld)
    assert "outside band" in report.get("vertex-types").detail


# --- encoding ----------------------------------------------------------------------------------------

def test_single_polygon_walk_is_its_border(min2_samples):
    _, systems = min2_samples
    for _, sy in systems:
        (poly,) = sy.polygons
        enc = encode_system(sy)
        k = poly.X.index(sy.root)
        assert enc.walk == poly.X[k:] + poly.X[:k]
        assert set(enc.levels) == {1}


def test_round_trip_and_length_bound(min2_samples):
    ld, systems = min2_samples
    for _, sy in systems:
        enc = encode_system(sy)
        assert decode_system(enc) == system_skeleton(sy)
        assert len(enc.walk) <= 2 * ld.levels * ld.radius * len(sy.vertices())


@pytest.mark.parametrize("walk, levels, message", [
    (((0, 5), (4, 5)), (1, 1), "too long"),
    (((0, 5), (0, 4)), (1, 3), "out of range"),
    (((0, 5), (0, 4), (1, 4), (0, 5)), (1, 2, 2, 1), "return to its base"),
    (((0, 5), (0, 4), (1, 4)), (1, 2, 2), "ends inside"),
    ((), (), "non-empty"),
])
def test_decode_rejects_malformed_walks(walk, levels, message):
    with pytest.raises(PolygonError, match=message):
        decode_system(Encoding(walk, levels, 1, 2))


# --- dump format -------------------------------------------------------------------------------------

def test_dump_round_trip(min2_samples):
    ld, systems = min2_samples
    for tr, sy in systems[:10]:
        text = dump_system(sy)
        back = load_system(text)
        assert dump_system(back) == text
        assert verify_system(back, tr, ld).ok


def test_dump_layout():
    T = 6
    tr = blank(T, 20, ones=[(T, 10, 1)], errors=[(T - 1, 10)])
    sy = construct_system(min2(), build_level_data(min2()), tr)
    assert dump_system(sy) == ("ca-polygons v1\ntarget 10 6\npower 1\nradius 1\nsteps 6\nlevels 1 1\n"
                               "support 1 0 6\npolygon 1 0\nv 0 6 2 error\nprim point 0 6\nend\n")
    assert overlay_points(sy) == [(10, 6)]


@pytest.mark.parametrize("text, message", [
    ("ca-polygons v2\n", "header"),
    ("ca-polygons v1\ntarget 0 1\npower 1\nradius 1\nsteps 1\nlevels 1 1\nv 0 1 2 error\nend\n", "line 7"),
    ("ca-polygons v1\ntarget 0 1\npower 1\nradius 1\nsteps 1\nlevels 1 1\npolygon 1 0\nv 0 1 3 error\nend\n",
     "line 8"),
    ("ca-polygons v1\ntarget 0 1\npower 1\n", "radius"),
    ("ca-polygons v1\ntarget 0 1\npower 1\nradius 1\nsteps 1\nlevels 1 1\npolygon 1 0\n", "end"),
])
def test_load_errors(text, message):
    with pytest.raises(PolygonError, match=message):
        load_system(text)


# --- geometry ----------------------------------------------------------------------------------------

def test_region_predicates():
    tri = Region([(0, 0), (2, 0), (1, 1)])
    assert tri.contains((1, 0)) and tri.contains((1, Fraction(1, 2))) and not tri.contains((0, 1))
    assert tri.contains_segment((0, 0), (1, 1)) and not tri.contains_segment((0, 0), (2, 1))
    hair = Region([(0, 0), (2, 0)])
    assert hair.contains((1, 0)) and not hair.contains((1, Fraction(1, 3)))


def test_merge_of_overlapping_triangles():
    a, b = [(0, 0), (2, 0), (1, 1)], [(1, 0), (3, 0), (2, 1)]
    assert merged_border(a, b) == [(0, 0), (1, 0), (2, 0), (3, 0), (2, 1), (1, 1)]
    assert merged_border(a, [(2, 0), (4, 0)]) == [(0, 0), (2, 0), (4, 0), (2, 0), (1, 1)]
    outer = [(-5, -5), (5, -5), (0, 5)]
    assert merged_border(outer, a) == outer


def test_simple_region_check():
    assert is_simple_region([(0, 0), (2, 0), (1, 1)])
    assert not is_simple_region([(0, 0), (1, 1), (2, 0)])        # clockwise
    # a square ring walked around twice in the same direction has winding 2
    assert not is_simple_region([(0, 0), (2, 0), (2, 2), (0, 2)] * 2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=3, max_size=3, unique=True),
       st.tuples(st.integers(-5, 5), st.integers(-5, 5)))
def test_triangle_membership_matches_barycentric(pts, p):
    a, b, c = pts
    area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if area == 0:
        return
    if area < 0:
        b, c = c, b
    w = [(v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0]) for u, v in ((a, b), (b, c), (c, a))]
    assert Region([a, b, c]).contains(p) == all(x >= 0 for x in w)
