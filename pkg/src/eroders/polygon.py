"""Leveled systems of space-time polygons on recorded noisy trajectories.

Given a stable eroder with a chain 0 = a_1 < ... < a_k = m of shrinking
pairs, a trajectory and a nonzero target cell, the construction grows, for
each level n = 1..k-1, a family of polygons whose border vertices carry
states in the band (a_n, a_{n+1}] and each explain their own state: by a
higher band nearby one step earlier (a support point), by an error one step
earlier, or by a forcing triangle lying inside the polygon.  The support
points become the seeds of the next level.  The result is a combinatorial
witness that a positive fraction of its vertices sit on errors.

Coordinates are relative to the target: the target is (0, T) and the cone
is W = {(i, t): 0 <= t <= T, |i| <= R (T - t)}, where R is the radius of
the rule power used (see :class:`LevelData`).  All geometry is exact.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .forcing import DEFAULT_BUDGET, DEFAULT_K_MAX, ShrinkingCertificate, is_forcing, shrinking_certificate
from .geometry import Region, is_simple_region, merged_border
from .noise import NoisyTrajectory, _image
from .rule import LocalRule, RuleError, quiescent_states


class PolygonError(RuleError):
    pass


# --- level data ------------------------------------------------------------------------------------

DIRECTIONS = ("L", "R", "C", "B")


@dataclass(frozen=True)
class LevelData:
    """Per-level forcing sets, state bands, edge directions and constants.

    Level n (1-based) covers the states a_n < s <= a_{n+1}.  ``power`` is the
    least common multiple of the certificate levels; the construction works
    with the rule's ``power``-th iterate, whose radius is ``radius``, so every
    forcing set is a level-1 set of that iterate.
    """

    rule: LocalRule
    chain: tuple[int, ...]
    power: int
    radius: int
    certificates: tuple[ShrinkingCertificate, ...]
    U: tuple[tuple[int, ...], ...]
    V: tuple[tuple[int, ...], ...]
    base_delta: tuple[Fraction, ...]
    delta: tuple[Fraction, ...]
    beta: tuple[Fraction, ...]      # beta[n - 1] for n = 1..K+1, the last one is 1

    @property
    def levels(self) -> int:
        return len(self.chain) - 1

    def u(self, n: int) -> int:
        return max(self.U[n - 1])

    def v(self, n: int) -> int:
        return min(self.V[n - 1])

    def band(self, n: int) -> tuple[int, int]:
        """Half-open band (low, high] of states at level n."""
        return self.chain[n - 1], self.chain[n]

    def level_of(self, state: int) -> int:
        """The level whose band holds the state, 0 for state 0."""
        for n in range(1, self.levels + 1):
            lo, hi = self.band(n)
            if lo < state <= hi:
                return n
        return 0

    def directions(self, n: int) -> dict[str, frozenset]:
        r, u, v = self.radius, self.u(n), self.v(n)
        east = frozenset((i, 0) for i in range(1, 2 * r + 1))
        return {
            "L": frozenset((i, -1) for i in range(-r, u + 1)),
            "R": frozenset((i, 1) for i in range(-r, -v + 1)),
            "C": east,
            "B": frozenset((-i, 0) for i, _ in east),
        }

    def direction_of(self, n: int, step) -> str | None:
        for name, vecs in self.directions(n).items():
            if tuple(step) in vecs:
                return name
        return None

    @property
    def beta_root(self) -> Fraction:
        return self.beta[0]

    def beta_at(self, n: int) -> Fraction:
        return self.beta[n - 1]

    def lines(self) -> list[str]:
        out = [f"chain\t{'<'.join(map(str, self.chain))}", f"power\t{self.power}", f"radius\t{self.radius}"]
        for n in range(1, self.levels + 1):
            out.append(f"level\t{n}\tU={_fmt_set(self.U[n - 1])}\tV={_fmt_set(self.V[n - 1])}"
                       f"\tdelta={self.delta[n - 1]}\tbeta={self.beta[n - 1]}")
        return out


def _fmt_set(v) -> str:
    return "{" + ",".join(map(str, v)) + "}"


def _shrink_to_minimal(rule, cells, a, b, k) -> tuple[int, ...]:
    cells = sorted(cells)
    for c in list(cells):
        trial = [x for x in cells if x != c]
        if trial and is_forcing(rule, trial, a, b, k):
            cells = trial
    return tuple(cells)


def _power_sets(rule, cert: ShrinkingCertificate, p: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Forcing sets at level p from a certificate at a level dividing p.

    The q-fold sum of a level-k forcing set forces at level qk; shrinking it
    to a minimal subset keeps max U <= q max U_k < q min V_k <= min V.
    """
    q = p // cert.k
    U, V = {0}, {0}
    for _ in range(q):
        U = {x + y for x in U for y in cert.U}
        V = {x + y for x in V for y in cert.V}
    return (_shrink_to_minimal(rule, U, cert.a, cert.b, p),
            _shrink_to_minimal(rule, V, cert.a, cert.b, p))


def _extremal_delta(dirs: dict, u: int, v: int) -> Fraction:
    """Largest d with d <= M <= 1/d on east steps and -1/d <= M <= -d on the rest.

    M(i, t) = i + t (u + v) / 2 is the functional whose sign separates
    eastward border steps from the others.
    """
    half = Fraction(u + v, 2)
    best = None
    for name, vecs in dirs.items():
        for i, t in vecs:
            m = i + t * half
            if (m <= 0) if name == "C" else (m >= 0):
                raise PolygonError(f"direction {(i, t)} has the wrong sign under the level functional")
            a = abs(m)
            cand = min(a, 1 / a)
            best = cand if best is None else min(best, cand)
    return best


def build_level_data(rule: LocalRule, chain=None, k_max: int = DEFAULT_K_MAX,
                     budget: int = DEFAULT_BUDGET) -> LevelData:
    """Certificates, power normalization, direction sets and constants for a chain.

    Without a chain, the stable-eroder decider supplies one.  Every edge
    needs a forcing certificate at some level up to ``k_max``.  The power is
    never tabulated; trajectories are stepped lazily instead.
    """
    if chain is None:
        from .deciders import is_stable_eroder
        verdict = is_stable_eroder(rule)
        if verdict.chain is None:
            raise PolygonError(f"rule is not a certified stable eroder (answer {verdict.answer})")
        chain = verdict.chain
    chain = tuple(int(x) for x in chain)
    quiet = quiescent_states(rule)
    if len(chain) < 2 or chain[0] != 0 or chain[-1] != rule.m or any(a >= b for a, b in zip(chain, chain[1:])):
        raise PolygonError(f"chain must increase from 0 to {rule.m}")
    if any(a not in quiet for a in chain):
        raise PolygonError("chain states must be quiescent")
    certs = []
    for a, b in zip(chain, chain[1:]):
        cert, _ = shrinking_certificate(rule, a, b, k_max, budget)
        if cert is None:
            raise PolygonError(f"missing shrinking certificate for ({a},{b}) up to level {k_max}")
        certs.append(cert)
    p = math.lcm(*(c.k for c in certs))
    Us, Vs = zip(*(_power_sets(rule, c, p) for c in certs))
    radius = p * rule.radius
    K = len(certs)
    base, deltas = [], []
    for n in range(K):
        u, v = max(Us[n]), min(Vs[n])
        if not u < v:
            raise PolygonError("power normalization broke max U < min V")
        probe = LevelData(rule, chain, p, radius, tuple(certs), Us, Vs, (), (), ())
        d = _extremal_delta(probe.directions(n + 1), u, v)
        base.append(d)
        deltas.append(1 / (2 + 2 / (d * d)))
    beta = [Fraction(1)]
    for n in range(K, 0, -1):
        beta.append(deltas[n - 1] * beta[-1] / (2 * radius * K + 2))
    return LevelData(rule, chain, p, radius, tuple(certs), tuple(Us), tuple(Vs), tuple(base), tuple(deltas),
                     tuple(reversed(beta)))


# --- trajectory view -------------------------------------------------------------------------------

class TrajectoryView:
    """The trajectory sampled every ``power`` steps, in target-relative coordinates.

    ``error(i, t)`` tells whether row t+1 differs at i from the image of row
    t under the rule power, so for power 1 it is the recorded error set.
    """

    def __init__(self, rule: LocalRule, ld: LevelData, traj: NoisyTrajectory, target=None):
        if rule != ld.rule:
            raise PolygonError("level data belongs to a different rule")
        p = ld.power
        coord, time = target if target is not None else (traj.lo + traj.width // 2, traj.T)
        if not 0 <= time <= traj.T:
            raise PolygonError(f"target time {time} outside 0..{traj.T}")
        self.target = (int(coord), int(time))
        self.T = time // p
        self.offset = time - p * self.T
        self.col = coord - traj.lo
        self.radius = ld.radius
        reach = self.radius * self.T
        if not (0 <= self.col - reach and self.col + reach < traj.width):
            raise PolygonError(f"cone of radius {reach} around column {self.col} leaves the window")
        rows = traj.grid[self.offset::p][: self.T + 1]
        self.rows = rows
        if p == 1:
            self.errors = traj.error_set[self.offset: self.offset + self.T]
        else:
            img = rows[:-1]
            for _ in range(p):
                img = _image(rule, img, traj.boundary)
            self.errors = rows[1:] != img
        self.ld = ld

    def in_cone(self, i: int, t: int) -> bool:
        return 0 <= t <= self.T and abs(i) <= self.radius * (self.T - t)

    def state(self, i: int, t: int) -> int:
        return int(self.rows[t, self.col + i])

    def level(self, i: int, t: int) -> int:
        return self.ld.level_of(self.state(i, t))

    def error(self, i: int, t: int) -> bool:
        """(i, t) is in the error set: row t+1 differs from the image of row t at i."""
        return 0 <= t < self.T and bool(self.errors[t, self.col + i])

    def absolute(self, i: int, t: int) -> tuple[int, int]:
        """Trajectory coordinate and time of a relative point."""
        return self.target[0] + i, self.offset + self.ld.power * t


# --- polygons ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class TypedVertex:
    """A border vertex with the reasons it carries its state.

    ``support`` is (i, t, level) of the chosen support point, ``error``
    marks an error one step earlier at the same column, and ``parents`` are
    the two base columns at t-1 of a forcing triangle inside the polygon.
    """

    i: int
    t: int
    support: tuple[int, int, int] | None = None
    error: bool = False
    parents: tuple[int, int] | None = None

    @property
    def point(self) -> tuple[int, int]:
        return self.i, self.t

    @property
    def kind(self) -> int:
        return 1 if self.support else 2 if self.error else 3 if self.parents else 0


@dataclass(frozen=True)
class SpaceTimePolygon:
    level: int
    ident: int
    border: tuple[TypedVertex, ...]
    primitives: tuple[tuple[tuple[int, int], ...], ...] = ()

    @property
    def X(self) -> tuple[tuple[int, int], ...]:
        return tuple(v.point for v in self.border)

    @cached_property
    def region(self) -> Region:
        return Region(self.X)


@dataclass(frozen=True)
class PolygonSystem:
    target: tuple[int, int]          # trajectory coordinate and time of the root
    power: int
    radius: int
    T: int                           # root time in the sampled view
    root_level: int
    levels: int
    polygons: tuple[SpaceTimePolygon, ...]
    supports: dict = field(default_factory=dict)   # level -> sorted tuple of points (C_n)
    steps: int = 0

    @property
    def root(self) -> tuple[int, int]:
        return 0, self.T

    def at_level(self, n: int) -> list[SpaceTimePolygon]:
        return [p for p in self.polygons if p.level == n]

    def vertices(self) -> dict:
        """Distinct border vertices with their typing (the set of all border vertices)."""
        out = {}
        for poly in self.polygons:
            for v in poly.border:
                out.setdefault(v.point, v)
        return out

    def stats(self) -> dict:
        verts = self.vertices()
        return {
            "polygons": len(self.polygons),
            "vertices": len(verts),
            "type1": sum(1 for v in verts.values() if v.support),
            "type2": sum(1 for v in verts.values() if v.error),
            "type3": sum(1 for v in verts.values() if v.parents),
        }


# --- construction ------------------------------------------------------------------------------------

class _Poly:
    __slots__ = ("walk", "prims", "region", "points", "triangles", "spans")

    def __init__(self, walk, prims):
        self.walk = tuple(walk)
        self.prims = list(prims)
        self.region = Region(self.walk)
        self.points = set(self.walk)
        # a polygon never changes, it is only replaced, so answers can be kept
        self.triangles: dict = {}
        self.spans: dict = {}

    def span(self, v, w) -> bool:
        if (v, w) not in self.spans:
            self.spans[(v, w)] = self.region.contains_segment(v, w)
        return self.spans[(v, w)]


class _Builder:
    def __init__(self, view: TrajectoryView, ld: LevelData, max_steps: int):
        self.view = view
        self.ld = ld
        self.max_steps = max_steps
        self.steps = 0
        self._support: dict = {}

    # per-vertex facts that do not depend on the polygon

    def support(self, w, n):
        key = (w, n)
        if key not in self._support:
            self._support[key] = self._find_support(w, n)
        return self._support[key]

    def _find_support(self, w, n):
        i, t = w
        if t == 0:
            return None
        R, view = self.ld.radius, self.view
        for hi in range(self.ld.levels, n, -1):
            for j in sorted(range(-hi * R, hi * R + 1), key=lambda j: (abs(j), j)):
                if view.in_cone(i + j, t - 1) and view.level(i + j, t - 1) == hi:
                    return i + j, t - 1, hi
        return None

    def triangle(self, poly: _Poly, w, n):
        if w not in poly.triangles:
            poly.triangles[w] = self._find_triangle(poly, w, n)
        return poly.triangles[w]

    def _find_triangle(self, poly: _Poly, w, n):
        i, t = w
        if t == 0:
            return None
        for j in sorted(self.ld.U[n - 1], reverse=True):
            for jj in sorted(self.ld.V[n - 1]):
                a, b = (i + j, t - 1), (i + jj, t - 1)
                if poly.span(w, a) and poly.span(a, b) and poly.span(b, w):
                    return i + j, i + jj
        return None

    def typed(self, w, n, polys) -> bool:
        if self.support(w, n) or self.view.error(w[0], w[1] - 1):
            return True
        return any(w in q.points and self.triangle(q, w, n) for q in polys)

    # construction loop

    def tick(self):
        self.steps += 1
        if self.steps > self.max_steps:
            raise PolygonError(f"construction did not settle within {self.max_steps} steps")

    def check_edges(self, walk, n):
        if len(walk) < 2:
            return
        for k, a in enumerate(walk):
            b = walk[(k + 1) % len(walk)]
            if self.ld.direction_of(n, (b[0] - a[0], b[1] - a[1])) is None:
                raise AssertionError(f"merged border step {a} -> {b} is not an allowed direction")

    def merge(self, a: _Poly, b: _Poly, n) -> _Poly:
        walk = merged_border(a.walk, b.walk)
        self.check_edges(walk, n)
        out = _Poly(walk, a.prims + b.prims)
        # the merged polygon covers both parts, so positive answers carry over
        for part in (a, b):
            out.spans.update((k, True) for k, ok in part.spans.items() if ok)
            out.triangles.update((w, tri) for w, tri in part.triangles.items() if tri and w in out.points)
        if not (out.region.contains_region(a.region) and out.region.contains_region(b.region)):
            raise AssertionError("merged polygon does not cover its parts")
        return out

    def build(self, n: int, seeds) -> list[_Poly]:
        polys = [_Poly([c], [(c,)]) for c in seeds]
        resolved = set()
        R = self.ld.radius
        while True:
            self.tick()
            pair = next(((x, y) for x in range(len(polys)) for y in range(x + 1, len(polys))
                         if polys[x].region.intersects(polys[y].region)), None)
            if pair:
                x, y = pair
                merged = self.merge(polys[x], polys[y], n)
                polys = [p for k, p in enumerate(polys) if k not in pair]
                polys.insert(x, merged)
                continue
            bad = self._same_row_violation(polys, R)
            if bad:
                if bad in resolved:
                    raise AssertionError(f"same-row violation {bad} recurred")
                resolved.add(bad)
                polys.append(_Poly(bad, [bad]))
                continue
            w = next((w for p in polys for w in p.walk if not self.typed(w, n, polys)), None)
            if w is None:
                return polys
            if ("untyped", w) in resolved:
                raise AssertionError(f"untyped vertex {w} recurred")
            resolved.add(("untyped", w))
            polys.append(self._forcing_triangle(w, n))

    def _same_row_violation(self, polys, R):
        for p in polys:
            rows: dict = {}
            for w in p.points:
                rows.setdefault(w[1], []).append(w)
            for row in rows.values():
                row.sort()
                for x, v in enumerate(row):
                    for w in row[x + 1:]:
                        if w[0] - v[0] > 2 * R:
                            break
                        holders = [q for q in polys if v in q.points and w in q.points]
                        if not any(q.span(v, w) for q in holders):
                            return v, w
        return None

    def _forcing_triangle(self, w, n) -> _Poly:
        i, t = w
        view = self.view
        if t == 0:
            raise PolygonError(f"untypable vertex {w}: nothing precedes time 0")
        left = [j for j in self.ld.U[n - 1] if view.level(i + j, t - 1) == n]
        right = [j for j in self.ld.V[n - 1] if view.level(i + j, t - 1) == n]
        if not left or not right:
            raise PolygonError(f"untypable vertex {w} at level {n}: no forcing witness")
        a, b = (i + max(left), t - 1), (i + min(right), t - 1)
        return _Poly((w, a, b), [(w, a, b)])


def construct_system(rule: LocalRule, ld: LevelData, trajectory: NoisyTrajectory, target=None,
                     max_steps: int = 100_000) -> PolygonSystem:
    """Grow the leveled polygon system rooted at ``target`` (default: centre column, last row)."""
    view = TrajectoryView(rule, ld, trajectory, target)
    n0 = view.level(0, view.T)
    if n0 == 0:
        raise PolygonError(f"target {view.target} already holds state 0")
    builder = _Builder(view, ld, max_steps)
    seeds: dict = {n: set() for n in range(1, ld.levels + 1)}
    seeds[n0].add((0, view.T))
    polygons = []
    for n in range(n0, ld.levels + 1):
        if not seeds[n]:
            continue
        polys = builder.build(n, sorted(seeds[n], key=lambda p: (-p[1], p[0])))
        for p in polys:
            border = []
            for w in p.walk:
                sup = builder.support(w, n)
                if sup:
                    seeds[sup[2]].add(sup[:2])
                border.append(TypedVertex(w[0], w[1], sup, view.error(w[0], w[1] - 1), builder.triangle(p, w, n)))
            polygons.append(SpaceTimePolygon(n, len(polygons), tuple(border), tuple(p.prims)))
    supports = {n: tuple(sorted(s, key=lambda p: (p[1], p[0]))) for n, s in seeds.items() if s}
    return PolygonSystem(view.target, ld.power, ld.radius, view.T, n0, ld.levels, tuple(polygons),
                         supports, builder.steps)


# --- verification ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"check\t{self.name}\t{'pass' if self.ok else 'fail'}" + (f"\t{self.detail}" if self.detail else "")


@dataclass(frozen=True)
class VerifyReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def get(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _first(items) -> str:
    return str(items[0]) if items else ""


def verify_system(system: PolygonSystem, trajectory: NoisyTrajectory, ld: LevelData) -> VerifyReport:
    """Re-check every structural property of a system against the trajectory."""
    view = TrajectoryView(ld.rule, ld, trajectory, system.target)
    R = ld.radius
    checks: list[Check] = []

    def add(name, problems):
        checks.append(Check(name, not problems, _first(problems)))

    if view.T != system.T or ld.power != system.power:
        add("view", [f"system was built for time {system.T} at power {system.power}"])
    polys = system.polygons

    shape, cone, steps, same_row, types, size = [], [], [], [], [], []
    vertex_errors = []
    for p in polys:
        X, n = p.X, p.level
        tag = f"polygon {p.ident}"
        if not X or not is_simple_region(X):
            shape.append(tag)
        cone.extend(f"{tag} {w}" for w in X if not view.in_cone(*w))
        if len(X) > 1:
            for k, a in enumerate(X):
                b = X[(k + 1) % len(X)]
                if ld.direction_of(n, (b[0] - a[0], b[1] - a[1])) is None:
                    steps.append(f"{tag} {a}->{b}")
        pts = sorted(set(X))
        for x, v in enumerate(pts):
            for w in pts[x + 1:]:
                if w[1] == v[1] and 0 < w[0] - v[0] <= 2 * R and not p.region.contains_segment(v, w):
                    same_row.append(f"{tag} {v} {w}")
        good = 0
        for tv in p.border:
            problem = _vertex_problem(tv, p, n, view, ld)
            if problem:
                types.append(f"{tag} {tv.point}: {problem}")
            if tv.error and not view.error(tv.i, tv.t - 1):
                vertex_errors.append(f"{tag} {tv.point}")
            if tv.support or tv.error:
                good += 1
        if good < ld.delta[n - 1] * len(X):
            size.append(f"{tag}: {good} of {len(X)} below {ld.delta[n - 1]}")
    add("simply-connected", shape)
    add("border-in-cone", cone)
    add("edge-directions", steps)
    add("same-row-segments", same_row)
    add("vertex-types", types)
    add("border-size", size)

    # within one level
    overlap, covered, tops = [], [], []
    for n in range(1, system.levels + 1):
        group = system.at_level(n)
        for x, a in enumerate(group):
            for b in group[x + 1:]:
                if a.region.intersects(b.region):
                    overlap.append(f"polygons {a.ident} {b.ident}")
        seeds = set(system.supports.get(n, ()))
        for c in seeds:
            if not any(p.region.contains(c) for p in group):
                covered.append(f"level {n} {c}")
        for p in group:
            top = max(t for _, t in p.X)
            tops.extend(f"polygon {p.ident} {w}" for w in p.X if w[1] == top and w not in seeds)
    add("level-disjoint", overlap)
    add("covers-supports", covered)
    add("top-vertices-are-supports", tops)

    # across levels: the higher polygon P against a lower polygon P'
    separated, borders, inside = [], [], []
    for hi in polys:
        for lo in polys:
            if lo.level >= hi.level:
                continue
            pair = f"polygons {hi.ident} {lo.ident}"
            if any(a[1] == b[1] and abs(a[0] - b[0]) <= R for a in hi.X for b in lo.X):
                separated.append(pair)
            if hi.region.border_touches(lo.region):
                borders.append(pair)
            if any(hi.region.contains(w) for w in lo.X):
                inside.append(pair)
    add("vertex-separation", separated)
    add("border-disjoint", borders)
    add("not-inside", inside)

    near = []
    for n, seeds in system.supports.items():
        for c in seeds:
            holder = next((p for p in system.at_level(n) if p.region.contains(c)), None)
            if holder is None:
                continue
            if not any(abs(c[0] - w[0]) <= n * R and abs(c[1] - w[1]) <= 1 for w in holder.X):
                near.append(f"level {n} {c}")
    add("close-to-border", near)

    verts = system.vertices()
    errs = sum(1 for v in verts.values() if v.error)
    beta = ld.beta_at(system.root_level)
    ok = errs >= beta * len(verts)
    add("type2-fraction", [] if ok else [f"{errs} of {len(verts)} below {beta}"])
    add("type2-errors", vertex_errors)
    return VerifyReport(tuple(checks))


def _vertex_problem(tv: TypedVertex, poly: SpaceTimePolygon, n: int, view: TrajectoryView, ld: LevelData):
    i, t = tv.point
    if not view.in_cone(i, t):
        return "outside the cone"
    if view.level(i, t) != n:
        return f"state {view.state(i, t)} outside band {ld.band(n)}"
    if tv.kind == 0:
        return "no type"
    R = ld.radius
    best = None
    if t > 0:
        for j in range(-ld.levels * R, ld.levels * R + 1):
            if view.in_cone(i + j, t - 1):
                lev = view.level(i + j, t - 1)
                if lev > n and abs(j) <= lev * R:
                    best = max(best or 0, lev)
    if tv.support:
        si, st, lev = tv.support
        if st != t - 1 or not view.in_cone(si, st) or view.level(si, st) != lev or lev <= n \
                or abs(si - i) > lev * R:
            return f"invalid support {tv.support}"
        if lev != best:
            return f"support level {lev} is not the highest available ({best})"
    elif best:
        return "support point exists but is not recorded"
    if tv.parents:
        a, b = tv.parents
        if a - i not in ld.U[n - 1] or b - i not in ld.V[n - 1]:
            return f"parents {tv.parents} are not forcing offsets"
        if not poly.region.contains_triangle((i, t), (a, t - 1), (b, t - 1)):
            return f"triangle on parents {tv.parents} leaves the polygon"
    return None


# --- encoding ----------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Encoding:
    """A single closed walk through all border vertices, with the level of each entry."""

    walk: tuple[tuple[int, int], ...]
    levels: tuple[int, ...]
    radius: int
    level_count: int

    @property
    def max_step(self) -> int:
        """Horizontal reach allowed between consecutive entries."""
        return max(self.level_count, 2) * self.radius


def _rotate(X, start):
    k = X.index(start)
    return tuple(X[k:] + X[:k])


def _bases(system: PolygonSystem) -> dict:
    """Polygon id -> (parent vertex, base vertex); the root polygon has no parent."""
    owner = {}
    level = {}
    for p in system.polygons:
        for w in p.border:
            owner.setdefault(w.point, w)
            level[w.point] = p.level
    out = {}
    for p in system.polygons:
        if system.root in p.X:
            out[p.ident] = (None, system.root)
            continue
        seeds = set(system.supports.get(p.level, ()))
        cands = [w for w in p.X if w in seeds]
        if not cands:
            raise PolygonError(f"polygon {p.ident} has no support point on its border")
        base = min(cands, key=lambda w: (-w[1], w[0]))
        parents = [w for w, tv in owner.items() if tv.support and tv.support[:2] == base]
        if not parents:
            raise PolygonError(f"support point {base} has no recorded parent")
        out[p.ident] = (min(parents, key=lambda w: (level[w], w[0])), base)
    return out


def system_skeleton(system: PolygonSystem) -> tuple:
    """Levels, base-rotated border lists and base links, in a canonical order."""
    bases = _bases(system)
    items = []
    for p in system.polygons:
        parent, base = bases[p.ident]
        items.append((p.level, _rotate(p.X, base), parent))
    return tuple(sorted(items))


def encode_system(system: PolygonSystem) -> Encoding:
    bases = _bases(system)
    level = {w: p.level for p in system.polygons for w in p.X}
    root_poly = next(p for p in system.polygons if bases[p.ident][0] is None)
    walk = list(_rotate(root_poly.X, system.root))
    pending = sorted((p for p in system.polygons if p is not root_poly), key=lambda p: (p.level, p.ident))
    while pending:
        for p in pending:
            parent, base = bases[p.ident]
            if parent in walk:
                k = walk.index(parent)
                X = _rotate(p.X, base)
                walk[k:k + 1] = [parent, *X, base, parent]
                pending.remove(p)
                break
        else:
            raise PolygonError("some polygons cannot be reached from the root polygon")
    return Encoding(tuple(walk), tuple(level[w] for w in walk), system.radius, system.levels)


def decode_system(enc: Encoding) -> tuple:
    """Rebuild the skeleton (level, border list from its base, parent) of every polygon."""
    walk, levels = enc.walk, enc.levels
    if not walk or len(walk) != len(levels):
        raise PolygonError("walk and level map must be non-empty and of equal length")
    reach = enc.max_step
    for k, a in enumerate(walk):
        b = walk[(k + 1) % len(walk)]
        if abs(b[0] - a[0]) > reach or abs(b[1] - a[1]) > 1:
            raise PolygonError(f"step {k}: {a} -> {b} is too long")
        if not 1 <= levels[k] <= enc.level_count:
            raise PolygonError(f"step {k}: level {levels[k]} out of range")
    stack = [[levels[0], [walk[0]], None]]
    done = []
    for k in range(1, len(walk)):
        w, lev = walk[k], levels[k]
        if lev > stack[-1][0]:
            stack.append([lev, [w], walk[k - 1]])
            continue
        while stack[-1][0] > lev:
            done.append(_close_child(stack.pop(), k))
            if not stack:
                break
        if not stack or stack[-1][0] != lev:
            raise PolygonError(f"step {k}: level {lev} does not return to an open polygon")
        stack[-1][1].append(w)
    if len(stack) != 1:
        raise PolygonError("walk ends inside a spliced polygon")
    root = _collapse(stack[0][1])
    while len(root) > 1 and root[-1] == root[0]:
        root.pop()
    done.append((stack[0][0], tuple(root), None))
    return tuple(sorted(done))


def _collapse(seq) -> list:
    out = []
    for w in seq:
        if not out or out[-1] != w:
            out.append(w)
    return out


def _close_child(entry, k):
    lev, raw, parent = entry
    if len(raw) < 2 or raw[-1] != raw[0]:
        raise PolygonError(f"step {k}: spliced polygon at level {lev} does not return to its base")
    return lev, tuple(_collapse(raw[:-1])), parent


# --- dump format -------------------------------------------------------------------------------------

def dump_system(system: PolygonSystem) -> str:
    buf = io.StringIO()
    buf.write("ca-polygons v1\n")
    buf.write(f"target {system.target[0]} {system.target[1]}\n")
    buf.write(f"power {system.power}\nradius {system.radius}\nsteps {system.T}\n")
    buf.write(f"levels {system.root_level} {system.levels}\n")
    for n in sorted(system.supports):
        for i, t in system.supports[n]:
            buf.write(f"support {n} {i} {t}\n")
    for p in system.polygons:
        buf.write(f"polygon {p.level} {p.ident}\n")
        for v in p.border:
            buf.write(f"v {v.i} {v.t} {v.kind}")
            if v.support:
                buf.write(" support {} {} {}".format(*v.support))
            if v.error:
                buf.write(" error")
            if v.parents:
                buf.write(" parents {} {}".format(*v.parents))
            buf.write("\n")
        for prim in p.primitives:
            kind = {1: "point", 2: "segment", 3: "triangle"}[len(prim)]
            buf.write(f"prim {kind} " + " ".join(f"{i} {t}" for i, t in prim) + "\n")
    buf.write("end\n")
    return buf.getvalue()


def load_system(text: str) -> PolygonSystem:
    lines = text.splitlines()
    pos = 0

    def fail(msg):
        raise PolygonError(f"line {pos}: {msg}")

    def ints(parts, count):
        try:
            vals = [int(x) for x in parts]
        except ValueError:
            fail("expected integers")
        if len(vals) != count:
            fail(f"expected {count} numbers")
        return vals

    header = {}
    for key, count in (("ca-polygons", None), ("target", 2), ("power", 1), ("radius", 1), ("steps", 1),
                       ("levels", 2)):
        pos += 1
        if pos > len(lines):
            fail(f"missing '{key}' line")
        parts = lines[pos - 1].split()
        if not parts or parts[0] != key:
            fail(f"expected '{key}'")
        if count is None:
            if parts[1:] != ["v1"]:
                fail("expected header 'ca-polygons v1'")
            continue
        header[key] = ints(parts[1:], count)
    supports: dict = {}
    polygons = []
    current = None

    def flush():
        if current is not None:
            polygons.append(SpaceTimePolygon(current[0], current[1], tuple(current[2]), tuple(current[3])))

    for pos in range(pos + 1, len(lines) + 1):
        parts = lines[pos - 1].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "support":
            n, i, t = ints(parts[1:], 3)
            supports.setdefault(n, []).append((i, t))
        elif tag == "polygon":
            flush()
            lev, ident = ints(parts[1:], 2)
            current = (lev, ident, [], [])
        elif tag == "v":
            if current is None:
                fail("vertex outside a polygon")
            i, t, kind = ints(parts[1:4], 3)
            rest = parts[4:]
            sup, err, par = None, False, None
            while rest:
                word = rest.pop(0)
                if word == "support":
                    sup = tuple(ints(rest[:3], 3))
                    rest = rest[3:]
                elif word == "error":
                    err = True
                elif word == "parents":
                    par = tuple(ints(rest[:2], 2))
                    rest = rest[2:]
                else:
                    fail(f"unknown vertex field '{word}'")
            tv = TypedVertex(i, t, sup, err, par)
            if tv.kind != kind:
                fail(f"vertex type {kind} does not match its fields")
            current[2].append(tv)
        elif tag == "prim":
            if current is None or len(parts) < 2:
                fail("misplaced primitive")
            size = {"point": 1, "segment": 2, "triangle": 3}.get(parts[1])
            if size is None:
                fail(f"unknown primitive '{parts[1]}'")
            vals = ints(parts[2:], 2 * size)
            current[3].append(tuple(zip(vals[::2], vals[1::2])))
        elif tag == "end":
            flush()
            current = None
            break
        else:
            fail(f"unknown line '{tag}'")
    else:
        fail("missing 'end'")
    n0, K = header["levels"]
    return PolygonSystem(tuple(header["target"]), header["power"][0], header["radius"][0], header["steps"][0],
                         n0, K, tuple(polygons), {n: tuple(v) for n, v in supports.items()})


def overlay_points(system: PolygonSystem) -> list[tuple[int, int]]:
    """Trajectory (coordinate, time) of every border vertex, for rendering."""
    ci, ct = system.target
    off = ct - system.power * system.T
    return sorted({(ci + i, off + system.power * t) for p in system.polygons for i, t in p.X})


def sample_systems(rule: LocalRule, ld: LevelData, trajectories, target=None, count: int | None = None):
    """Construct systems on trajectories whose target is nonzero, up to ``count`` of them."""
    out = []
    for traj in trajectories:
        view_col = (target or (traj.lo + traj.width // 2, traj.T))
        if traj.state(view_col[0], view_col[1]) == 0:
            continue
        out.append((traj, construct_system(rule, ld, traj, target)))
        if count is not None and len(out) >= count:
            break
    return out
