"""Exact planar predicates for regions bounded by closed lattice walks.

A region is given by a cyclic list of integer points.  It is the walk itself
together with every point of nonzero winding number, so a walk that goes
out along a segment and back again adds just that segment.  All
predicates use integer cross products; intersection points are
``Fraction`` pairs.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import cmp_to_key

Point = tuple  # (x, y) with int or Fraction entries


def cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def on_segment(p, a, b) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
            and cross(a, b, p) == 0)


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def segments_touch(a, b, c, d) -> bool:
    """Whether the closed segments ab and cd share a point."""
    if a == b:
        return on_segment(a, c, d)
    if c == d:
        return on_segment(c, a, b)
    d1, d2 = _sign(cross(c, d, a)), _sign(cross(c, d, b))
    d3, d4 = _sign(cross(a, b, c)), _sign(cross(a, b, d))
    if d1 == d2 == 0:
        return (on_segment(a, c, d) or on_segment(b, c, d)
                or on_segment(c, a, b) or on_segment(d, a, b))
    return d1 * d2 <= 0 and d3 * d4 <= 0


def intersections(a, b, c, d) -> list:
    """Points shared by ab and cd: none, one, or both ends of a collinear overlap."""
    if a == b:
        return [a] if on_segment(a, c, d) else []
    if c == d:
        return [c] if on_segment(c, a, b) else []
    d1, d2 = cross(c, d, a), cross(c, d, b)
    if d1 == 0 and d2 == 0:
        pts = [p for p in (a, b) if on_segment(p, c, d)] + [p for p in (c, d) if on_segment(p, a, b)]
        return list(dict.fromkeys(pts))
    d3, d4 = cross(a, b, c), cross(a, b, d)
    if _sign(d1) * _sign(d2) > 0 or _sign(d3) * _sign(d4) > 0:
        return []
    s = Fraction(d1) / (d1 - d2)
    return [(a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s)]


def _is_int(p) -> bool:
    return type(p[0]) is int and type(p[1]) is int


def _winding(segments, p) -> int:
    w = 0
    for a, b in segments:
        if a[1] <= p[1] < b[1]:
            if cross(a, b, p) > 0:
                w += 1
        elif b[1] <= p[1] < a[1]:
            if cross(a, b, p) < 0:
                w -= 1
    return w


def _cut_params(a, b, c, d) -> list:
    """Parameters along lattice segment ab (a != b) where it meets cd."""
    if c == d:
        return [_param(c, a, b)] if on_segment(c, a, b) else []
    d1, d2 = cross(c, d, a), cross(c, d, b)
    if d1 == 0 and d2 == 0:
        out = []
        for p in (c, d):
            if on_segment(p, a, b):
                out.append(_param(p, a, b))
        return out
    d3, d4 = cross(a, b, c), cross(a, b, d)
    if _sign(d1) * _sign(d2) > 0 or _sign(d3) * _sign(d4) > 0:
        return []
    return [Fraction(d1, d1 - d2)]


def _param(p, a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    if abs(dx) >= abs(dy):
        return Fraction(p[0] - a[0]) / dx
    return Fraction(p[1] - a[1]) / dy


def _angle_cmp(u, v) -> int:
    hu = 0 if u[1] > 0 or (u[1] == 0 and u[0] > 0) else 1
    hv = 0 if v[1] > 0 or (v[1] == 0 and v[0] > 0) else 1
    if hu != hv:
        return hu - hv
    return -_sign(u[0] * v[1] - u[1] * v[0])


class Region:
    """Closed region enclosed by a cyclic walk of lattice points."""

    def __init__(self, walk):
        self.walk = tuple(walk)
        if not self.walk:
            raise ValueError("empty walk")
        n = len(self.walk)
        self.segments = [(self.walk[k], self.walk[(k + 1) % n]) for k in range(n)]
        self._boxes = [(min(a[0], b[0]), max(a[0], b[0]), min(a[1], b[1]), max(a[1], b[1]), a, b)
                       for a, b in self.segments]
        xs = [p[0] for p in self.walk]
        ys = [p[1] for p in self.walk]
        self.box = (min(xs), max(xs), min(ys), max(ys))

    def _in_box(self, p) -> bool:
        x0, x1, y0, y1 = self.box
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def on_border(self, p) -> bool:
        return any(on_segment(p, a, b) for a, b in self.segments)

    def winding(self, p) -> int:
        """Winding number of the walk around a point off the walk."""
        return self._winding_scaled(p[0], p[1], 1) if _is_int(p) else _winding(self.segments, p)

    def _contains_scaled(self, X: int, Y: int, q: int) -> bool:
        """Membership of the point (X/q, Y/q), q > 0, in integer arithmetic."""
        x0, x1, y0, y1 = self.box
        if not (x0 * q <= X <= x1 * q and y0 * q <= Y <= y1 * q):
            return False
        for (ax, ay), (bx, by) in self.segments:
            if (min(ax, bx) * q <= X <= max(ax, bx) * q and min(ay, by) * q <= Y <= max(ay, by) * q
                    and (bx - ax) * (Y - ay * q) == (by - ay) * (X - ax * q)):
                return True
        return self._winding_scaled(X, Y, q) != 0

    def _winding_scaled(self, X: int, Y: int, q: int) -> int:
        w = 0
        for (ax, ay), (bx, by) in self.segments:
            if ay * q <= Y < by * q:
                if (bx - ax) * (Y - ay * q) - (by - ay) * (X - ax * q) > 0:
                    w += 1
            elif by * q <= Y < ay * q:
                if (bx - ax) * (Y - ay * q) - (by - ay) * (X - ax * q) < 0:
                    w -= 1
        return w

    def contains(self, p) -> bool:
        if _is_int(p):
            return self._contains_scaled(p[0], p[1], 1)
        x, y = Fraction(p[0]), Fraction(p[1])
        q = x.denominator * y.denominator
        return self._contains_scaled(x.numerator * (q // x.denominator), y.numerator * (q // y.denominator), q)

    def contains_segment(self, a, b) -> bool:
        """Closed lattice segment ab lies in the region."""
        if a == b:
            return self.contains(a)
        if not (self._in_box(a) and self._in_box(b)):
            return False
        if not (self.contains(a) and self.contains(b)):
            return False
        cuts = {Fraction(0), Fraction(1)}
        x0, x1 = min(a[0], b[0]), max(a[0], b[0])
        y0, y1 = min(a[1], b[1]), max(a[1], b[1])
        for u0, u1, v0, v1, c, d in self._boxes:
            if u1 >= x0 and u0 <= x1 and v1 >= y0 and v0 <= y1:
                cuts.update(_cut_params(a, b, c, d))
        cuts = sorted(cuts)
        dx, dy = b[0] - a[0], b[1] - a[1]
        for s0, s1 in zip(cuts, cuts[1:]):
            s = (s0 + s1) / 2
            q, num = s.denominator, s.numerator
            if not self._contains_scaled(a[0] * q + dx * num, a[1] * q + dy * num, q):
                return False
        return True

    def contains_triangle(self, a, b, c) -> bool:
        # the region has no holes, so a closed triangle lies inside once its edges do
        return self.contains_segment(a, b) and self.contains_segment(b, c) and self.contains_segment(c, a)

    def contains_region(self, other: "Region") -> bool:
        return all(self.contains_segment(a, b) for a, b in other.segments)

    def border_touches(self, other: "Region") -> bool:
        x0, x1, y0, y1 = self.box
        u0, u1, v0, v1 = other.box
        if x1 < u0 or u1 < x0 or y1 < v0 or v1 < y0:
            return False
        return any(segments_touch(a, b, c, d)
                   for p0, p1, q0, q1, a, b in self._boxes
                   for u0, u1, v0, v1, c, d in other._boxes
                   if p1 >= u0 and u1 >= p0 and q1 >= v0 and v1 >= q0)

    def intersects(self, other: "Region") -> bool:
        x0, x1, y0, y1 = self.box
        u0, u1, v0, v1 = other.box
        if x1 < u0 or u1 < x0 or y1 < v0 or v1 < y0:
            return False
        if self.border_touches(other):
            return True
        return self.contains(other.walk[0]) or other.contains(self.walk[0])


class Arrangement:
    """Planar graph of a set of walks, split at every mutual intersection.

    Each undirected edge carries the net number of times the walks run
    along it from its lexicographically smaller end to the larger one.
    """

    def __init__(self, walks):
        segs = []
        for walk in walks:
            n = len(walk)
            for k in range(n):
                segs.append((walk[k], walk[(k + 1) % n]))
        self.nodes: set = set()
        self.flow: dict = {}
        rows: dict = {}
        for idx, (a, b) in enumerate(segs):
            for y in range(math.floor(min(a[1], b[1])), math.ceil(max(a[1], b[1])) + 1):
                rows.setdefault(y, []).append(idx)
        for idx, (a, b) in enumerate(segs):
            self.nodes.add(a)
            if a == b:
                continue
            pts = {a, b}
            x0, x1 = min(a[0], b[0]), max(a[0], b[0])
            near = set()
            for y in range(math.floor(min(a[1], b[1])), math.ceil(max(a[1], b[1])) + 1):
                near.update(rows[y])
            for jdx in near:
                c, d = segs[jdx]
                if jdx != idx and max(c[0], d[0]) >= x0 and min(c[0], d[0]) <= x1:
                    pts.update(intersections(a, b, c, d))
            ordered = sorted(pts, key=lambda q: _param(q, a, b))
            for p, q in zip(ordered, ordered[1:]):
                key, sign = ((p, q), 1) if p < q else ((q, p), -1)
                self.flow[key] = self.flow.get(key, 0) + sign
                self.nodes.update((p, q))
        nbrs: dict = {p: [] for p in self.nodes}
        for p, q in self.flow:
            nbrs[p].append(q)
            nbrs[q].append(p)
        self.around = {}
        for p, qs in nbrs.items():
            qs.sort(key=cmp_to_key(lambda u, v, p=p: _angle_cmp((u[0] - p[0], u[1] - p[1]),
                                                                (v[0] - p[0], v[1] - p[1]))))
            self.around[p] = qs
        self._index = {p: {q: k for k, q in enumerate(qs)} for p, qs in self.around.items()}

    def _next(self, u, v):
        """Half-edge after u->v along the face on its left."""
        qs = self.around[v]
        return v, qs[self._index[v][u] - 1]

    def face(self, start) -> list:
        seq, h = [], start
        while True:
            seq.append(h[0])
            h = self._next(*h)
            if h == start:
                return seq

    def outer_start(self):
        v0 = min(self.nodes, key=lambda p: (p[1], p[0]))
        qs = self.around[v0]
        return v0, (qs[-1] if qs else None)

    def outer_border(self) -> list:
        """Counterclockwise border of the hole-free hull of the component at the lowest point."""
        v0, w = self.outer_start()
        if w is None:
            return [v0]
        clockwise = self.face((v0, w))
        return [clockwise[0]] + clockwise[:0:-1]

    def face_windings(self) -> list[int]:
        """Winding numbers of all bounded faces (requires a connected graph)."""
        face_of = {}
        faces = []
        for p, qs in self.around.items():
            for q in qs:
                if (p, q) not in face_of:
                    cyc = self.face((p, q))
                    fid = len(faces)
                    faces.append(cyc)
                    n = len(cyc)
                    for k in range(n):
                        face_of[(cyc[k], cyc[(k + 1) % n])] = fid
        if not faces:
            return []
        v0, w = self.outer_start()
        outer = face_of[(v0, w)]
        wind = {outer: 0}
        queue = [outer]
        adj: dict = {}
        for (p, q), f in self.flow.items():
            left, right = face_of[(p, q)], face_of[(q, p)]
            adj.setdefault(right, []).append((left, f))
            adj.setdefault(left, []).append((right, -f))
        while queue:
            cur = queue.pop()
            for other, f in adj.get(cur, ()):
                val = wind[cur] + f
                if other not in wind:
                    wind[other] = val
                    queue.append(other)
                elif wind[other] != val:
                    raise AssertionError("inconsistent face windings")
        return [wind[f] for f in range(len(faces)) if f != outer]


def merged_border(walk_a, walk_b) -> list:
    """Counterclockwise list of the two walks' vertices met along the border of their filled union."""
    # intersection nodes can equal lattice vertices as Fraction pairs; map back to the originals
    keep = {p: p for p in (*walk_a, *walk_b)}
    border = [keep[p] for p in Arrangement([walk_a, walk_b]).outer_border() if p in keep]
    out = []
    for p in border:
        if not out or out[-1] != p:
            out.append(p)
    while len(out) > 1 and out[-1] == out[0]:
        out.pop()
    return out


def is_simple_region(walk) -> bool:
    """Every bounded face of the walk has winding number one: no holes, no clockwise parts."""
    if len(walk) < 3:
        return True
    return all(w == 1 for w in Arrangement([walk]).face_windings())
