"""
Developing maps and flat geodesics in the universal cover of the resolving cover.

Geodesics are found inside a corridor (a sequence of edge crossings) by the
funnel algorithm, then the corridor is rerouted around any cone point where
the angle condition fails until the path is locally, hence globally, a
geodesic of the CAT(0) cover.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from backend.core.errors import (
    ConePointHit, CorridorTooSmall, CoverConsistencyError, CurveError,
)
from backend.core.numerics import ZERO, Placement, QuadNum, Vec
from backend.core.surface import (
    ChartSegment, HalfTranslationSurface, ResolvingCover, SurfacePoint,
)
from backend.core.utils import (
    count_half_turns, in_convex, on_segment, orient, segment_intersection, segment_param,
    strictly_between_ccw,
)

log = logging.getLogger(__name__)

Crossing = tuple[int, int]


# ─── Development ──────────────────────────────────────────────

@dataclass
class Development:
    steps: list[tuple[int, Placement]]
    points: list[Vec]
    transitions: list[list[Crossing]] = field(default_factory=list)
    holonomy: Optional[Placement] = None

    @property
    def sheets(self) -> list[int]:
        """Sheet of the orientation cover each piece lifts to (first piece on sheet 0)."""
        return [0 if pl.sign > 0 else 1 for _, pl in self.steps]

    def segments(self) -> list[tuple[Vec, Vec]]:
        return list(zip(self.points[::2], self.points[1::2]))

    def l1_length(self) -> QuadNum:
        total = ZERO
        for a, b in self.segments():
            total = total + (b - a).l1()
        return total


def _transition(s: HalfTranslationSurface, piece: ChartSegment, nxt: ChartSegment
                ) -> tuple[Placement, list[Crossing]]:
    """Chart map g (piece chart → next chart) joining consecutive pieces."""
    p, q = piece.end, nxt.start
    if piece.poly == nxt.poly and p == q:
        return Placement.identity(), []
    poly = s.polygons[piece.poly]
    vertex = poly.vertex_index(p)
    if vertex is None:
        for e in poly.edges_containing(p):
            target, _, g = s.partner(piece.poly, e)
            if target == nxt.poly and g(p) == q:
                return g, [(piece.poly, e)]
        raise CurveError(f'pieces do not join: {piece.poly}:{p} → {nxt.poly}:{q}')

    cone = s.cone_at(piece.poly, vertex)
    if not cone.is_regular:
        raise ConePointHit(f'path passes through cone point {cone.id} ({cone.angle_label})', cone)
    cycle = s.corner_cycle(piece.poly, vertex)
    best = None
    for steps, (cq, cj, frame) in enumerate(cycle):
        if cq != nxt.poly or s.polygons[cq].vertex(cj) != q:
            continue
        out_ray, in_ray = s.corner_rays(cq, cj)
        w = nxt.vector
        inside = strictly_between_ccw(out_ray, in_ray, w) or w.cross(out_ray).sign() == 0 \
            or w.cross(in_ray).sign() == 0
        if inside and (best is None or min(steps, len(cycle) - steps) < best[0]):
            best = (min(steps, len(cycle) - steps), steps, frame)
    if best is None:
        raise CurveError(f'pieces do not join at vertex {piece.poly}.{vertex}')
    _, steps, frame = best
    crossings = []
    for cq, cj, _ in cycle[:steps]:
        crossings.append((cq, (cj - 1) % len(s.polygons[cq])))
    return frame.inverse(), crossings


def develop(path: Sequence[ChartSegment], cover: ResolvingCover, closed: bool = False) -> Development:
    """Develop consecutive chart pieces of the base surface into one plane.

    The first chart is placed by the identity. Placements are ±z + c on the
    base; the sheet sequence records the lift to the resolving cover, where
    every placement is a translation.
    """
    s = cover.base
    if not path:
        raise CurveError('cannot develop an empty path')
    placement = Placement.identity()
    steps, points, transitions = [], [], []
    for k, piece in enumerate(path):
        if k:
            g, crossings = _transition(s, path[k - 1], piece)
            placement = placement.compose(g.inverse())
            transitions.append(crossings)
        steps.append((piece.poly, placement))
        points.extend([placement(piece.start), placement(piece.end)])
    dev = Development(steps, points, transitions)
    if closed:
        g, crossings = _transition(s, path[-1], path[0])
        dev.holonomy = placement.compose(g.inverse())
        dev.transitions.append(crossings)
    return dev


def lift_to_cover(path: Sequence[ChartSegment], cover: ResolvingCover, closed: bool = False
                  ) -> list[ChartSegment]:
    """Lift a base path to the cover; closed curves with flip holonomy are doubled."""
    if cover.degree == 1:
        return list(path)
    dev = develop(path, cover, closed)
    pieces = list(path)
    sheets = dev.sheets
    if closed and dev.holonomy is not None and dev.holonomy.sign < 0:
        pieces = pieces + pieces
        sheets = sheets + [1 - x for x in sheets]
    return [cover.lift_segment(piece, sheet) for piece, sheet in zip(pieces, sheets)]


# ─── Corridors ───────────────────────────────────────────────

def corridor_polygons(s: HalfTranslationSurface, start_poly: int, corridor: Sequence[Crossing]
                      ) -> list[tuple[int, Placement]]:
    """Developed polygon sequence along a crossing word (start chart placed by identity)."""
    out = [(start_poly, Placement.identity())]
    for k, (poly, edge) in enumerate(corridor):
        cur, placement = out[-1]
        if poly != cur:
            raise CurveError(f'corridor step {k} leaves polygon {poly}, expected {cur}')
        q, _, g = s.partner(poly, edge)
        out.append((q, placement.compose(g.inverse())))
    return out


def reduce_corridor(s: HalfTranslationSurface, corridor: Sequence[Crossing]) -> list[Crossing]:
    """Cancel immediate backtracks (crossing an edge and straight back)."""
    out: list[Crossing] = []
    for crossing in corridor:
        if out:
            q, f, _ = s.partner(*out[-1])
            if (q, f) == crossing:
                out.pop()
                continue
        out.append(crossing)
    return out


@dataclass
class _Portal:
    left: Vec
    right: Vec
    left_corner: Optional[tuple[int, int]]
    right_corner: Optional[tuple[int, int]]


def _portals(s: HalfTranslationSurface, x: SurfacePoint, y: SurfacePoint,
             corridor: Sequence[Crossing]) -> tuple[list[_Portal], Vec]:
    polys = corridor_polygons(s, x.poly, corridor)
    last_poly, last_pl = polys[-1]
    if last_poly != y.poly:
        raise CurveError(f'corridor ends in polygon {last_poly}, endpoint lies in {y.poly}')
    portals = [_Portal(x.z, x.z, None, None)]
    for (poly, edge), (_, pl) in zip(corridor, polys):
        p = s.polygons[poly]
        n = len(p)
        portals.append(_Portal(pl(p.vertex(edge + 1)), pl(p.vertex(edge)),
                               (poly, (edge + 1) % n), (poly, edge)))
    y_dev = last_pl(y.z)
    portals.append(_Portal(y_dev, y_dev, None, None))
    return portals, y_dev


def _funnel(portals: list[_Portal]) -> list[tuple[Vec, Optional[int], str]]:
    """String pulling through the portal sequence.

    Returns the path as (point, portal index, side) with side in
    {'start', 'left', 'right', 'end'}.
    """
    apex = portals[0].left
    left, right = portals[0].left, portals[0].right
    apex_i = left_i = right_i = 0
    path = [(apex, 0, 'start')]
    i = 1
    while i < len(portals):
        l, r = portals[i].left, portals[i].right

        if orient(apex, right, r) >= 0:
            if apex == right or orient(apex, left, r) < 0:
                right, right_i = r, i
            else:
                path.append((left, left_i, 'left'))
                apex, apex_i = left, left_i
                left, right = apex, apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue

        if orient(apex, left, l) <= 0:
            if apex == left or orient(apex, right, l) > 0:
                left, left_i = l, i
            else:
                path.append((right, right_i, 'right'))
                apex, apex_i = right, right_i
                left, right = apex, apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        i += 1

    end = portals[-1].left
    if path[-1][0] != end:
        path.append((end, len(portals) - 1, 'end'))
    else:
        path[-1] = (end, len(portals) - 1, 'end')
    return path


@dataclass
class GeodesicPath:
    points: list[Vec]
    corridor: list[Crossing]
    bends: list[dict] = field(default_factory=list)
    reroutes: int = 0

    def segments(self) -> list[tuple[Vec, Vec]]:
        return list(zip(self.points, self.points[1:]))

    def horizontal_length(self) -> QuadNum:
        return sum((abs((b - a).x) for a, b in self.segments()), ZERO)

    def vertical_length(self) -> QuadNum:
        return sum((abs((b - a).y) for a, b in self.segments()), ZERO)

    def length_bounds(self) -> tuple[QuadNum, QuadNum]:
        """Exact bracket on the Euclidean length: Σ‖s‖∞ ≤ length ≤ Σ‖s‖₁."""
        lo = sum(((b - a).linf() for a, b in self.segments()), ZERO)
        hi = sum(((b - a).l1() for a, b in self.segments()), ZERO)
        return lo, hi


def _run(portals: list[_Portal], k: int, side: str) -> tuple[int, int]:
    point = portals[k].left if side == 'left' else portals[k].right
    a = b = k
    get = (lambda p: p.left) if side == 'left' else (lambda p: p.right)
    while a - 1 >= 1 and get(portals[a - 1]) == point and portals[a - 1].left_corner is not None:
        a -= 1
    while b + 1 < len(portals) - 1 and get(portals[b + 1]) == point:
        b += 1
    return a, b


def _sleeve_angle_ok(s: HalfTranslationSurface, portals, path, idx) -> tuple[bool, dict]:
    point, k, side = path[idx]
    prev_pt, next_pt = path[idx - 1][0], path[idx + 1][0]
    a, b = _run(portals, k, side)
    corner = portals[a].left_corner if side == 'left' else portals[a].right_corner
    cone = s.cone_at(*corner)
    rays = [prev_pt - point]
    for j in range(a, b + 1):
        other = portals[j].right if side == 'left' else portals[j].left
        rays.append(other - point)
    rays.append(next_pt - point)
    half_turns, landed = count_half_turns(rays, ccw=(side == 'left'))
    ok = half_turns < cone.k - 1 or (half_turns == cone.k - 1 and landed)
    info = {'point': point, 'coneId': cone.id, 'k': cone.k, 'sleeveHalfTurns': half_turns,
            'exact': landed, 'run': (a - 1, b - 1), 'side': side}
    return ok, info


def _reroute(s: HalfTranslationSurface, corridor: list[Crossing], run: tuple[int, int], side: str
             ) -> list[Crossing]:
    """Go around the bend vertex the other way."""
    a, b = run
    m = b - a + 1
    poly, edge = corridor[a]
    n = len(s.polygons[poly])
    vertex = (edge + 1) % n if side == 'left' else edge
    cycle_len = len(s.corner_cycle(poly, vertex))
    replacement: list[Crossing] = []
    p, i = poly, vertex
    for _ in range(cycle_len - m):
        if side == 'left':
            replacement.append((p, i))
            q, f, _ = s.partner(p, i)
            p, i = q, (f + 1) % len(s.polygons[q])
        else:
            e = (i - 1) % len(s.polygons[p])
            replacement.append((p, e))
            p, i = s.partner(p, e)[:2]
    end_poly = s.partner(*corridor[b])[0]
    if p != end_poly:
        raise CoverConsistencyError(f'reroute around vertex {poly}.{vertex} ends in {p}, expected {end_poly}')
    return corridor[:a] + replacement + corridor[b + 1:]


def flat_geodesic(x: SurfacePoint, y: SurfacePoint, corridor: Sequence[Crossing],
                  cover: ResolvingCover, radius: int = 64) -> GeodesicPath:
    """Geodesic of the CAT(0) universal cover between lifts of x and y.

    Points are cover points; the lift of y is the one reached through
    `corridor` from x. Coordinates are developed in x's chart.

    Inside a fixed corridor the funnel returns the shortest path of the
    developed strip, which is the shortest path in the visibility graph on
    x, y and the corridor's cone vertices. A bend whose sleeve angle is
    below π on either side is not locally geodesic, so the corridor is
    rerouted around that cone point. Local geodesics in a CAT(0) space are
    unique global geodesics, so the settled path equals the visibility-graph
    shortest path over the unfolded ball, without building that graph.
    """
    s = cover.cover
    corridor = reduce_corridor(s, corridor)
    reroutes = 0
    while True:
        if len(corridor) > radius:
            raise CorridorTooSmall(f'geodesic corridor grew to {len(corridor)} crossings',
                                   suggested_radius=2 * len(corridor))
        portals, _ = _portals(s, x, y, corridor)
        path = _funnel(portals)
        bends = []
        violation = None
        for idx in range(1, len(path) - 1):
            ok, info = _sleeve_angle_ok(s, portals, path, idx)
            bends.append(info)
            if not ok:
                violation = info
                break
        if violation is None:
            return GeodesicPath([p for p, _, _ in path], list(corridor), bends, reroutes)
        reroutes += 1
        if reroutes > 4 * radius:
            raise CorridorTooSmall('geodesic did not settle', suggested_radius=2 * radius)
        log.debug('rerouting around cone %s (%s side)', violation['coneId'], violation['side'])
        corridor = reduce_corridor(s, _reroute(s, list(corridor), violation['run'], violation['side']))


# ─── Unfolded balls ──────────────────────────────────────────

@dataclass(frozen=True)
class BallCell:
    poly: int
    placement: Placement
    word: tuple[Crossing, ...]

    @property
    def depth(self) -> int:
        return len(self.word)


def unfolded_ball(s: HalfTranslationSurface, root: int, radius: int) -> list[BallCell]:
    """Breadth-first tree of polygon copies within `radius` crossings of `root`."""
    cells = [BallCell(root, Placement.identity(), ())]
    queue = deque(cells)
    while queue:
        cell = queue.popleft()
        if cell.depth >= radius:
            continue
        for e in range(len(s.polygons[cell.poly])):
            if cell.word:
                back = s.partner(*cell.word[-1])
                if (cell.poly, e) == back[:2]:
                    continue
            q, _, g = s.partner(cell.poly, e)
            child = BallCell(q, cell.placement.compose(g.inverse()), cell.word + ((cell.poly, e),))
            cells.append(child)
            queue.append(child)
    return cells


def _copies_containing(s: HalfTranslationSurface, x: SurfacePoint, corridor, point: Vec) -> set:
    found = set()
    for depth, (poly, pl) in enumerate(corridor_polygons(s, x.poly, corridor)):
        if in_convex(point, [pl(v) for v in s.polygons[poly].vertices]):
            found.add(tuple(corridor[:depth]))
    return found


def _param_on(g: GeodesicPath, p: Vec) -> tuple[int, QuadNum]:
    segs = g.segments()
    for m, (a, b) in enumerate(segs):
        if on_segment(p, a, b):
            t = segment_param(p, a, b) if a != b else ZERO
            if t == 1 and m + 1 < len(segs):
                return m + 1, ZERO
            return m, t
    raise CurveError(f'{p} is not on the geodesic')


def geodesic_intersection(g1: GeodesicPath, x1: SurfacePoint, g2: GeodesicPath, x2: SurfacePoint,
                          cover: ResolvingCover) -> dict:
    """Common part of two geodesics developed from the same root chart.

    Both start points must lie in the same root polygon; intersections are
    only counted where the two paths pass through the same polygon copy.
    """
    s = cover.cover
    if x1.poly != x2.poly:
        raise CurveError('geodesics must share a root chart')
    intervals = []
    for a, b in g1.segments():
        for c, d in g2.segments():
            hit = segment_intersection(a, b, c, d)
            if hit is None:
                continue
            lo, hi = (hit[1], hit[1]) if hit[0] == 'point' else (hit[1], hit[2])
            mid = (lo + hi).scale(Fraction(1, 2))
            if not (_copies_containing(s, x1, g1.corridor, mid)
                    & _copies_containing(s, x2, g2.corridor, mid)):
                continue
            intervals.append(tuple(sorted((_param_on(g1, lo), _param_on(g1, hi)))))
    intervals.sort()
    pieces = 0
    reach = None
    for start, end in intervals:
        if reach is None or start > reach:
            pieces += 1
            reach = end
        else:
            reach = max(reach, end)
    return {'intervals': intervals, 'pieces': pieces, 'connected': pieces <= 1}


# ─── Size and width ───────────────────────────────────────────

@dataclass(frozen=True)
class SizeWidthReport:
    size_lower: QuadNum
    size_upper: QuadNum
    width: QuadNum
    height: QuadNum

    def to_dict(self) -> dict:
        return {'sizeLower': self.size_lower, 'sizeUpper': self.size_upper,
                'width': self.width, 'height': self.height}


def _window_extremes(values: list[QuadNum], window: int) -> QuadNum:
    """max over windows of `window` consecutive values of (max − min), by monotone deques."""
    best = ZERO
    hi: deque[int] = deque()
    lo: deque[int] = deque()
    for i, v in enumerate(values):
        while hi and values[hi[-1]] <= v:
            hi.pop()
        hi.append(i)
        while lo and values[lo[-1]] >= v:
            lo.pop()
        lo.append(i)
        if hi[0] <= i - window:
            hi.popleft()
        if lo[0] <= i - window:
            lo.popleft()
        if i >= window - 1:
            best = max(best, values[hi[0]] - values[lo[0]])
    return best


def _breakpoints(pieces: Sequence[ChartSegment]) -> list[tuple[int, SurfacePoint, bool]]:
    """(piece index, point, is piece start) for starts and midpoints of every piece."""
    out = []
    for k, piece in enumerate(pieces):
        out.append((k, SurfacePoint(piece.poly, piece.start), True))
        out.append((k, SurfacePoint(piece.poly, (piece.start + piece.end).scale(Fraction(1, 2))), False))
    return out


def size_width(pieces: Sequence[ChartSegment], cover: ResolvingCover, radius: int = 64) -> SizeWidthReport:
    """Exact size interval, width and height of one period of a closed curve's lift.

    Maximized over breakpoint basepoints. Without cone points in the cover the
    universal cover is the plane and chords are geodesics; otherwise every
    breakpoint pair is joined by a corridor geodesic along the curve.
    """
    lifted = lift_to_cover(pieces, cover, closed=True)
    s = cover.cover
    if not s.singular_points:
        return _planar_size_width(lifted, cover)

    plain = cover_identity(s)
    dev = develop(lifted, plain, closed=True)
    marks = _breakpoints(lifted)
    period = len(marks)
    seg_l1 = max((p.vector.l1() for p in lifted), default=ZERO)

    width = height = lower = upper = ZERO
    for i in range(period):
        corridor: list[Crossing] = []
        _, xi, _ = marks[i]
        for step in range(1, period + 1):
            prev_k = marks[(i + step - 1) % period][0]
            _, xj, is_start = marks[(i + step) % period]
            if is_start:
                corridor = corridor + dev.transitions[prev_k]
            g = flat_geodesic(xi, xj, corridor, plain, radius)
            width = max(width, g.horizontal_length())
            height = max(height, g.vertical_length())
            lo, hi = g.length_bounds()
            lower = max(lower, lo)
            upper = max(upper, hi)
    # any point is within a quarter piece of a breakpoint
    upper = min(upper + seg_l1 / 2, dev.l1_length())
    return SizeWidthReport(lower, max(upper, lower), width, height)


def cover_identity(s: HalfTranslationSurface) -> ResolvingCover:
    return ResolvingCover(s, s, 1, tuple((p.id, 0) for p in s.polygons), ())


def _planar_size_width(lifted: Sequence[ChartSegment], cover: ResolvingCover) -> SizeWidthReport:
    dev = develop(lifted, cover_identity(cover.cover), closed=True)
    if dev.holonomy is None or dev.holonomy.sign < 0:
        raise CoverConsistencyError('lift to the cover is not closed by a translation')
    starts = dev.points[::2]
    n = len(starts)
    shift = dev.holonomy.shift
    # two periods of breakpoints so every window of n+1 points is a basepoint choice
    pts = starts + [p + shift for p in starts] + [starts[0] + shift.scale(2)]
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    width = _window_extremes(xs, n + 1)
    height = _window_extremes(ys, n + 1)
    lower = max(width, height)
    upper = min(dev.l1_length(), width + height)
    return SizeWidthReport(lower, max(upper, lower), width, height)
