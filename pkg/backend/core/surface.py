"""
Half-translation surfaces: polygons over Q(√d) glued by z ↦ ±z + c.

Holds the BSF data model (the vertical/horizontal foliations are the chart
coordinate line fields), cone-point analysis, the straight-line tracer that
flow, curves and dynamics build on, and the orientation double cover used as
the resolving cover.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from backend.core.errors import (
    CapExceeded, CoverConsistencyError, CurveError, SurfaceFormatError,
    SurfaceValidationError,
)
from backend.core.numerics import ONE, ZERO, Placement, QuadNum, Vec, parse
from backend.core.utils import (
    count_half_turns, in_convex, on_segment, orient, segment_intersection, segment_param,
    strictly_between_ccw,
)

log = logging.getLogger(__name__)

TRANSLATION = 'translation'
FLIP = 'flip'


# ─── Data model ───────────────────────────────────────────────

@dataclass(frozen=True)
class Polygon:
    id: int
    vertices: tuple[Vec, ...]

    def __len__(self):
        return len(self.vertices)

    def vertex(self, i: int) -> Vec:
        return self.vertices[i % len(self.vertices)]

    def edge(self, i: int) -> tuple[Vec, Vec]:
        return self.vertex(i), self.vertex(i + 1)

    def edge_vector(self, i: int) -> Vec:
        a, b = self.edge(i)
        return b - a

    def area(self) -> QuadNum:
        total = ZERO
        for i in range(len(self)):
            a, b = self.edge(i)
            total = total + a.cross(b)
        return total / 2

    def vertex_index(self, z: Vec) -> Optional[int]:
        for i, v in enumerate(self.vertices):
            if v == z:
                return i
        return None

    def edges_containing(self, z: Vec) -> list[int]:
        return [i for i in range(len(self)) if on_segment(z, *self.edge(i))]


@dataclass(frozen=True)
class Gluing:
    """Edge `a` of one polygon glued to edge `b` of another by `chart_map`.

    `chart_map` sends coordinates of a's polygon to b's polygon; vertex i of
    edge a lands on vertex j+1 of edge b (boundary orientation reversed).
    """
    a: tuple[int, int]
    b: tuple[int, int]
    kind: str
    chart_map: Placement


@dataclass(frozen=True)
class ConePoint:
    id: int
    corners: tuple[tuple[int, int], ...]
    k: int

    @property
    def is_regular(self) -> bool:
        return self.k == 2

    @property
    def angle_label(self) -> str:
        return 'π' if self.k == 1 else f'{self.k}π'


@dataclass(frozen=True)
class SurfacePoint:
    poly: int
    z: Vec

    def __str__(self):
        return f'{self.poly}:{self.z}'


@dataclass(frozen=True)
class ChartSegment:
    poly: int
    start: Vec
    end: Vec

    @property
    def vector(self) -> Vec:
        return self.end - self.start

    def reversed(self) -> 'ChartSegment':
        return ChartSegment(self.poly, self.end, self.start)


@dataclass(frozen=True)
class Transversal:
    """Horizontal segment inside one chart (possibly on its boundary)."""
    name: str
    poly: int
    y: QuadNum
    x0: QuadNum
    x1: QuadNum

    @property
    def segment(self) -> ChartSegment:
        return ChartSegment(self.poly, Vec(self.x0, self.y), Vec(self.x1, self.y))

    @property
    def width(self) -> QuadNum:
        return self.x1 - self.x0

    def point(self, x: QuadNum) -> SurfacePoint:
        return SurfacePoint(self.poly, Vec(x, self.y))


@dataclass(frozen=True)
class AutomorphismBlock:
    """Declared affine automorphism data, verified by dynamics.AffineAuto."""
    name: str
    matrix: tuple[QuadNum, QuadNum, QuadNum, QuadNum]
    anchor_from: SurfacePoint
    anchor_to: SurfacePoint
    permutation: tuple[tuple[int, int], ...] = ()


@dataclass
class Trace:
    """Result of following a straight displacement through the charts."""
    start: SurfacePoint
    displacement: Vec
    pieces: list[ChartSegment] = field(default_factory=list)
    crossings: list[tuple[int, int]] = field(default_factory=list)
    fraction: QuadNum = ZERO
    terminal: str = 'reached'
    end: Optional[SurfacePoint] = None
    cone_point: Optional[ConePoint] = None
    target_index: Optional[int] = None
    placement: Placement = field(default_factory=Placement.identity)


# ─── Surface ─────────────────────────────────────────────────

class HalfTranslationSurface:
    def __init__(self, polygons: Sequence[Polygon], gluings: Sequence[Gluing], d: int,
                 name: str = 'surface', transversals: Sequence[Transversal] = (),
                 automorphisms: Sequence[AutomorphismBlock] = (),
                 pieces: Optional[dict[int, tuple[int, ...]]] = None):
        self.name = name
        self.d = d
        self.polygons: tuple[Polygon, ...] = tuple(polygons)
        self.gluings: tuple[Gluing, ...] = tuple(gluings)
        self.transversals = {t.name: t for t in transversals}
        self.automorphisms = {a.name: a for a in automorphisms}
        self.pieces = pieces or {p.id: (p.id,) for p in polygons}
        self._partner: dict[tuple[int, int], tuple[int, int, Placement]] = {}
        self._index: dict[tuple[int, int], tuple[int, int]] = {}
        self._corner_cone: dict[tuple[int, int], int] = {}
        self._cycles: dict[tuple[int, int], list] = {}
        self._validate()

    # ─── Validation ───────────────────────────────────────────

    def _validate(self):
        for p in self.polygons:
            if len(p) < 3:
                raise SurfaceValidationError(f'polygon {p.id} has fewer than 3 vertices')
            n = len(p)
            for i in range(n):
                if orient(p.vertex(i - 1), p.vertex(i), p.vertex(i + 1)) < 0:
                    raise SurfaceValidationError(f'polygon {p.id} is not convex and counterclockwise at vertex {i}')
            if p.area().sign() <= 0:
                raise SurfaceValidationError(f'polygon {p.id} has non-positive area')

        for index, g in enumerate(self.gluings):
            for side, other, m in ((g.a, g.b, g.chart_map), (g.b, g.a, g.chart_map.inverse())):
                if side in self._partner:
                    raise SurfaceValidationError(f'edge {side[0]}.{side[1]} is glued twice')
                self._partner[side] = (other[0], other[1], m)
                self._index[side] = (index, 1 if side == g.a else -1)
            self._check_gluing(g)

        for p in self.polygons:
            for i in range(len(p)):
                if (p.id, i) not in self._partner:
                    raise SurfaceValidationError(f'edge {p.id}.{i} is not glued')

        self._check_connected()
        self.cone_points: tuple[ConePoint, ...] = self._compute_cone_points()
        lhs = sum(2 - c.k for c in self.cone_points)
        if lhs != 2 * self.euler_characteristic:
            raise SurfaceValidationError(
                f'Gauss–Bonnet fails: Σ(2π − θ) = {lhs}π but 2πχ = {2 * self.euler_characteristic}π')
        log.debug('surface %s: %d polygons, %d cone orbits, χ=%d', self.name,
                  len(self.polygons), len(self.cone_points), self.euler_characteristic)

    def _check_gluing(self, g: Gluing):
        pa, pb = self.polygons[g.a[0]], self.polygons[g.b[0]]
        ea, eb = pa.edge_vector(g.a[1]), pb.edge_vector(g.b[1])
        label = f'{g.a[0]}.{g.a[1]} ~ {g.b[0]}.{g.b[1]}'
        if ea.cross(eb):
            raise SurfaceValidationError(f'gluing {label}: edges are not parallel')
        expected = -ea if g.kind == TRANSLATION else ea
        if eb != expected:
            if eb.dot(eb) != ea.dot(ea):
                raise SurfaceValidationError(f'gluing {label}: edge lengths differ')
            raise SurfaceValidationError(f'gluing {label}: orientation incompatible with a {g.kind} gluing')
        va, _ = pa.edge(g.a[1])
        _, wb1 = pb.edge(g.b[1])
        if g.chart_map(va) != wb1:
            raise CoverConsistencyError(f'gluing {label}: chart map does not match edges')

    def _check_connected(self):
        seen = {0}
        stack = [0]
        while stack:
            p = stack.pop()
            for i in range(len(self.polygons[p])):
                q = self._partner[(p, i)][0]
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
        if len(seen) != len(self.polygons):
            raise SurfaceValidationError('gluing graph is disconnected')

    # ─── Edges and vertices ──────────────────────────────────

    def partner(self, poly: int, edge: int) -> tuple[int, int, Placement]:
        return self._partner[(poly, edge)]

    def chart_point(self, poly: int, z: Vec) -> SurfacePoint:
        """Point given in the coordinates of a declared (possibly split) polygon."""
        for piece in self.pieces.get(poly, ()):
            if in_convex(z, list(self.polygons[piece].vertices)):
                return SurfacePoint(piece, z)
        raise SurfaceValidationError(f'{z} is not in polygon {poly}')

    def glue_index(self, poly: int, edge: int) -> tuple[int, int]:
        """(gluing record index, +1 if this edge is the record's first edge else −1)."""
        if (poly, edge) not in self._index:
            raise KeyError((poly, edge))
        return self._index[(poly, edge)]

    def corner_cycle(self, poly: int, vertex: int) -> list[tuple[int, int, Placement]]:
        """Corners around a vertex orbit, counterclockwise, with frames into `poly`'s chart."""
        key = (poly, vertex)
        if key in self._cycles:
            return self._cycles[key]
        cycle = []
        p, i, frame = poly, vertex, Placement.identity()
        while True:
            cycle.append((p, i, frame))
            n = len(self.polygons[p])
            q, b, g = self.partner(p, (i - 1) % n)
            frame = frame.compose(g.inverse())
            p, i = q, b
            if (p, i) == key:
                break
            if len(cycle) > 4 * sum(len(x) for x in self.polygons):
                raise CoverConsistencyError(f'vertex walk from {key} does not close')
        self._cycles[key] = cycle
        return cycle

    def corner_rays(self, poly: int, vertex: int) -> tuple[Vec, Vec]:
        p = self.polygons[poly]
        v = p.vertex(vertex)
        return p.vertex(vertex + 1) - v, p.vertex(vertex - 1) - v

    def prongs(self, cone: ConePoint, direction: Vec) -> list[tuple[SurfacePoint, Vec]]:
        """Starts of the leaves leaving `cone` along ±direction, one per sector.

        Leaves that run along a polygon edge are not returned.
        """
        found = []
        for q, j in cone.corners:
            out_ray, in_ray = self.corner_rays(q, j)
            for w in (direction, -direction):
                if strictly_between_ccw(out_ray, in_ray, w):
                    found.append((SurfacePoint(q, self.polygons[q].vertex(j)), w))
        return found

    def _compute_cone_points(self) -> tuple[ConePoint, ...]:
        result = []
        for p in self.polygons:
            for i in range(len(p)):
                if (p.id, i) in self._corner_cone:
                    continue
                cycle = self.corner_cycle(p.id, i)
                rays = []
                for q, j, frame in cycle:
                    out_ray, in_ray = self.corner_rays(q, j)
                    if not rays:
                        rays.append(frame.direction(out_ray))
                    rays.append(frame.direction(in_ray))
                half_turns, landed = count_half_turns(rays)
                if not landed:
                    raise SurfaceValidationError(
                        f'cone angle at vertex {p.id}.{i} is not a multiple of π')
                cone = ConePoint(len(result), tuple((q, j) for q, j, _ in cycle), half_turns)
                for q, j, _ in cycle:
                    self._corner_cone[(q, j)] = cone.id
                result.append(cone)
        return tuple(result)

    def cone_at(self, poly: int, vertex: int) -> ConePoint:
        return self.cone_points[self._corner_cone[(poly, vertex)]]

    @property
    def singular_points(self) -> list[ConePoint]:
        return [c for c in self.cone_points if not c.is_regular]

    @property
    def P(self) -> list[ConePoint]:
        return [c for c in self.cone_points if c.k == 1]

    @property
    def euler_characteristic(self) -> int:
        vertices = len(set(self._corner_cone.values()))
        return vertices - len(self.gluings) + len(self.polygons)

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    @property
    def is_translation_surface(self) -> bool:
        return all(g.kind == TRANSLATION for g in self.gluings)

    def area(self) -> QuadNum:
        total = ZERO
        for p in self.polygons:
            total = total + p.area()
        return total

    def gauss_bonnet(self) -> dict:
        lhs = sum(2 - c.k for c in self.cone_points)
        return {
            'sumDefectPi': lhs,
            'twoPiChiPi': 2 * self.euler_characteristic,
            'holds': lhs == 2 * self.euler_characteristic,
            'chi': self.euler_characteristic,
        }

    # ─── Sampling ────────────────────────────────────────────

    def random_point(self, rng: np.random.Generator, denominator: int = 997) -> SurfacePoint:
        """Rational point strictly inside a uniformly chosen polygon."""
        poly = self.polygons[int(rng.integers(len(self.polygons)))]
        weights = [int(w) for w in rng.integers(1, denominator, size=len(poly))]
        total = sum(weights)
        x = ZERO
        y = ZERO
        for w, v in zip(weights, poly.vertices):
            x = x + v.x * Fraction(w, total)
            y = y + v.y * Fraction(w, total)
        return SurfacePoint(poly.id, Vec(x, y))

    # ─── Straight-line tracing ───────────────────────────────

    def _exit(self, poly: Polygon, z: Vec, w: Vec) -> tuple[QuadNum, list[int]]:
        best = None
        edges: list[int] = []
        for e in range(len(poly)):
            a, b = poly.edge(e)
            de = b - a
            c = de.cross(w)
            if c.sign() >= 0:
                continue
            t = -de.cross(z - a) / c
            if best is None or t < best:
                best, edges = t, [e]
            elif t == best:
                edges.append(e)
        if best is None:
            raise CurveError(f'no exit from polygon {poly.id}')
        return best, edges

    def _continue_through_vertex(self, poly: int, vertex: int, w: Vec, arriving: bool
                                 ) -> tuple[int, int, Vec, Placement]:
        """Corner of the orbit whose sector strictly contains direction w."""
        matches = []
        for q, j, frame in self.corner_cycle(poly, vertex):
            out_ray, in_ray = self.corner_rays(q, j)
            out_f, in_f = frame.direction(out_ray), frame.direction(in_ray)
            if (out_f.cross(w).sign() == 0 and out_f.dot(w).sign() > 0) or \
                    (in_f.cross(w).sign() == 0 and in_f.dot(w).sign() > 0):
                raise CurveError(f'trajectory runs along an edge at vertex {poly}.{vertex}')
            if strictly_between_ccw(out_f, in_f, w):
                matches.append((q, j, frame.inverse().direction(w), frame))
        if len(matches) != 1:
            raise CurveError(f'direction {w} is ambiguous at vertex {poly}.{vertex} '
                             f'({len(matches)} sectors{" on arrival" if arriving else ""})')
        return matches[0]

    def trace(self, start: SurfacePoint, displacement: Vec,
              targets: Sequence[ChartSegment] = (), max_steps: int = 1_000_000,
              stop_at_singular: bool = True) -> Trace:
        """Follow `displacement` (given in the start chart) straight through the surface.

        Stops early at singular cone points and, if `targets` are given, at
        the first point (after the start) lying on one of them.
        """
        result = Trace(start=start, displacement=displacement)
        poly_id, z, rem = start.poly, start.z, displacement
        placement = Placement.identity()
        done = ZERO
        if rem.is_zero():
            result.end = start
            return result

        vertex = self.polygons[poly_id].vertex_index(z)
        if vertex is not None and not strictly_between_ccw(*self.corner_rays(poly_id, vertex), rem):
            q, j, rem_q, frame = self._continue_through_vertex(poly_id, vertex, rem, False)
            placement = placement.compose(frame)
            poly_id, z, rem = q, self.polygons[q].vertex(j), rem_q

        for _ in range(max_steps):
            poly = self.polygons[poly_id]
            t, exit_edges = self._exit(poly, z, rem)
            finished = t >= 1
            t_end = ONE if finished else t
            end = z + rem.scale(t_end)

            hit = self._first_target(poly_id, z, end, targets)
            if hit is not None:
                s, idx, point = hit
                result.pieces.append(ChartSegment(poly_id, z, point))
                result.fraction = done + s * t_end * (ONE - done)
                result.terminal = 'target'
                result.target_index = idx
                result.end = SurfacePoint(poly_id, point)
                result.placement = placement
                return result

            if end != z:
                result.pieces.append(ChartSegment(poly_id, z, end))
            done = done + t_end * (ONE - done)
            if finished:
                result.fraction = ONE
                result.end = SurfacePoint(poly_id, end)
                result.placement = placement
                return result

            rem = rem.scale(ONE - t)
            vertex = poly.vertex_index(end)
            if vertex is not None:
                cone = self.cone_at(poly_id, vertex)
                if not cone.is_regular and stop_at_singular:
                    result.fraction = done
                    result.terminal = 'cone'
                    result.cone_point = cone
                    result.end = SurfacePoint(poly_id, end)
                    result.placement = placement
                    return result
                q, j, rem_q, frame = self._continue_through_vertex(poly_id, vertex, rem, True)
                placement = placement.compose(frame)
                poly_id, z, rem = q, self.polygons[q].vertex(j), rem_q
                continue

            edge = exit_edges[0]
            q, f, g = self.partner(poly_id, edge)
            result.crossings.append((poly_id, edge))
            placement = placement.compose(g.inverse())
            poly_id, z, rem = q, g(end), g.direction(rem)

            for idx, tgt in enumerate(targets):
                if tgt.poly == poly_id and on_segment(z, tgt.start, tgt.end):
                    result.fraction = done
                    result.terminal = 'target'
                    result.target_index = idx
                    result.end = SurfacePoint(poly_id, z)
                    result.placement = placement
                    return result
        raise CapExceeded(f'trace from {start} did not finish', max_steps)

    @staticmethod
    def _first_target(poly_id: int, z: Vec, end: Vec, targets: Sequence[ChartSegment]):
        best = None
        for idx, tgt in enumerate(targets):
            if tgt.poly != poly_id:
                continue
            hit = segment_intersection(z, end, tgt.start, tgt.end)
            if hit is None:
                continue
            candidates = [hit[1]] if hit[0] == 'point' else [hit[1], hit[2]]
            for point in candidates:
                if point == z:
                    continue
                s = segment_param(point, z, end)
                if best is None or s < best[0]:
                    best = (s, idx, point)
        return best


# ─── Surface documents ─────────────────────────────────────────

_GLUE = re.compile(r'^glue\s*\(\s*(\d+)\.(\d+)\s*,\s*(\d+)\.(\d+)\s*,\s*(translation|flip)\s*\)$')
_VERTEX = re.compile(r'^\(\s*([^,\s]+)\s*,\s*([^,\s]+)\s*\)$')
_TRANSVERSAL = re.compile(
    r'^transversal\s+(\w+)\s*\(\s*(\d+)\s*,\s*([^,\s]+)\s*,\s*([^,\s]+)\s*,\s*([^,\s]+)\s*\)$')
_ANCHOR = re.compile(
    r'^anchor\s*\(\s*(\d+)\s*,\s*([^,\s]+)\s*,\s*([^,\s]+)\s*\)\s*->\s*'
    r'\(\s*(\d+)\s*,\s*([^,\s]+)\s*,\s*([^,\s]+)\s*\)$')


def _chart_map(pa: Polygon, ea: int, pb: Polygon, eb: int, kind: str) -> Placement:
    va, _ = pa.edge(ea)
    _, wb1 = pb.edge(eb)
    if kind == TRANSLATION:
        return Placement(1, wb1 - va)
    return Placement(-1, wb1 + va)


def _is_convex(vertices: Sequence[Vec]) -> bool:
    n = len(vertices)
    return all(orient(vertices[i - 1], vertices[i], vertices[(i + 1) % n]) >= 0 for i in range(n))


def _is_simple(vertices: Sequence[Vec]) -> bool:
    """No two edges meet except consecutive ones at their shared vertex."""
    n = len(vertices)
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        if a == b:
            return False
        for j in range(i + 1, n):
            c, d = vertices[j], vertices[(j + 1) % n]
            hit = segment_intersection(a, b, c, d)
            if hit is None:
                continue
            if j == i + 1 and hit == ('point', b):
                continue
            if i == 0 and j == n - 1 and hit == ('point', a):
                continue
            return False
    return True


def _ear_triangles(vertices: Sequence[Vec], poly: int) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple counterclockwise polygon (vertex indices)."""
    idx = list(range(len(vertices)))
    out = []
    while len(idx) > 3:
        for k in range(len(idx)):
            i, j, m = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            tri = [vertices[i], vertices[j], vertices[m]]
            if orient(*tri) <= 0:
                continue
            if any(in_convex(vertices[o], tri) for o in idx if o not in (i, j, m)):
                continue
            out.append((i, j, m))
            idx.pop(k)
            break
        else:
            raise SurfaceValidationError(f'polygon {poly} has no ear to clip')
    if orient(*(vertices[i] for i in idx)) <= 0:
        raise SurfaceValidationError(f'polygon {poly} leaves a degenerate triangle')
    out.append((idx[0], idx[1], idx[2]))
    return out


def _split_nonconvex(polygons: Sequence[Sequence[Vec]], glue: Sequence[tuple]):
    """Replace every non-convex polygon by triangles glued along their diagonals.

    Polygon i keeps id i for its first triangle; further triangles are
    appended. Returns (vertex lists, glue records, pieces, edge map).
    """
    out = [list(vs) for vs in polygons]
    pieces = {i: (i,) for i in range(len(polygons))}
    edge_map: dict[tuple[int, int], tuple[int, int]] = {}
    diagonals = []
    for i, vs in enumerate(polygons):
        if len(vs) < 3 or _is_convex(vs):
            continue
        if not _is_simple(vs):
            raise SurfaceValidationError(f'polygon {i} is not simple')
        if sum((a.cross(b) for a, b in zip(vs, list(vs[1:]) + [vs[0]])), ZERO).sign() <= 0:
            raise SurfaceValidationError(f'polygon {i} is not counterclockwise')
        n = len(vs)
        ids = []
        sides: dict[tuple[int, int], tuple[int, int]] = {}
        for t, tri in enumerate(_ear_triangles(vs, i)):
            pid = i if t == 0 else len(out)
            if t == 0:
                out[i] = [vs[k] for k in tri]
            else:
                out.append([vs[k] for k in tri])
            ids.append(pid)
            for k in range(3):
                sides[(tri[k], tri[(k + 1) % 3])] = (pid, k)
        for (u, v), side in sides.items():
            if v == (u + 1) % n:
                edge_map[(i, u)] = side
            elif u < v:
                twin = sides[(v, u)]
                diagonals.append((side[0], side[1], twin[0], twin[1], TRANSLATION))
        pieces[i] = tuple(ids)
        log.debug('polygon %d split into %d triangles', i, len(ids))
    remapped = []
    for pa, ea, pb, eb, kind in glue:
        pa, ea = edge_map.get((pa, ea), (pa, ea))
        pb, eb = edge_map.get((pb, eb), (pb, eb))
        remapped.append((pa, ea, pb, eb, kind))
    return out, remapped + diagonals, pieces, edge_map


def build_surface(polygons: Sequence[Sequence[Vec]], glue: Sequence[tuple], d: int,
                  name: str = 'surface', transversals: Sequence[Transversal] = (),
                  automorphisms: Sequence[AutomorphismBlock] = ()) -> HalfTranslationSurface:
    """Assemble a surface from vertex lists and (poly, edge, poly, edge, kind) records.

    Simple non-convex polygons are split into convex triangles; transversals
    and anchors given in a split polygon move to the triangle containing them.
    """
    for pa, ea, pb, eb, _ in glue:
        if pa >= len(polygons) or pb >= len(polygons) or ea >= len(polygons[pa]) or eb >= len(polygons[pb]):
            raise SurfaceValidationError(f'gluing {pa}.{ea} ~ {pb}.{eb} names a missing edge')
    polygons, glue, pieces, edge_map = _split_nonconvex(polygons, glue)
    polys = [Polygon(i, tuple(vs)) for i, vs in enumerate(polygons)]
    gluings = [Gluing((pa, ea), (pb, eb), kind, _chart_map(polys[pa], ea, polys[pb], eb, kind))
               for pa, ea, pb, eb, kind in glue]
    if edge_map:
        transversals = [_relocate_transversal(t, pieces, polys) for t in transversals]
        automorphisms = [replace(a, anchor_from=_relocate_point(a.anchor_from, pieces, polys),
                                 anchor_to=_relocate_point(a.anchor_to, pieces, polys))
                         for a in automorphisms]
    return HalfTranslationSurface(polys, gluings, d, name, transversals, automorphisms, pieces)


def _relocate_point(p: SurfacePoint, pieces: dict, polys: Sequence[Polygon]) -> SurfacePoint:
    for piece in pieces.get(p.poly, ()):
        if in_convex(p.z, list(polys[piece].vertices)):
            return SurfacePoint(piece, p.z)
    raise SurfaceValidationError(f'{p} is outside its polygon')


def _relocate_transversal(t: Transversal, pieces: dict, polys: Sequence[Polygon]) -> Transversal:
    seg = t.segment
    for piece in pieces.get(t.poly, ()):
        vs = list(polys[piece].vertices)
        if in_convex(seg.start, vs) and in_convex(seg.end, vs):
            return replace(t, poly=piece)
    raise SurfaceValidationError(f'transversal {t.name} crosses a diagonal of polygon {t.poly}')


def load_surface(document: str, source: str = '<surface>') -> HalfTranslationSurface:
    """Parse a surface document (see docs/surface_format.md) and validate it."""
    d: Optional[int] = None
    name = source
    polygons: dict[int, list[Vec]] = {}
    glue: list[tuple] = []
    transversals: list[Transversal] = []
    autos: list[AutomorphismBlock] = []
    current_poly: Optional[int] = None
    current_auto: Optional[dict] = None

    def num(text: str, line: int) -> QuadNum:
        if d is None:
            raise SurfaceFormatError('number before the field header', line, source)
        try:
            return parse(text, d)
        except Exception as e:
            raise SurfaceFormatError(str(e), line, source) from e

    def close_auto(line: int):
        nonlocal current_auto
        if current_auto is None:
            return
        if 'matrix' not in current_auto or 'anchor' not in current_auto:
            raise SurfaceFormatError(f"automorphism {current_auto['name']} needs matrix and anchor", line, source)
        autos.append(AutomorphismBlock(current_auto['name'], current_auto['matrix'],
                                       current_auto['anchor'][0], current_auto['anchor'][1],
                                       tuple(current_auto.get('permutation', ()))))
        current_auto = None

    lines = document.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split('#', 1)[0].strip()
        if not text:
            continue
        head = text.split()[0]
        if head == 'field':
            try:
                d = int(text.split()[1])
            except (IndexError, ValueError):
                raise SurfaceFormatError('field header needs an integer d', lineno, source)
            continue
        if head == 'name':
            name = text[4:].strip()
            continue
        if head == 'polygon':
            close_auto(lineno)
            try:
                current_poly = int(text.split()[1])
            except (IndexError, ValueError):
                raise SurfaceFormatError('polygon block needs an integer id', lineno, source)
            if current_poly in polygons:
                raise SurfaceFormatError(f'polygon {current_poly} declared twice', lineno, source)
            polygons[current_poly] = []
            continue
        if head == 'glue':
            close_auto(lineno)
            current_poly = None
            m = _GLUE.match(text)
            if not m:
                raise SurfaceFormatError(f'malformed glue record {text!r}', lineno, source)
            glue.append((int(m[1]), int(m[2]), int(m[3]), int(m[4]), m[5]))
            continue
        if head == 'transversal':
            close_auto(lineno)
            current_poly = None
            m = _TRANSVERSAL.match(text)
            if not m:
                raise SurfaceFormatError(f'malformed transversal {text!r}', lineno, source)
            transversals.append(Transversal(m[1], int(m[2]), num(m[3], lineno), num(m[4], lineno),
                                            num(m[5], lineno)))
            continue
        if head == 'automorphism':
            close_auto(lineno)
            current_poly = None
            current_auto = {'name': text.split()[1]}
            continue
        if current_auto is not None:
            if head == 'matrix':
                parts = text.split()[1:]
                if len(parts) != 4:
                    raise SurfaceFormatError('matrix needs four entries', lineno, source)
                current_auto['matrix'] = tuple(num(p, lineno) for p in parts)
            elif head == 'anchor':
                m = _ANCHOR.match(text)
                if not m:
                    raise SurfaceFormatError(f'malformed anchor {text!r}', lineno, source)
                current_auto['anchor'] = (
                    SurfacePoint(int(m[1]), Vec(num(m[2], lineno), num(m[3], lineno))),
                    SurfacePoint(int(m[4]), Vec(num(m[5], lineno), num(m[6], lineno))))
            elif head == 'permutation':
                pairs = []
                for token in text.split()[1:]:
                    src, _, dst = token.partition('->')
                    pairs.append((int(src), int(dst)))
                current_auto['permutation'] = pairs
            else:
                raise SurfaceFormatError(f'unexpected {head!r} in automorphism block', lineno, source)
            continue
        if current_poly is not None:
            m = _VERTEX.match(text)
            if not m:
                raise SurfaceFormatError(f'malformed vertex {text!r}', lineno, source)
            polygons[current_poly].append(Vec(num(m[1], lineno), num(m[2], lineno)))
            continue
        raise SurfaceFormatError(f'unexpected line {text!r}', lineno, source)
    close_auto(len(lines))

    if d is None:
        raise SurfaceFormatError('missing field header', None, source)
    if sorted(polygons) != list(range(len(polygons))):
        raise SurfaceFormatError('polygon ids must be 0..n-1', None, source)
    for t in transversals:
        if t.poly not in polygons:
            raise SurfaceFormatError(f'transversal {t.name} names a missing polygon', None, source)
    surface = build_surface([polygons[i] for i in range(len(polygons))], glue, d, name,
                            transversals, autos)
    log.info('loaded %s: χ=%d, %d singular points', name, surface.euler_characteristic,
             len(surface.singular_points))
    return surface


def cone_points(s: HalfTranslationSurface) -> list[ConePoint]:
    """Singular cone points (angle ≠ 2π); regular vertices stay internal."""
    return s.singular_points


# ─── Resolving cover ──────────────────────────────────────────

@dataclass(frozen=True)
class ResolvingCover:
    cover: HalfTranslationSurface
    base: HalfTranslationSurface
    degree: int
    sheets: tuple[tuple[int, int], ...]
    branch_points: tuple[ConePoint, ...]

    def lift(self, point: SurfacePoint, sheet: int = 0) -> SurfacePoint:
        if self.degree == 1:
            return point
        z = point.z if sheet == 0 else -point.z
        return SurfacePoint(2 * point.poly + sheet, z)

    def project(self, point: SurfacePoint) -> SurfacePoint:
        if self.degree == 1:
            return point
        base_poly, sheet = self.sheets[point.poly]
        return SurfacePoint(base_poly, point.z if sheet == 0 else -point.z)

    def lift_segment(self, seg: ChartSegment, sheet: int) -> ChartSegment:
        if self.degree == 1:
            return seg
        sign = 1 if sheet == 0 else -1
        return ChartSegment(2 * seg.poly + sheet, seg.start.scale(sign), seg.end.scale(sign))

    def riemann_hurwitz(self) -> dict:
        expected = self.degree * self.base.euler_characteristic - sum(
            (self.degree - 1) for _ in self.branch_points)
        return {'chiCover': self.cover.euler_characteristic, 'expected': expected,
                'holds': expected == self.cover.euler_characteristic}


def build_resolving_cover(s: HalfTranslationSurface) -> ResolvingCover:
    """Orientation double cover; identity when the surface is already a translation surface."""
    branch = tuple(c for c in s.cone_points if c.k % 2 == 1)
    if s.is_translation_surface or not branch:
        if branch:
            raise CoverConsistencyError('odd cone angles on a translation surface')
        return ResolvingCover(s, s, 1, tuple((p.id, 0) for p in s.polygons), ())

    polygons = []
    sheets = []
    for p in s.polygons:
        for sheet in (0, 1):
            polygons.append(tuple(v if sheet == 0 else -v for v in p.vertices))
            sheets.append((p.id, sheet))
    glue = []
    for g in s.gluings:
        (pa, ea), (pb, eb) = g.a, g.b
        for sheet in (0, 1):
            other = sheet if g.kind == TRANSLATION else 1 - sheet
            glue.append((2 * pa + sheet, ea, 2 * pb + other, eb, TRANSLATION))
    cover_surface = build_surface(polygons, glue, s.d, f'{s.name} (resolving cover)')
    cover = ResolvingCover(cover_surface, s, 2, tuple(sheets), branch)
    rh = cover.riemann_hurwitz()
    if not rh['holds']:
        raise CoverConsistencyError(f"Riemann–Hurwitz fails: {rh}")
    if cover_surface.P:
        raise CoverConsistencyError('resolving cover still has angle-π points')
    log.info('resolving cover of %s: degree 2, χ̂=%d, %d branch points', s.name,
             cover_surface.euler_characteristic, len(branch))
    return cover
