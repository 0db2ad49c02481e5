"""
Affine automorphisms declared in surface files, their action on curves, and
the quasi-axis experiment.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from backend.core.errors import ConePointHit, ConfigError, CoverConsistencyError, CurveError, SurfaceValidationError
from backend.core.geom import cover_identity, develop
from backend.core.numerics import ZERO, Placement, QuadNum, Vec, approx
from backend.core.surface import AutomorphismBlock, ChartSegment, HalfTranslationSurface, SurfacePoint
from backend.core.utils import in_convex, tagged_frame
from backend.metrics.curves import PLCurve, point_key, torus_basis
from backend.metrics.graphdist import (
    DistanceBound, Slope, development_extent, farey_bounds, farey_distance, fine_distance_bounds,
    monotone_after,
)

log = logging.getLogger(__name__)


def _centroid(s: HalfTranslationSurface, poly: int) -> Vec:
    vs = s.polygons[poly].vertices
    return Vec(sum((v.x for v in vs), ZERO) / len(vs), sum((v.y for v in vs), ZERO) / len(vs))


def _tree_route(s: HalfTranslationSurface, source: int, goal: int) -> list[tuple[int, int]]:
    """(polygon, edge) crossings along the dual BFS tree from `source` to `goal`."""
    parent: dict[int, Optional[tuple[int, int]]] = {source: None}
    queue = deque([source])
    while queue:
        p = queue.popleft()
        if p == goal:
            break
        for e in range(len(s.polygons[p])):
            q, _, _ = s.partner(p, e)
            if q not in parent:
                parent[q] = (p, e)
                queue.append(q)
    if goal not in parent:
        raise CoverConsistencyError(f'polygon {goal} unreachable from {source}')
    route = []
    at = goal
    while parent[at] is not None:
        route.append(parent[at])
        at = parent[at][0]
    return route[::-1]


@dataclass
class AffineAuto:
    surface: HalfTranslationSurface
    name: str
    matrix: tuple[QuadNum, QuadNum, QuadNum, QuadNum]
    anchor_from: SurfacePoint
    anchor_to: SurfacePoint
    permutation: dict[int, int] = field(default_factory=dict)
    _base_cache: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def from_block(cls, s: HalfTranslationSurface, block: AutomorphismBlock) -> 'AffineAuto':
        return cls(s, block.name, block.matrix, block.anchor_from, block.anchor_to, dict(block.permutation))

    @classmethod
    def named(cls, s: HalfTranslationSurface, name: str) -> 'AffineAuto':
        if name not in s.automorphisms:
            raise ConfigError('automorphism', f'{s.name} declares no automorphism {name!r}')
        return cls.from_block(s, s.automorphisms[name])

    # ─── Linear data ──────────────────────────────────────────

    @property
    def determinant(self) -> QuadNum:
        a, b, c, d = self.matrix
        return a * d - b * c

    @property
    def trace(self) -> QuadNum:
        return self.matrix[0] + self.matrix[3]

    @property
    def is_anosov(self) -> bool:
        return abs(self.trace) > 2

    @property
    def expansion(self) -> Optional[QuadNum]:
        """Exact stretch factor when the matrix is triangular, else None."""
        a, b, c, d = self.matrix
        if b.sign() == 0 or c.sign() == 0:
            return max(abs(a), abs(d))
        return None

    def expansion_estimate(self) -> float:
        m = np.array([[float(x) for x in self.matrix[:2]], [float(x) for x in self.matrix[2:]]])
        return float(max(abs(np.linalg.eigvals(m))))

    def linear(self, v: Vec) -> Vec:
        a, b, c, d = self.matrix
        return Vec(a * v.x + b * v.y, c * v.x + d * v.y)

    # ─── Action on points and curves ──────────────────────────

    def _base(self) -> tuple[Vec, SurfacePoint, Placement]:
        """Interior base point of the anchor polygon, with its image and image frame.

        The first leg leaves the anchor vertex; its image must not run along
        an edge, so the centroid is tried first and then points between the
        centroid and the other vertices.
        """
        if self._base_cache is None:
            s = self.surface
            start = self.anchor_from
            c = _centroid(s, start.poly)
            others = [v for v in s.polygons[start.poly].vertices if v != start.z]
            candidates = [c] + [c + (v - c).scale(w) for w in (Fraction(1, 2), Fraction(1, 3)) for v in others]
            for point in candidates:
                try:
                    here, frame = self._push(self.anchor_to, Placement.identity(),
                                             self.linear(point - start.z), [])
                except (CurveError, ConePointHit) as e:
                    log.debug('%s: base leg to %s rejected: %s', self.name, point, e)
                    continue
                self._base_cache = (point, here, frame)
                break
            else:
                raise CoverConsistencyError(f'{self.name}: every leg from the anchor runs along an edge')
        return self._base_cache

    def _source_legs(self, goal: SurfacePoint) -> tuple[list[Vec], Placement]:
        """Displacements from the base point to `goal` through polygon centroids, in the anchor frame."""
        s = self.surface
        here = self._base()[0]
        frame = Placement.identity()
        legs = []
        for poly, edge in _tree_route(s, self.anchor_from.poly, goal.poly):
            c = _centroid(s, poly)
            a, b = s.polygons[poly].edge(edge)
            mid = (a + b).scale(Fraction(1, 2))
            legs += [frame.direction(c - here), frame.direction(mid - c)]
            _, _, g = s.partner(poly, edge)
            frame = frame.compose(g.inverse())
            here = g(mid)
        c = _centroid(s, goal.poly)
        legs += [frame.direction(c - here), frame.direction(goal.z - c)]
        return [v for v in legs if not v.is_zero()], frame

    def _push(self, point: SurfacePoint, frame: Placement, displacement: Vec, pieces: list
              ) -> tuple[SurfacePoint, Placement]:
        s = self.surface
        trace = s.trace(point, frame.inverse().direction(displacement))
        if trace.terminal == 'cone':
            raise ConePointHit(f'image under {self.name} runs into a cone point', trace.cone_point)
        pieces.extend(trace.pieces)
        return trace.end, frame.compose(trace.placement)

    def _map_with_frames(self, p: SurfacePoint) -> tuple[SurfacePoint, Placement, Placement]:
        legs, source_frame = self._source_legs(p)
        _, here, frame = self._base()
        for v in legs:
            here, frame = self._push(here, frame, self.linear(v), [])
        return here, frame, source_frame

    def map_point(self, p: SurfacePoint) -> SurfacePoint:
        return self._map_with_frames(p)[0]

    def apply(self, c: PLCurve) -> PLCurve:
        """Image curve, traced exactly piece by piece from the image of its first point.

        Simplicity carries over from c, so only closing up is checked.
        """
        s = self.surface
        if c.surface is not s:
            raise ConfigError('automorphism', f'{self.name} acts on {s.name}, not {c.surface.name}')
        first = SurfacePoint(c.pieces[0].poly, c.pieces[0].start)
        here, frame, source_frame = self._map_with_frames(first)
        start_key = point_key(s, here.poly, here.z)
        dev = develop(c.pieces, cover_identity(s), closed=True)
        pieces: list[ChartSegment] = []
        for piece, (_, placement) in zip(c.pieces, dev.steps):
            w = self.linear(source_frame.direction(placement.direction(piece.vector)))
            here, frame = self._push(here, frame, w, pieces)
        if point_key(s, here.poly, here.z) != start_key:
            raise CoverConsistencyError(f'image of {c.name or "curve"} under {self.name} does not close')
        return PLCurve(s, tuple(_merge_collinear(pieces)), f'{self.name}({c.name})')

    def iterate(self, c: PLCurve, n: int) -> list[PLCurve]:
        out = [c]
        for _ in range(n):
            out.append(self.apply(out[-1]))
        return out

    # ─── Verification ─────────────────────────────────────────

    def verify(self, strict: bool = True) -> dict:
        """Determinant, gluing closure, cone-point and polygon-permutation checks."""
        s = self.surface
        violations = []
        det = self.determinant
        if det != 1 and det != -1:
            violations.append(f'determinant {approx(det, 6)} is not ±1')
        for idx, glue in enumerate(s.gluings):
            (p, e), (q, f) = glue.a, glue.b
            a, b = s.polygons[p].edge(e)
            mid = (a + b).scale(Fraction(1, 2))
            _, _, g = s.partner(p, e)
            try:
                one = self.map_point(SurfacePoint(p, mid))
                other = self.map_point(SurfacePoint(q, g(mid)))
            except (CurveError, ConePointHit) as err:
                violations.append(f'gluing {idx} ({p}.{e}, {q}.{f}): {err}')
                continue
            if point_key(s, one.poly, one.z) != point_key(s, other.poly, other.z):
                violations.append(f'gluing {idx} ({p}.{e}, {q}.{f}) is not respected')
        for cone in s.cone_points:
            poly, vertex = cone.corners[0]
            try:
                image = self.map_point(SurfacePoint(poly, s.polygons[poly].vertex(vertex)))
            except (CurveError, ConePointHit) as err:
                violations.append(f'cone point {cone.id}: {err}')
                continue
            j = s.polygons[image.poly].vertex_index(image.z)
            if j is None or s.cone_at(image.poly, j).k != cone.k:
                violations.append(f'cone point {cone.id} ({cone.angle_label}) is not sent to an equal cone point')
        for src, dst in sorted(self.permutation.items()):
            image = self.map_point(SurfacePoint(src, _centroid(s, src)))
            if image.poly != dst and not in_convex(image.z, s.polygons[dst].vertices):
                violations.append(f'polygon {src} is not sent into polygon {dst}')
        report = {'name': self.name, 'determinant': det, 'trace': self.trace,
                  'anosov': self.is_anosov, 'expansion': self.expansion,
                  'violations': violations, 'valid': not violations}
        if strict and violations:
            raise SurfaceValidationError(f'automorphism {self.name}: {violations[0]}')
        return report


def _merge_collinear(pieces: list[ChartSegment]) -> list[ChartSegment]:
    out: list[ChartSegment] = []
    for piece in pieces:
        if out and out[-1].poly == piece.poly and out[-1].end == piece.start \
                and out[-1].vector.cross(piece.vector).sign() == 0:
            out[-1] = ChartSegment(piece.poly, out[-1].start, piece.end)
        else:
            out.append(piece)
    return out


# ─── Torus classes ───────────────────────────────────────────

def _coordinates(v: Vec, h1: Vec, h2: Vec) -> tuple[QuadNum, QuadNum]:
    det = h1.cross(h2)
    return v.cross(h2) / det, h1.cross(v) / det


def _as_int(x: QuadNum) -> int:
    if not x.is_rational or x.a.denominator != 1:
        raise CoverConsistencyError(f'{approx(x, 6)} is not an integer coordinate')
    return int(x.a)


def torus_class(curve: PLCurve) -> tuple[int, int]:
    """(p, q) with holonomy p·h1 + q·h2 on a one-parallelogram torus."""
    h1, h2 = torus_basis(curve.surface)
    hol = curve.development().holonomy
    p, q = _coordinates(hol.shift, h1, h2)
    return _as_int(p), _as_int(q)


def homology_matrix(f: AffineAuto) -> tuple[tuple[int, int], tuple[int, int]]:
    """Integer matrix of f on (h1, h2) coordinates; columns are the images of h1 and h2."""
    h1, h2 = torus_basis(f.surface)
    p1, q1 = _coordinates(f.linear(h1), h1, h2)
    p2, q2 = _coordinates(f.linear(h2), h1, h2)
    return (_as_int(p1), _as_int(p2)), (_as_int(q1), _as_int(q2))


def matrix_power_class(f: AffineAuto, cls: tuple[int, int], n: int) -> tuple[int, int]:
    (a, b), (c, d) = homology_matrix(f)
    p, q = cls
    for _ in range(n):
        p, q = a * p + b * q, c * p + d * q
    return p, q


# ─── Axis experiment ─────────────────────────────────────────

@dataclass
class AxisOrbit:
    base: PLCurve
    records: pd.DataFrame
    fit: dict
    n: int
    iterates: list[PLCurve] = field(default_factory=list)
    widths: list[QuadNum] = field(default_factory=list)

    @property
    def width_ratio(self) -> Optional[QuadNum]:
        """Common ratio width(C_i+1) / width(C_i), if there is one."""
        ratios = {b / a for a, b in zip(self.widths, self.widths[1:]) if a.sign() > 0}
        return ratios.pop() if len(ratios) == 1 else None

    @property
    def signature(self) -> str:
        lowers = self.records['distanceLower']
        if (lowers == 0).all() and (self.records['distanceUpper'] == 0).all():
            return 'elliptic'
        return 'hyperbolic' if self.fit['slope'] > 0 and self.fit['rSquared'] > 0.5 else 'bounded'

    def to_dict(self) -> dict:
        return {'base': self.base.name, 'iterates': self.n,
                'signature': self.signature, 'fit': self.fit, 'widthRatio': self.width_ratio,
                'records': self.records.to_dict(orient='records')}


def _torus_rows(f: AffineAuto, c0: PLCurve, n: int) -> list[dict]:
    """Orbit of a straight loop on a one-parallelogram torus, tracked by start point and class.

    f^i(C_0) is the straight loop through f^i(x_0) with holonomy M^i·hol(C_0);
    it equals C_0 exactly when the classes agree and f^i(x_0) lies on C_0.
    """
    h1, h2 = torus_basis(f.surface)
    cell = h1.cross(h2)
    start = SurfacePoint(c0.pieces[0].poly, c0.pieces[0].start)
    hol0 = c0.development().holonomy.shift
    cls0 = torus_class(c0)
    point, hol, cls = start, hol0, cls0
    rows = []
    for i in range(n + 1):
        if i:
            point, hol, cls = f.map_point(point), f.linear(hol), matrix_power_class(f, cls, 1)
        offset = (point.z - start.z).cross(hol0) / cell
        on_base = offset.is_rational and offset.a.denominator == 1
        if cls in (cls0, (-cls0[0], -cls0[1])) and on_base:
            bound = DistanceBound(0, 0, ('identical',))
        else:
            d = farey_distance(Slope.of(*cls), Slope.of(*cls0))
            bound = farey_bounds(d, abs(cls[0] * cls0[1] - cls[1] * cls0[0]) <= 1)
        rows.append({'iterate': i, 'class': str(cls), 'size': max(abs(hol.x), abs(hol.y)),
                     'width': abs(hol.x), 'distanceLower': bound.lower, 'distanceUpper': bound.upper,
                     'methods': ','.join(bound.methods)})
        log.debug('iterate %d: class %s, distance [%d, %d]', i, cls, bound.lower, bound.upper)
    return rows


def _traced_rows(f: AffineAuto, c0: PLCurve, n: int, jobs: int = 1) -> tuple[list[dict], list[PLCurve]]:
    orbit = f.iterate(c0, n)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        profiles = list(pool.map(lambda c: (development_extent(c), fine_distance_bounds(c, c0)), orbit))
    rows = []
    for i, (c, ((size, width), bound)) in enumerate(zip(orbit, profiles)):
        rows.append({'iterate': i, 'pieces': len(c), 'size': size, 'width': width,
                     'distanceLower': bound.lower, 'distanceUpper': bound.upper,
                     'methods': ','.join(bound.methods)})
        log.debug('iterate %d: %d pieces, distance [%d, %d]', i, len(c), bound.lower, bound.upper)
    return rows, orbit


def axis_experiment(f: AffineAuto, c0: PLCurve, n: int, jobs: int = 1) -> AxisOrbit:
    """Orbit C_i = f^i(C_0) with distance lower bounds from C_0 and a linear fit in i.

    On a one-parallelogram torus the orbit is followed through the integer
    action on classes; elsewhere every iterate is traced and profiled on
    `jobs` worker threads.
    """
    if n < 1:
        raise ConfigError('iterates', 'must be at least 1')
    s = f.surface
    if len(s.polygons) == 1 and s.genus == 1 and not s.singular_points:
        rows, orbit = _torus_rows(f, c0, n), []
    else:
        rows, orbit = _traced_rows(f, c0, n, jobs)
    widths = [r['width'] for r in rows]
    records = tagged_frame(rows, {'size': 'exact', 'width': 'exact', 'distanceLower': 'interval-lower',
                                  'distanceUpper': 'interval-upper'})

    fit = {'slope': 0.0, 'intercept': float(records['distanceLower'].iloc[0]), 'rSquared': 0.0}
    if records['distanceLower'].nunique() > 1:
        result = stats.linregress(records['iterate'], records['distanceLower'])
        fit = {'slope': round(float(result.slope), 6), 'intercept': round(float(result.intercept), 6),
               'rSquared': round(float(result.rvalue) ** 2, 6)}
    fit['monotoneAfter'] = monotone_after(records['distanceLower'].tolist())
    return AxisOrbit(c0, records, fit, n, orbit, widths)
