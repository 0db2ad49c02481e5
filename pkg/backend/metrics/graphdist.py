"""
Distance oracles and convergence certificates on the fine curve graph.

The torus has an exact oracle (Farey distance of isotopy classes, widened by
the pushoff calibration). Every other surface only gets bounds, each carrying
the tags of the methods that produced it.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import pandas as pd
from scipy import stats

from backend.core.errors import ConfigError, CurveError, LabError, StuckSurgery
from backend.core.geom import cover_identity, develop, lift_to_cover
from backend.core.numerics import ONE, ZERO, QuadNum, Vec, approx, parse, render
from backend.core.surface import HalfTranslationSurface, ResolvingCover, build_resolving_cover
from backend.core.utils import segment_intersection, tagged_frame
from backend.metrics.curves import (
    PLCurve, bicorn_path, homology_class, intersections, point_key, straight_loop,
)
from backend.metrics.flow import LeafSegment, close_to_curve

log = logging.getLogger(__name__)

# Farey distance of isotopy classes vs. fine distance: slight pushoffs cost one step at each end.
PUSHOFF_CALIBRATION = 2


# ─── Slopes and the Farey graph ──────────────────────────────

@dataclass(frozen=True, order=True)
class Slope:
    p: int
    q: int

    def __post_init__(self):
        if math.gcd(self.p, self.q) != 1:
            raise ConfigError('slope', f'{self.p}/{self.q} is not in lowest terms')
        if self.q < 0 or (self.q == 0 and self.p != 1):
            raise ConfigError('slope', f'{self.p}/{self.q} is not in canonical sign')

    @classmethod
    def of(cls, p: int, q: int) -> 'Slope':
        g = math.gcd(p, q)
        if g == 0:
            raise ConfigError('slope', '0/0 is not a slope')
        p, q = p // g, q // g
        if q < 0 or (q == 0 and p < 0):
            p, q = -p, -q
        return cls(p, q)

    @property
    def height(self) -> int:
        return max(abs(self.p), self.q)

    def adjacent(self, other: 'Slope') -> bool:
        return abs(self.p * other.q - self.q * other.p) == 1

    def __str__(self):
        return f'{self.p}/{self.q}'


INFINITY = Slope(1, 0)


def _bezout(a: int, b: int) -> tuple[int, int]:
    """(x, y) with a·x + b·y = gcd(a, b)."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        k, r = divmod(a, b)
        a, b = b, r
        x0, x1 = x1, x0 - k * x1
        y0, y1 = y1, y0 - k * y1
    if a < 0:
        return -x0, -y0
    return x0, y0


def _to_infinity(base: Slope, other: Slope) -> Slope:
    """Image of `other` under an element of SL2(Z) sending `base` to 1/0."""
    a, b = base.p, base.q
    x, y = _bezout(a, b)
    # M = [[a, -y], [b, x]] has determinant a·x + b·y = 1 and M(1/0) = a/b
    return Slope.of(x * other.p + y * other.q, -b * other.p + a * other.q)


def continued_fraction(p: int, q: int) -> list[int]:
    out = []
    while q:
        k = p // q
        out.append(k)
        p, q = q, p - k * q
    return out


def farey_ladder(target: Slope) -> list[Slope]:
    """Vertices of the Farey triangles crossed by the vertical geodesic from 1/0 to `target`."""
    if target == INFINITY:
        return [INFINITY]
    terms = continued_fraction(target.p, target.q)
    vertices = {INFINITY, Slope.of(terms[0], 1)}
    h_prev, k_prev = 1, 0
    h, k = terms[0], 1
    for a in terms[1:]:
        for j in range(1, a + 1):
            vertices.add(Slope.of(h_prev + j * h, k_prev + j * k))
        h_prev, k_prev, h, k = h, k, h_prev + a * h, k_prev + a * k
    vertices.add(target)
    return sorted(vertices)


def _bfs(vertices: Sequence[Slope], source: Slope, target: Slope) -> Optional[int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        if v == target:
            return dist[v]
        for w in vertices:
            if w not in dist and v.adjacent(w):
                dist[w] = dist[v] + 1
                queue.append(w)
    return None


def farey_distance(s1: Slope, s2: Slope, cross_check: bool = False) -> int:
    """Farey graph distance: descend s1 to 1/0, then search the ladder of the image of s2.

    Geodesics from 1/0 never leave the ladder, so the ladder search is exact.
    With `cross_check`, distances up to 4 are confirmed by the bounded-height oracle.
    """
    if s1 == s2:
        return 0
    target = _to_infinity(s1, s2)
    d = _bfs(farey_ladder(target), INFINITY, target)
    if d is None:
        raise LabError(f'Farey ladder of {target} is disconnected')
    if cross_check and d <= 4:
        oracle = farey_bfs(s1, s2, max(10, s1.height, s2.height))
        if oracle is not None and oracle != d:
            raise LabError(f'Farey distance mismatch for {s1}, {s2}: ladder {d}, oracle {oracle}')
    return d


@lru_cache(maxsize=8)
def slopes_up_to(height: int) -> tuple[Slope, ...]:
    out = [INFINITY]
    for q in range(1, height + 1):
        for p in range(-height, height + 1):
            if math.gcd(p, q) == 1:
                out.append(Slope(p, q))
    return tuple(out)


def farey_bfs(s1: Slope, s2: Slope, height: int) -> Optional[int]:
    """Breadth-first distance inside the Farey graph on slopes of height ≤ `height`."""
    vertices = set(slopes_up_to(height)) | {s1, s2}
    return _bfs(sorted(vertices), s1, s2)


def slope_of(curve: PLCurve) -> Slope:
    """Isotopy class of an essential simple curve on a torus."""
    coords, nonzero = homology_class(curve)
    if len(coords) != 2:
        raise CurveError(f'{curve.surface.name} is not a torus')
    if not nonzero:
        raise CurveError(f'{curve.name or "curve"} is null-homologous')
    return Slope.of(int(coords[0]), int(coords[1]))


def is_torus(s: HalfTranslationSurface) -> bool:
    return s.genus == 1 and not s.singular_points


# ─── D(L) and D(ε, B) ────────────────────────────────────────

def in_D_of_L(curve: PLCurve, leaves: Sequence[LeafSegment]) -> bool:
    """True iff the curve misses every leaf segment."""
    s = curve.surface
    curve_vertices = set()
    for piece in curve.pieces:
        if s.polygons[piece.poly].vertex_index(piece.start) is not None:
            curve_vertices.add(point_key(s, piece.poly, piece.start))
    for leaf in leaves:
        for seg in leaf.trajectory.segments:
            for z in (seg.start, seg.end):
                if s.polygons[seg.poly].vertex_index(z) is not None \
                        and point_key(s, seg.poly, z) in curve_vertices:
                    return False
            for piece in curve.pieces:
                if piece.poly == seg.poly and \
                        segment_intersection(piece.start, piece.end, seg.start, seg.end) is not None:
                    return False
    return True


@dataclass(frozen=True)
class Window:
    start: int
    end: int
    fraction: QuadNum
    width: QuadNum
    size: QuadNum

    def to_dict(self) -> dict:
        return {'startPiece': self.start, 'endPiece': self.end, 'endFraction': self.fraction,
                'width': self.width, 'size': self.size}


@lru_cache(maxsize=32)
def _cover_for(s: HalfTranslationSurface) -> ResolvingCover:
    return build_resolving_cover(s)


def _developed_period(curve: PLCurve) -> list[Vec]:
    """Developed piece starts of one period of the lift, plus the next period's first point."""
    cover = _cover_for(curve.surface)
    lifted = lift_to_cover(curve.pieces, cover, closed=True)
    dev = develop(lifted, cover_identity(cover.cover), closed=True)
    starts = dev.points[::2]
    shift = dev.holonomy.shift if dev.holonomy is not None else Vec(ZERO, ZERO)
    return starts + [p + shift for p in starts] + [starts[0] + shift.scale(2)]


class _Extremes:
    """Sliding max/min of one coordinate with both window ends moving forward."""

    def __init__(self, values: list[QuadNum]):
        self.values = values
        self.hi: deque[int] = deque()
        self.lo: deque[int] = deque()

    def push(self, j: int):
        v = self.values[j]
        while self.hi and self.values[self.hi[-1]] <= v:
            self.hi.pop()
        self.hi.append(j)
        while self.lo and self.values[self.lo[-1]] >= v:
            self.lo.pop()
        self.lo.append(j)

    def drop_before(self, i: int):
        while self.hi and self.hi[0] < i:
            self.hi.popleft()
        while self.lo and self.lo[0] < i:
            self.lo.popleft()

    @property
    def bounds(self) -> tuple[QuadNum, QuadNum]:
        return self.values[self.lo[0]], self.values[self.hi[0]]


def _partial_reach(lo: QuadNum, hi: QuadNum, at: QuadNum, step: QuadNum, B: QuadNum) -> QuadNum:
    """Largest t in [0, 1] keeping the range of {lo, hi, at + t·step} at most B."""
    if step.sign() > 0:
        return min(ONE, (B + lo - at) / step)
    if step.sign() < 0:
        return min(ONE, (hi - at - B) / step)
    return ONE


def in_D_eps_B(curve: PLCurve, eps: QuadNum, B: QuadNum) -> tuple[bool, Window]:
    """Every window of size ≤ B has width ≤ ε; also returns the widest such window.

    Windows start at a piece start of the developed lift and extend forward,
    at most one period, ending inside a piece where the size bound is reached.
    """
    eps = QuadNum.coerce(eps, curve.surface.d)
    B = QuadNum.coerce(B, curve.surface.d)
    pts = _developed_period(curve)
    n = (len(pts) - 1) // 2
    xs = _Extremes([p.x for p in pts])
    ys = _Extremes([p.y for p in pts])
    worst = Window(0, 0, ZERO, ZERO, ZERO)
    j = 0
    xs.push(0)
    ys.push(0)
    for i in range(n):
        if j < i:
            j = i
            xs.push(j)
            ys.push(j)
        xs.drop_before(i)
        ys.drop_before(i)
        while j < i + n:
            x_lo, x_hi = xs.bounds
            y_lo, y_hi = ys.bounds
            nxt = pts[j + 1]
            if max(max(x_hi, nxt.x) - min(x_lo, nxt.x), max(y_hi, nxt.y) - min(y_lo, nxt.y)) > B:
                break
            j += 1
            xs.push(j)
            ys.push(j)
        x_lo, x_hi = xs.bounds
        y_lo, y_hi = ys.bounds
        t = ZERO
        tip = pts[j]
        if j < i + n:
            step = pts[j + 1] - pts[j]
            t = min(_partial_reach(x_lo, x_hi, pts[j].x, step.x, B),
                    _partial_reach(y_lo, y_hi, pts[j].y, step.y, B))
            tip = pts[j] + step.scale(t)
        width = max(x_hi, tip.x) - min(x_lo, tip.x)
        size = max(width, max(y_hi, tip.y) - min(y_lo, tip.y))
        if width > worst.width:
            worst = Window(i, j, t, width, size)
    return worst.width <= eps, worst


def development_extent(curve: PLCurve) -> tuple[QuadNum, QuadNum]:
    """(size, width) of one period of the developed lift, maximized over start pieces."""
    pts = _developed_period(curve)
    n = (len(pts) - 1) // 2
    xs = _Extremes([p.x for p in pts])
    ys = _Extremes([p.y for p in pts])
    size = width = ZERO
    for j in range(2 * n + 1):
        xs.push(j)
        ys.push(j)
        if j < n:
            continue
        xs.drop_before(j - n)
        ys.drop_before(j - n)
        x_lo, x_hi = xs.bounds
        y_lo, y_hi = ys.bounds
        width = max(width, x_hi - x_lo)
        size = max(size, x_hi - x_lo, y_hi - y_lo)
    return size, width


# ─── Distance bounds ─────────────────────────────────────────

@dataclass(frozen=True)
class DistanceBound:
    lower: int
    upper: int
    methods: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= self.lower <= self.upper:
            raise LabError(f'invalid distance bound [{self.lower}, {self.upper}]')

    @property
    def midpoint(self) -> Fraction:
        return Fraction(self.lower + self.upper, 2)

    def to_dict(self) -> dict:
        return {'lower': self.lower, 'upper': self.upper, 'methods': list(self.methods)}


def farey_bounds(d: int, meets_at_most_once: bool) -> DistanceBound:
    """Fine-graph bounds on a torus from the Farey distance of the two classes."""
    lower = max(0, d - PUSHOFF_CALIBRATION)
    # classes at Farey distance ≥ 2 meet at least twice
    if d < 2 and meets_at_most_once:
        return DistanceBound(lower, max(lower, 1), ('farey', 'adjacent'))
    return DistanceBound(lower, d + PUSHOFF_CALIBRATION, ('farey',))


def fine_distance_bounds(alpha: PLCurve, beta: PLCurve, s: Optional[HalfTranslationSurface] = None,
                         max_steps: int = 16) -> DistanceBound:
    s = s or alpha.surface
    if alpha.same_as(beta):
        return DistanceBound(0, 0, ('identical',))
    if is_torus(s):
        d = farey_distance(slope_of(alpha), slope_of(beta))
        if d >= 2:
            return farey_bounds(d, False)
        report = intersections(alpha, beta)
        return farey_bounds(d, len(report.crossings) <= 1 and not report.touches)

    report = intersections(alpha, beta)
    meeting = len(report.crossings) + len(report.touches)
    if meeting == 0:
        return DistanceBound(0, 1, ('disjoint',))
    lower, methods = 2, ['intersecting']
    estimate = math.ceil(math.log2(meeting)) // 2
    if estimate > lower:
        lower = estimate
        methods.append('heuristic')
    try:
        path = bicorn_path(alpha, beta, max_steps)
        upper = 3 * (len(path) - 1)
        methods.append('bicorn-path')
    except (StuckSurgery, CurveError) as e:
        log.info('bicorn path unavailable: %s', e)
        upper = 2 * math.ceil(math.log2(meeting)) + 2 + PUSHOFF_CALIBRATION
        methods.append('log-intersection')
    return DistanceBound(lower, max(lower, upper), tuple(methods))


@dataclass(frozen=True)
class GromovInterval:
    lower: Fraction
    upper: Fraction

    def contains(self, x) -> bool:
        return self.lower <= x <= self.upper

    def to_dict(self) -> dict:
        return {'lower': str(self.lower), 'upper': str(self.upper)}


def gromov_product(alpha: PLCurve, beta: PLCurve, base: PLCurve) -> GromovInterval:
    """(α·β)_base = ½(d(α, base) + d(β, base) − d(α, β)) over distance bounds."""
    da = fine_distance_bounds(alpha, base)
    db = fine_distance_bounds(beta, base)
    dab = fine_distance_bounds(alpha, beta)
    lower = max(Fraction(0), Fraction(da.lower + db.lower - dab.upper, 2))
    upper = min(Fraction(da.upper + db.upper - dab.lower, 2), Fraction(min(da.upper, db.upper)))
    return GromovInterval(lower, max(lower, upper))


def _slope(values: Sequence[float]) -> float:
    if len(values) < 2 or len(set(values)) == 1:
        return 0.0
    result = stats.linregress(range(len(values)), values)
    return float(result.slope)


def monotone_after(values: Sequence) -> Optional[int]:
    """First index after which the sequence never decreases."""
    for start in range(len(values)):
        tail = values[start:]
        if all(a <= b for a, b in zip(tail, tail[1:])):
            return start
    return None


def admissibility_trend(seq: Sequence[PLCurve], base: PLCurve) -> pd.DataFrame:
    """Gromov products of consecutive members; an admissible sequence drifts upward."""
    rows = []
    for i in range(len(seq) - 1):
        g = gromov_product(seq[i], seq[i + 1], base)
        rows.append({'index': i, 'lower': float(g.lower), 'upper': float(g.upper)})
    frame = pd.DataFrame(rows, columns=['index', 'lower', 'upper'])
    frame.attrs['slope'] = _slope(frame['lower'].tolist()) if len(frame) else 0.0
    return frame


# ─── Schedules and sequences ─────────────────────────────────

@dataclass(frozen=True)
class Schedule:
    entries: tuple[tuple[QuadNum, QuadNum], ...]

    @classmethod
    def default(cls, count: int = 8) -> 'Schedule':
        """B_k = k, ε_k = 2^−⌈k/4⌉."""
        return cls(tuple((QuadNum(k), QuadNum(Fraction(1, 2 ** math.ceil(k / 4))))
                         for k in range(1, count + 1)))

    @classmethod
    def from_dict(cls, data: dict) -> 'Schedule':
        try:
            entries = tuple((parse(str(e['B'])), parse(str(e['eps']))) for e in data['entries'])
        except (KeyError, TypeError) as e:
            raise ConfigError('schedule', f'malformed schedule: {e}') from e
        for (b0, e0), (b1, e1) in zip(entries, entries[1:]):
            if b1 < b0 or e1 > e0:
                raise ConfigError('schedule', 'B must increase and ε must decrease')
        if not entries:
            raise ConfigError('schedule', 'schedule is empty')
        return cls(entries)

    @classmethod
    def load(cls, path: str) -> 'Schedule':
        try:
            with open(path, encoding='utf-8') as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError('schedule', f'cannot read {path}: {e}') from e

    def to_dict(self) -> dict:
        return {'entries': [{'B': render(b), 'eps': render(e)} for b, e in self.entries]}


def golden_sequence(s: HalfTranslationSurface, count: int, x0: Optional[QuadNum] = None,
                    cap: QuadNum = QuadNum(4096)) -> list[PLCurve]:
    """Vertical leaves closed along the first transversal within ε = 2^−(i+1)."""
    if not s.transversals:
        raise ConfigError('surface', f'{s.name} declares no transversal')
    t = s.transversals[sorted(s.transversals)[0]]
    x0 = t.x0 + t.width / 3 if x0 is None else x0
    out = []
    for i in range(count):
        curve = close_to_curve(s, t, x0, QuadNum(Fraction(1, 2 ** (i + 1))), cap)
        out.append(PLCurve(s, curve.pieces, f'C{i}'))
    return out


def constant_sequence(curve: PLCurve, count: int) -> list[PLCurve]:
    return [curve] * count


def alternating_sequence(seq: Sequence[PLCurve], other: PLCurve) -> list[PLCurve]:
    """Odd positions replaced by `other`."""
    return [other if i % 2 else c for i, c in enumerate(seq)]


def horizontal_base(s: HalfTranslationSurface) -> PLCurve:
    return straight_loop(s, 1, 0)


# ─── Convergence certificate ─────────────────────────────────

@dataclass
class ConvergenceReport:
    records: list[dict]
    stabilization: dict[int, Optional[int]]
    trends: dict[str, bool]
    witness: Optional[dict] = None
    sizes: list[QuadNum] = field(default_factory=list)
    distances: list[DistanceBound] = field(default_factory=list)
    burn_in: Optional[int] = None

    @property
    def passed(self) -> bool:
        return all(self.trends.values())

    def to_frame(self) -> pd.DataFrame:
        return tagged_frame(self.records, {'B': 'exact', 'eps': 'exact', 'width': 'exact',
                                           'sizeLower': 'interval-lower'})

    def to_dict(self) -> dict:
        return {
            'verdict': 'PASS' if self.passed else 'FAIL',
            'stabilization': {str(k): v for k, v in self.stabilization.items()},
            'trends': self.trends,
            'sizes': self.sizes,
            'distances': [d.to_dict() for d in self.distances],
            'distanceBurnIn': self.burn_in,
            'records': self.records,
            'witness': self.witness,
        }


def _profile(curve: PLCurve, base: Optional[PLCurve], schedule: Schedule) -> tuple:
    size, _ = development_extent(curve)
    distance = fine_distance_bounds(curve, base) if base is not None else None
    verdicts = [in_D_eps_B(curve, eps, B) for B, eps in schedule.entries]
    return size, distance, verdicts


def convergence_certificate(seq: Sequence[PLCurve], schedule: Schedule,
                            base: Optional[PLCurve] = None, min_tail: int = 2,
                            jobs: int = 1) -> ConvergenceReport:
    """Certificate that `seq` tends to the boundary point of the vertical foliation.

    PASS needs three trends over the finite sequence: for every schedule
    entry a tail of at least `min_tail` members inside D(ε_k, B_k), growing
    size, and growing distance from `base`. Distance lower bounds must never
    decrease after a burn-in within the first half of the sequence, and must
    end above their value at the burn-in.
    """
    if len(seq) < min_tail:
        raise ConfigError('sequence', f'need at least {min_tail} curves')
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        profiles = list(pool.map(lambda c: _profile(c, base, schedule), seq))

    records, stabilization = [], {}
    witness = None
    for k, (B, eps) in enumerate(schedule.entries):
        first = len(seq)
        while first > 0 and profiles[first - 1][2][k][0]:
            first -= 1
        for i, (_, _, verdicts) in enumerate(profiles):
            ok, window = verdicts[k]
            records.append({'index': i, 'entry': k, 'B': B, 'eps': eps, 'member': ok,
                            'width': window.width, 'sizeLower': profiles[i][0]})
        if len(seq) - first >= min_tail:
            stabilization[k] = first
            continue
        stabilization[k] = None
        if witness is None:
            i = first - 1
            window = profiles[i][2][k][1]
            witness = {'entry': k, 'index': i, 'curve': seq[i].name, 'window': window.to_dict()}
    records.sort(key=lambda r: (r['index'], r['entry']))

    sizes = [p[0] for p in profiles]
    size_trend = _slope([float(x) for x in sizes]) > 0 and sizes[-1] > sizes[0]
    distances = [p[1] for p in profiles if p[1] is not None]
    lowers = [d.lower for d in distances]
    burn_in = monotone_after(lowers) if lowers else None
    distance_trend = burn_in is not None and burn_in <= len(lowers) // 2 and lowers[-1] > lowers[burn_in]
    trends = {
        'windows': all(v is not None for v in stabilization.values()),
        'size': size_trend,
        'distance': distance_trend,
    }
    if witness is None and not trends['size']:
        witness = {'reason': 'size does not diverge', 'sizes': [approx(x, 12) for x in sizes]}
    elif witness is None and not trends['distance']:
        witness = {'reason': 'distance lower bounds do not grow', 'lowers': lowers, 'burnIn': burn_in}
    report = ConvergenceReport(records, stabilization, trends, witness, sizes, distances, burn_in)
    log.info('convergence certificate: %s over %d curves and %d schedule entries',
             'PASS' if report.passed else 'FAIL', len(seq), len(schedule.entries))
    return report


def epsilon_table(curves: Sequence[PLCurve], bounds: Sequence[QuadNum]) -> pd.DataFrame:
    """Minimum width over nonseparating curves of size ≤ B, for each B."""
    profiles = []
    for c in curves:
        _, nonsep = homology_class(c)
        if nonsep:
            profiles.append(development_extent(c))
    rows = []
    for B in bounds:
        widths = [width for size, width in profiles if size <= B]
        rows.append({'B': approx(B, 12), 'curves': len(widths),
                     'minWidth': approx(min(widths), 12) if widths else None})
    return pd.DataFrame(rows, columns=['B', 'curves', 'minWidth'])
