"""
Vertical flow: trajectories, first-return interval exchanges, singular
leaves, leaf closing and the empirical fast-return / target constants.
"""

from __future__ import annotations

import bisect
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from backend.core.errors import CapExceeded, ConePointHit, ConfigError, CurveError
from backend.core.numerics import ONE, ZERO, QuadNum, Vec, approx
from backend.core.surface import (
    ChartSegment, ConePoint, HalfTranslationSurface, SurfacePoint, Transversal,
)
from backend.core.utils import on_segment, tagged_frame
from backend.metrics.curves import PLCurve, homology_class, is_essential, is_simple

log = logging.getLogger(__name__)

UP = Vec(ZERO, ONE)

TERMINAL_REACHED = 'reached length'
TERMINAL_CONE = 'hit cone point'
TERMINAL_TRANSVERSAL = 'hit transversal'


@dataclass
class Trajectory:
    start: SurfacePoint
    segments: list[ChartSegment]
    crossings: list[tuple[int, int]]
    total_length: QuadNum
    terminal: str
    end: SurfacePoint
    cone_point: Optional[ConePoint] = None
    flipped: bool = False

    def to_dict(self) -> dict:
        return {
            'start': str(self.start),
            'end': str(self.end),
            'length': self.total_length,
            'terminal': self.terminal,
            'coneId': self.cone_point.id if self.cone_point else None,
            'crossings': len(self.crossings),
        }


@dataclass
class LeafSegment:
    trajectory: Trajectory
    is_singular: bool


def flow_vertical(s: HalfTranslationSurface, p: SurfacePoint, budget: QuadNum,
                  stop_at: Optional[Transversal] = None, direction: int = 1,
                  max_steps: int = 1_000_000) -> Trajectory:
    """Vertical unit-speed trajectory of length at most `budget` in p's chart direction."""
    budget = QuadNum.coerce(budget, s.d)
    if budget.sign() <= 0:
        raise ConfigError('budget', 'must be positive')
    vertex = s.polygons[p.poly].vertex_index(p.z)
    if vertex is not None and not s.cone_at(p.poly, vertex).is_regular:
        raise ConePointHit(f'{p} is a cone point', s.cone_at(p.poly, vertex))
    targets = [stop_at.segment] if stop_at is not None else []
    trace = s.trace(p, UP.scale(budget * direction), targets, max_steps=max_steps)
    terminal = {'reached': TERMINAL_REACHED, 'cone': TERMINAL_CONE,
                'target': TERMINAL_TRANSVERSAL}[trace.terminal]
    return Trajectory(p, trace.pieces, trace.crossings, trace.fraction * budget, terminal,
                      trace.end, trace.cone_point, trace.placement.sign < 0)


def singular_leaves(s: HalfTranslationSurface, cap: QuadNum,
                    stop_at: Optional[Transversal] = None) -> list[LeafSegment]:
    """Vertical leaves leaving every singular cone point, followed up to `cap`."""
    leaves = []
    targets = [stop_at.segment] if stop_at is not None else []
    for cone in s.singular_points:
        for start, w in s.prongs(cone, UP):
            try:
                trace = s.trace(start, w.scale(cap), targets)
            except CurveError as e:
                log.debug('prong at cone %d skipped: %s', cone.id, e)
                continue
            terminal = {'reached': TERMINAL_REACHED, 'cone': TERMINAL_CONE,
                        'target': TERMINAL_TRANSVERSAL}[trace.terminal]
            traj = Trajectory(start, trace.pieces, trace.crossings, trace.fraction * cap, terminal,
                              trace.end, trace.cone_point, trace.placement.sign < 0)
            leaves.append(LeafSegment(traj, True))
    return leaves


# ─── Interval exchanges ──────────────────────────────────────

@dataclass
class IntervalExchange:
    transversal: Transversal
    intervals: list[tuple[QuadNum, QuadNum]]
    signs: list[int]
    translations: list[QuadNum]
    return_lengths: list[QuadNum]
    singular_points: list[QuadNum] = field(default_factory=list)

    @property
    def permutation(self) -> list[int]:
        """Rank of each interval's image in left-to-right order."""
        images = [self.image(i)[0] for i in range(len(self.intervals))]
        order = sorted(range(len(images)), key=lambda i: images[i])
        rank = [0] * len(images)
        for r, i in enumerate(order):
            rank[i] = r
        return rank

    def image(self, i: int) -> tuple[QuadNum, QuadNum]:
        lo, hi = self.intervals[i]
        a, b = self.map_point(lo, i), self.map_point(hi, i)
        return (a, b) if a <= b else (b, a)

    def map_point(self, x: QuadNum, i: int) -> QuadNum:
        return (x if self.signs[i] > 0 else -x) + self.translations[i]

    def locate(self, x: QuadNum) -> int:
        for i, (lo, hi) in enumerate(self.intervals):
            if lo <= x < hi:
                return i
        if x == self.intervals[-1][1]:
            return len(self.intervals) - 1
        raise ValueError(f'{x} is outside the transversal')

    def __call__(self, x: QuadNum) -> QuadNum:
        return self.map_point(x, self.locate(x))

    def lengths(self) -> list[QuadNum]:
        return [hi - lo for lo, hi in self.intervals]

    def fubini_total(self) -> QuadNum:
        return sum((ln * h for ln, h in zip(self.lengths(), self.return_lengths)), ZERO)

    def is_rotation(self) -> bool:
        return len(self.intervals) <= 2 and all(sg > 0 for sg in self.signs) and \
            len(set(self.return_lengths)) == 1

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, (lo, hi) in enumerate(self.intervals):
            rows.append({'interval': i, 'lo': lo, 'hi': hi, 'flipped': self.signs[i] < 0,
                         'translation': self.translations[i], 'returnLength': self.return_lengths[i],
                         'imageRank': self.permutation[i]})
        return tagged_frame(rows, {'lo': 'exact', 'hi': 'exact', 'translation': 'exact',
                                   'returnLength': 'exact'})


def _cuts_on(s: HalfTranslationSurface, t: Transversal, cap: QuadNum) -> tuple[list[QuadNum], list[QuadNum]]:
    """Points of t on singular leaves, and points on leaves through the endpoints of t."""
    seg = t.segment
    singular = []
    cuts = []
    for leaf in singular_leaves(s, cap, t):
        traj = leaf.trajectory
        if traj.terminal == TERMINAL_TRANSVERSAL:
            singular.append(traj.end.z.x)
    for x in (t.x0, t.x1):
        for direction in (1, -1):
            try:
                trace = s.trace(t.point(x), UP.scale(cap * direction), [seg])
            except CurveError as e:
                log.debug('endpoint leaf from %s skipped: %s', x, e)
                continue
            if trace.terminal == 'target':
                cuts.append(trace.end.z.x)
    return singular, cuts


def first_return_map(t: Transversal, s: HalfTranslationSurface, cap: QuadNum = QuadNum(64)) -> IntervalExchange:
    """First return of the upward vertical flow to a horizontal transversal."""
    if t.width.sign() <= 0:
        raise ConfigError('transversal', f'{t.name} has non-positive width')
    cap = QuadNum.coerce(cap, s.d)
    seg = t.segment
    prong_cuts, endpoint_cuts = _cuts_on(s, t, cap)
    singular = sorted({x for x in prong_cuts if t.x0 < x < t.x1})
    bounds = [t.x0] + sorted({x for x in prong_cuts + endpoint_cuts if t.x0 < x < t.x1}) + [t.x1]

    intervals, signs, shifts, lengths = [], [], [], []
    for lo, hi in zip(bounds, bounds[1:]):
        mid = (lo + hi) / 2
        trace = s.trace(t.point(mid), UP.scale(cap), [seg])
        if trace.terminal == 'cone':
            raise CurveError(f'midpoint {approx(mid, 6)} flows into a cone point')
        if trace.terminal != 'target':
            raise CapExceeded(f'flow from {approx(mid, 6)} did not return to {t.name}', cap)
        image = trace.end.z.x
        sign = trace.placement.sign
        shift = image - mid if sign > 0 else image + mid
        ret = trace.fraction * cap
        if intervals and lo not in singular and signs[-1] == sign and shifts[-1] == shift and lengths[-1] == ret:
            intervals[-1] = (intervals[-1][0], hi)
            continue
        intervals.append((lo, hi))
        signs.append(sign)
        shifts.append(shift)
        lengths.append(ret)
    iet = IntervalExchange(t, intervals, signs, shifts, lengths, singular)
    log.info('first return to %s on %s: %d intervals', t.name, s.name, len(intervals))
    return iet


# ─── Rotation orbits ─────────────────────────────────────────

def _circle_mod(x: QuadNum, lo: QuadNum, width: QuadNum) -> QuadNum:
    k = ((x - lo) / width).floor()
    return x - width * k


def three_gap_census(iet: IntervalExchange, x0: QuadNum, n: int) -> pd.DataFrame:
    """Distinct gap lengths of the orbit {T^k x0 : k < m} on the circle, for m ≤ n."""
    t = iet.transversal
    width = t.width
    points: list[QuadNum] = [x0]
    gaps: Counter = Counter({width: 1})
    rows = [{'m': 1, 'distinctGaps': 1, 'maxGap': width, 'minGap': width}]
    x = x0
    for m in range(2, n + 1):
        x = _circle_mod(iet(x), t.x0, width)
        pos = bisect.bisect_left(points, x)
        prev = points[pos - 1] if pos > 0 else points[-1] - width
        nxt = points[pos] if pos < len(points) else points[0] + width
        old = nxt - prev
        gaps[old] -= 1
        if not gaps[old]:
            del gaps[old]
        gaps[x - prev] += 1
        gaps[nxt - x] += 1
        points.insert(pos, x)
        rows.append({'m': m, 'distinctGaps': len(gaps), 'maxGap': max(gaps), 'minGap': min(gaps)})
    return tagged_frame(rows, {'maxGap': 'exact', 'minGap': 'exact'})


def near_return_times(iet: IntervalExchange, x0: QuadNum, n: int) -> list[tuple[int, QuadNum]]:
    """Times k ≤ n at which the circular distance from T^k x0 to x0 hits a new minimum."""
    t = iet.transversal
    width = t.width
    best = None
    out = []
    x = x0
    for k in range(1, n + 1):
        x = _circle_mod(iet(x), t.x0, width)
        d = abs(x - x0)
        d = min(d, width - d)
        if best is None or d < best:
            best = d
            out.append((k, d))
    return out


def exact_rotation_bound(iet: IntervalExchange, window: QuadNum, cap_iterates: int = 100_000) -> tuple[int, QuadNum]:
    """(N, N·h): every orbit segment of N returns meets any arc of length `window`."""
    if not iet.is_rotation():
        raise ConfigError('surface', 'exact bound needs a rotation first-return map')
    t = iet.transversal
    h = iet.return_lengths[0]
    points = [t.x0]
    gaps: Counter = Counter({t.width: 1})
    x = t.x0
    for n in range(1, cap_iterates + 1):
        if max(gaps) <= window:
            return n, h * n
        x = _circle_mod(iet(x), t.x0, t.width)
        pos = bisect.bisect_left(points, x)
        prev = points[pos - 1] if pos > 0 else points[-1] - t.width
        nxt = points[pos] if pos < len(points) else points[0] + t.width
        gaps[nxt - prev] -= 1
        if not gaps[nxt - prev]:
            del gaps[nxt - prev]
        gaps[x - prev] += 1
        gaps[nxt - x] += 1
        points.insert(pos, x)
    raise CapExceeded('orbit gaps did not shrink below the window', cap_iterates)


# ─── Leaf closing ────────────────────────────────────────────

def close_to_curve(s: HalfTranslationSurface, t: Transversal, x0: QuadNum, eps: QuadNum,
                   cap: QuadNum = QuadNum(4096), max_returns: int = 100_000) -> PLCurve:
    """Close the upward leaf from (x0, t.y) at its first return within `eps` of x0.

    The closing arc runs along t. The window is halved when the closed curve
    is not simple.
    """
    eps = QuadNum.coerce(eps, s.d)
    if eps.sign() <= 0:
        raise ConfigError('eps', 'must be positive')
    seg = t.segment
    start = t.point(x0)
    pieces: list[ChartSegment] = []
    here = start
    heading = 1
    used = ZERO
    for _ in range(max_returns):
        trace = s.trace(here, UP.scale(heading * (cap - used)), [seg])
        if trace.terminal == 'cone':
            raise ConePointHit(f'leaf from {approx(x0, 6)} runs into a cone point', trace.cone_point)
        if trace.terminal != 'target':
            raise CapExceeded(f'no return within {approx(eps, 6)} of {approx(x0, 6)}', cap)
        pieces.extend(trace.pieces)
        used = used + trace.fraction * (cap - used)
        here = trace.end
        heading *= trace.placement.sign
        x = here.z.x
        if here.poly != t.poly or abs(x - x0) >= eps:
            continue
        closing = [ChartSegment(t.poly, here.z, start.z)] if x != x0 else []
        curve = PLCurve(s, tuple(pieces + closing), f'leaf@{approx(x0, 6)}')
        simple, _ = is_simple(curve)
        if simple and is_essential(curve):
            log.debug('leaf closed after length %s with arc %s', approx(used, 6), approx(abs(x - x0), 6))
            return curve
        eps = eps / 2
    raise CapExceeded('leaf did not close', max_returns)


def return_loop(s: HalfTranslationSurface, t: Transversal, x0: QuadNum, cap: QuadNum = QuadNum(64)) -> PLCurve:
    """Flow line from t back to t, closed along t: a nonseparating simple loop."""
    curve = close_to_curve(s, t, x0, t.width + 1, cap)
    coords, nonsep = homology_class(curve)
    if not nonsep:
        raise CurveError(f'return loop from {approx(x0, 6)} is separating')
    return curve


# ─── Fast return and target checks ───────────────────────────

def _hit_length(s: HalfTranslationSurface, p: SurfacePoint, targets: Sequence[ChartSegment],
                cap: QuadNum) -> Optional[QuadNum]:
    if any(tg.poly == p.poly and on_segment(p.z, tg.start, tg.end) for tg in targets):
        return ZERO
    trace = s.trace(p, UP.scale(cap), targets)
    if trace.terminal == 'target':
        return trace.fraction * cap
    if trace.terminal == 'cone':
        return None
    raise CapExceeded(f'vertical flow from {p} missed the target', cap)


@dataclass
class FastReturnReport:
    L: QuadNum
    argmax: Optional[SurfacePoint]
    trials: int
    exact_bound: Optional[QuadNum] = None
    exact_iterates: Optional[int] = None
    rows: list[dict] = field(default_factory=list)

    @property
    def confirmed(self) -> Optional[bool]:
        return None if self.exact_bound is None else self.L <= self.exact_bound

    def to_dict(self) -> dict:
        return {'L': self.L, 'argmax': str(self.argmax) if self.argmax else None,
                'trials': self.trials, 'exactBound': self.exact_bound,
                'exactIterates': self.exact_iterates, 'confirmed': self.confirmed}


def fast_return_constant(s: HalfTranslationSurface, g: Sequence[ChartSegment], width: QuadNum,
                         trials: int, cap: QuadNum, rng: np.random.Generator,
                         iet: Optional[IntervalExchange] = None, jobs: int = 1) -> FastReturnReport:
    """Empirical L: the longest first hit of im(g) over sampled vertical starts.

    Starts are drawn from `rng` up front, so the result does not depend on `jobs`.
    """
    width = QuadNum.coerce(width, s.d)
    if width.sign() <= 0:
        raise ConfigError('eps', 'width of the target must be positive')
    cap = QuadNum.coerce(cap, s.d)
    best, argmax = ZERO, None
    rows = []
    starts = [s.random_point(rng) for _ in range(trials)]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        hits = list(pool.map(lambda p: _hit_length(s, p, g, cap), starts))
    for trial, (p, hit) in enumerate(zip(starts, hits)):
        rows.append({'trial': trial, 'start': str(p), 'hitLength': hit,
                     'terminal': TERMINAL_CONE if hit is None else TERMINAL_TRANSVERSAL})
        if hit is not None and hit > best:
            best, argmax = hit, p
    report = FastReturnReport(best, argmax, trials, rows=rows)
    if iet is not None and iet.is_rotation():
        report.exact_iterates, report.exact_bound = exact_rotation_bound(iet, width)
    return report


@dataclass
class TargetReport:
    L: QuadNum
    trials: int
    hits: int
    witnesses: list[str]
    rows: list[dict] = field(default_factory=list)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.hits, self.trials) if self.trials else Fraction(0)

    def to_dict(self) -> dict:
        return {'L': self.L, 'trials': self.trials, 'hits': self.hits,
                'fraction': str(self.fraction), 'witnesses': self.witnesses[:10]}


def _meets(s: HalfTranslationSurface, p: SurfacePoint, L: QuadNum, targets: Sequence[ChartSegment]) -> bool:
    if L.sign() <= 0:
        return False
    return s.trace(p, UP.scale(L), targets).terminal == 'target'


def target_check(s: HalfTranslationSurface, gamma: PLCurve, L: QuadNum, trials: int,
                 rng: np.random.Generator, jobs: int = 1) -> TargetReport:
    """Fraction of sampled vertical geodesics of length L meeting im(γ)."""
    L = QuadNum.coerce(L, s.d)
    hits = 0
    witnesses, rows = [], []
    starts = [s.random_point(rng) for _ in range(trials)]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        met = list(pool.map(lambda p: _meets(s, p, L, gamma.pieces), starts))
    for trial, (p, hit) in enumerate(zip(starts, met)):
        hits += hit
        if not hit:
            witnesses.append(str(p))
        rows.append({'trial': trial, 'start': str(p), 'hit': hit})
    return TargetReport(L, trials, hits, witnesses, rows)
