"""
Closed piecewise-straight curves: intersections, simplicity, homology and
bicorn surgery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from backend.core.errors import CurveError, StuckSurgery
from backend.core.geom import Development, cover_identity, develop
from backend.core.numerics import ZERO, Placement, QuadNum, Vec, parse, render
from backend.core.surface import ChartSegment, HalfTranslationSurface, SurfacePoint
from backend.core.utils import on_segment, segment_intersection, segment_param, strictly_between_ccw

log = logging.getLogger(__name__)


# ─── Curves ──────────────────────────────────────────────────

@dataclass(frozen=True)
class PLCurve:
    surface: HalfTranslationSurface = field(compare=False, repr=False)
    pieces: tuple[ChartSegment, ...]
    name: str = field(default='', compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise CurveError('a curve needs at least one piece')
        for piece in self.pieces:
            if piece.start == piece.end:
                raise CurveError(f'degenerate piece in polygon {piece.poly}')

    def __len__(self):
        return len(self.pieces)

    def development(self) -> Development:
        return develop(self.pieces, cover_identity(self.surface), closed=True)

    def l1_length(self) -> QuadNum:
        return sum((p.vector.l1() for p in self.pieces), ZERO)

    def point_at(self, k: int, t: QuadNum) -> Vec:
        piece = self.pieces[k]
        return piece.start + piece.vector.scale(t)

    def reversed(self) -> 'PLCurve':
        return PLCurve(self.surface, tuple(p.reversed() for p in reversed(self.pieces)), self.name)

    def same_as(self, other: 'PLCurve') -> bool:
        """Equal as cyclic piece sequences (either orientation)."""
        if len(self) != len(other):
            return False
        for candidate in (other, other.reversed()):
            ps = candidate.pieces
            for shift in range(len(ps)):
                if ps[shift:] + ps[:shift] == self.pieces:
                    return True
        return False


def closed_geodesic_from(s: HalfTranslationSurface, start: SurfacePoint, displacement: Vec,
                         name: str = '') -> PLCurve:
    trace = s.trace(start, displacement)
    if trace.terminal != 'reached':
        raise CurveError(f'straight path from {start} stopped at a {trace.terminal}')
    if trace.end != start or trace.placement.sign < 0:
        raise CurveError(f'straight path from {start} does not close up')
    return PLCurve(s, tuple(trace.pieces), name)


def torus_basis(s: HalfTranslationSurface) -> tuple[Vec, Vec]:
    """Holonomy vectors of the two gluing records of a one-parallelogram torus."""
    if len(s.polygons) != 1 or len(s.polygons[0]) != 4 or len(s.gluings) != 2 \
            or not s.is_translation_surface:
        raise CurveError(f'{s.name} is not a one-parallelogram torus')
    h1 = -s.gluings[0].chart_map.shift
    h2 = -s.gluings[1].chart_map.shift
    origin = s.polygons[0].vertex(0)
    corners = {origin, origin + h1, origin + h2, origin + h1 + h2}
    if set(s.polygons[0].vertices) != corners:
        raise CurveError(f'{s.name}: gluings do not match the parallelogram sides')
    return h1, h2


def straight_loop(s: HalfTranslationSurface, p: int, q: int) -> PLCurve:
    """Straight closed curve of class (p, q) on a one-parallelogram torus.

    The start point avoids the lattice: (1/(4q), 1/2) in basis coordinates,
    or (1/4, 1/2) for horizontal loops.
    """
    if p == 0 and q == 0:
        raise CurveError('class (0, 0) has no straight representative')
    h1, h2 = torus_basis(s)
    a = Fraction(1, 4 * abs(q)) if q else Fraction(1, 4)
    b = Fraction(1, 2)
    origin = s.polygons[0].vertex(0)
    start = SurfacePoint(0, origin + h1.scale(a) + h2.scale(b))
    return closed_geodesic_from(s, start, h1.scale(p) + h2.scale(q), f'({p},{q})')


# ─── Local structure at a point ──────────────────────────────

def _local_frame(s: HalfTranslationSurface, poly: int, z: Vec) -> tuple[tuple, Placement, Vec]:
    """Canonical key of a surface point and the map from `poly`'s chart into the key's chart."""
    p = s.polygons[poly]
    vertex = p.vertex_index(z)
    if vertex is not None:
        cone = s.cone_at(poly, vertex)
        ref_poly, ref_vertex = cone.corners[0]
        for q, j, frame in s.corner_cycle(ref_poly, ref_vertex):
            if (q, j) == (poly, vertex):
                return ('v', cone.id), frame, s.polygons[ref_poly].vertex(ref_vertex)
        raise CurveError(f'corner {poly}.{vertex} missing from its own orbit')
    options = [(poly, z, Placement.identity())]
    for e in p.edges_containing(z):
        q, _, g = s.partner(poly, e)
        options.append((q, g(z), g))
    ref_poly, ref_z, to_ref = min(options, key=lambda o: (o[0], o[1].x, o[1].y))
    return ('p', ref_poly, ref_z), to_ref, ref_z


def point_key(s: HalfTranslationSurface, poly: int, z: Vec) -> tuple:
    """Chart-independent key of the surface point z of polygon `poly`."""
    return _local_frame(s, poly, z)[0]


@dataclass(frozen=True)
class _Pass:
    """One passage of a curve through a point: directions in the point's reference chart."""
    key: tuple
    point: Vec
    piece: int
    t: QuadNum
    incoming: Vec
    outgoing: Vec


def _passes(curve: PLCurve, poly: int, z: Vec) -> list[_Pass]:
    s = curve.surface
    key, _, _ = _local_frame(s, poly, z)
    out = []
    n = len(curve)
    for k, piece in enumerate(curve.pieces):
        # through the junction at the start of piece k
        k_key, to_ref, ref_z = _local_frame(s, piece.poly, piece.start)
        if k_key == key:
            prev = curve.pieces[(k - 1) % n]
            _, prev_ref, _ = _local_frame(s, prev.poly, prev.end)
            out.append(_Pass(key, ref_z, k, ZERO, prev_ref.direction(prev.vector),
                             to_ref.direction(piece.vector)))
        # through the interior of piece k
        point = _point_on_piece(s, piece, key)
        if point is not None and point != piece.start and point != piece.end:
            _, to_ref, ref_z = _local_frame(s, piece.poly, point)
            d = to_ref.direction(piece.vector)
            out.append(_Pass(key, ref_z, k, segment_param(point, piece.start, piece.end), d, d))
    return out


def _point_on_piece(s: HalfTranslationSurface, piece: ChartSegment, key: tuple) -> Optional[Vec]:
    if key[0] == 'v':
        return None
    _, ref_poly, ref_z = key
    if piece.poly == ref_poly and on_segment(ref_z, piece.start, piece.end):
        return ref_z
    p = s.polygons[ref_poly]
    for e in p.edges_containing(ref_z):
        q, _, g = s.partner(ref_poly, e)
        if q == piece.poly and on_segment(g(ref_z), piece.start, piece.end):
            return g(ref_z)
    return None


def _side(a: _Pass, ray: Vec, outgoing: bool) -> tuple[int, bool]:
    """Side (+1 left, −1 right) of a β ray relative to the α passage.

    A ray lying along α is pushed to β's left: outgoing rays turn slightly
    counterclockwise, incoming ones slightly clockwise.
    """
    a_out, a_back = a.outgoing, -a.incoming
    along_out = a_out.cross(ray).sign() == 0 and a_out.dot(ray).sign() > 0
    along_back = a_back.cross(ray).sign() == 0 and a_back.dot(ray).sign() > 0
    if along_out:
        return (1 if outgoing else -1), True
    if along_back:
        return (-1 if outgoing else 1), True
    return (1 if strictly_between_ccw(a_out, a_back, ray) else -1), False


@dataclass(frozen=True)
class Intersection:
    key: tuple
    point: Vec
    sign: int
    perturbed: bool
    alpha_at: tuple[int, QuadNum]
    beta_at: tuple[int, QuadNum]


@dataclass
class IntersectionReport:
    crossings: list[Intersection]
    touches: list[Intersection]

    def __len__(self):
        return len(self.crossings)

    @property
    def algebraic(self) -> int:
        return sum(c.sign for c in self.crossings)

    @property
    def perturbations(self) -> int:
        return sum(1 for c in self.crossings + self.touches if c.perturbed)


def _candidate_points(alpha: PLCurve, beta: PLCurve) -> dict:
    s = alpha.surface
    found: dict[tuple, tuple[int, Vec]] = {}
    for a in alpha.pieces:
        for b in beta.pieces:
            if a.poly != b.poly:
                continue
            hit = segment_intersection(a.start, a.end, b.start, b.end)
            if hit is None:
                continue
            for z in ([hit[1]] if hit[0] == 'point' else [hit[1], hit[2]]):
                key, _, _ = _local_frame(s, a.poly, z)
                found.setdefault(key, (a.poly, z))
    alpha_junctions = {}
    for a in alpha.pieces:
        key, _, _ = _local_frame(s, a.poly, a.start)
        alpha_junctions[key] = (a.poly, a.start)
    for b in beta.pieces:
        key, _, _ = _local_frame(s, b.poly, b.start)
        if key in alpha_junctions:
            found.setdefault(key, alpha_junctions[key])
    return found


def intersections(alpha: PLCurve, beta: PLCurve) -> IntersectionReport:
    """Transverse crossings of α and β, with signs (β crossing α from right to left is +1)."""
    if alpha.same_as(beta):
        raise CurveError('intersections of a curve with itself: use is_simple')
    crossings, touches = [], []
    for key, (poly, z) in _candidate_points(alpha, beta).items():
        a_passes = _passes(alpha, poly, z)
        b_passes = _passes(beta, poly, z)
        for a in a_passes:
            for b in b_passes:
                side_in, p_in = _side(a, -b.incoming, False)
                side_out, p_out = _side(a, b.outgoing, True)
                item = Intersection(key, a.point, side_out, p_in or p_out, (a.piece, a.t), (b.piece, b.t))
                (crossings if side_in != side_out else touches).append(item)
    crossings.sort(key=lambda c: c.alpha_at)
    return IntersectionReport(crossings, touches)


def is_simple(curve: PLCurve) -> tuple[bool, Optional[dict]]:
    """Embeddedness check; on failure returns a witness."""
    s = curve.surface
    n = len(curve)
    pieces = curve.pieces
    for i in range(n):
        for j in range(i + 1, n):
            a, b = pieces[i], pieces[j]
            if a.poly != b.poly:
                continue
            hit = segment_intersection(a.start, a.end, b.start, b.end)
            if hit is None:
                continue
            if hit[0] == 'overlap':
                return False, {'kind': 'coincidence', 'pieces': (i, j), 'point': str(hit[1])}
            z = hit[1]
            if j == i + 1 and z == a.end == b.start:
                continue
            if i == 0 and j == n - 1 and z == a.start == b.end:
                continue
            return False, {'kind': 'crossing', 'pieces': (i, j), 'point': str(z)}
    seen: dict[tuple, int] = {}
    for k, piece in enumerate(pieces):
        key, _, _ = _local_frame(s, piece.poly, piece.start)
        if key in seen:
            return False, {'kind': 'repeated point', 'pieces': (seen[key], k), 'point': str(piece.start)}
        seen[key] = k
    return True, None


# ─── Homology ────────────────────────────────────────────────

@dataclass(frozen=True)
class HomologyBasis:
    coordinates: tuple[int, ...]
    reductions: tuple[tuple[int, tuple[Fraction, ...]], ...]
    non_tree: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.coordinates)


@lru_cache(maxsize=32)
def homology_basis(s: HalfTranslationSurface) -> HomologyBasis:
    """Free coordinates on H1 from gluing-record crossing counts.

    Crossing vectors are dual cycles; a dual spanning tree fixes the cycle
    coordinates and vertex-link relations are eliminated by exact row
    reduction.
    """
    tree: set[int] = set()
    seen = {0}
    stack = [0]
    while stack:
        p = stack.pop()
        for e in range(len(s.polygons[p])):
            q, _, _ = s.partner(p, e)
            if q not in seen:
                seen.add(q)
                tree.add(s.glue_index(p, e)[0])
                stack.append(q)
    non_tree = tuple(i for i in range(len(s.gluings)) if i not in tree)
    column = {rec: c for c, rec in enumerate(non_tree)}

    rows = []
    for cone in s.cone_points:
        vec = [Fraction(0)] * len(non_tree)
        for q, j in cone.corners:
            idx, sign = s.glue_index(q, (j - 1) % len(s.polygons[q]))
            if idx in column:
                vec[column[idx]] += sign
        rows.append(vec)

    reductions = []
    pivots = []
    for col in range(len(non_tree)):
        pivot_row = next((r for r in rows if r[col] != 0), None)
        if pivot_row is None:
            continue
        rows.remove(pivot_row)
        pivot_row = [x / pivot_row[col] for x in pivot_row]
        rows = [[x - r[col] * y for x, y in zip(r, pivot_row)] for r in rows]
        reductions = [(c, tuple(x - v[col] * y for x, y in zip(v, pivot_row))) for c, v in reductions]
        reductions.append((col, tuple(pivot_row)))
        pivots.append(col)
    free = tuple(c for c in range(len(non_tree)) if c not in pivots)
    if len(free) != 2 - s.euler_characteristic:
        log.warning('homology rank %d differs from 2g = %d', len(free), 2 - s.euler_characteristic)
    return HomologyBasis(free, tuple(reductions), non_tree)


def crossing_counts(curve: PLCurve) -> list[int]:
    s = curve.surface
    counts = [0] * len(s.gluings)
    for crossings in curve.development().transitions:
        for poly, edge in crossings:
            idx, sign = s.glue_index(poly, edge)
            counts[idx] += sign
    return counts


def homology_class(curve: PLCurve) -> tuple[tuple, bool]:
    """(class coordinates, nonseparating) for a closed curve."""
    basis = homology_basis(curve.surface)
    counts = crossing_counts(curve)
    vec = [Fraction(counts[rec]) for rec in basis.non_tree]
    for col, row in basis.reductions:
        factor = vec[col]
        if factor:
            vec = [x - factor * y for x, y in zip(vec, row)]
    coords = tuple(int(vec[c]) if vec[c].denominator == 1 else vec[c] for c in basis.coordinates)
    return coords, any(coords)


def is_essential(curve: PLCurve) -> bool:
    coords, nonzero = homology_class(curve)
    if nonzero:
        return True
    hol = curve.development().holonomy
    return hol is not None and (hol.sign < 0 or not hol.shift.is_zero())


# ─── Bicorns ─────────────────────────────────────────────────

def _arc(curve: PLCurve, start: tuple[int, QuadNum], end: tuple[int, QuadNum]) -> list[ChartSegment]:
    """Pieces of `curve` from position `start` forward to `end`."""
    n = len(curve)
    k, t = start
    k1, t1 = end
    out = []
    for _ in range(n + 1):
        piece = curve.pieces[k]
        a = curve.point_at(k, t)
        if k == k1 and t < t1:
            out.append(ChartSegment(piece.poly, a, curve.point_at(k, t1)))
            return out
        if a != piece.end:
            out.append(ChartSegment(piece.poly, a, piece.end))
        k, t = (k + 1) % n, ZERO
        if k == k1 and t1 == 0:
            return out
    raise CurveError('arc does not terminate')


@dataclass
class Bicorn:
    curve: PLCurve
    arc_a: list[ChartSegment]
    arc_b: list[ChartSegment]
    corners: tuple[Vec, ...]
    crossings_with_beta: int
    homology: tuple = ()
    nonseparating: bool = False
    ends: tuple[int, ...] = ()
    forward: bool = True


def _between(order: list[int], i: int, j: int) -> list[int]:
    """Indices strictly after i and strictly before j in cyclic order."""
    n = len(order)
    pi, pj = order.index(i), order.index(j)
    out = []
    k = (pi + 1) % n
    while k != pj:
        out.append(order[k])
        k = (k + 1) % n
    return out


def bicorns(alpha: PLCurve, beta: PLCurve, nonseparating_only: bool = False) -> list[Bicorn]:
    """Simple essential curves made of one arc of α and one arc of β."""
    report = intersections(alpha, beta)
    pts = report.crossings
    m = len(pts)
    if m < 2:
        return []
    alpha_order = list(range(m))
    beta_order = sorted(range(m), key=lambda idx: pts[idx].beta_at)
    out = []
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            a_inside = set(_between(alpha_order, i, j))
            arc_a = _arc(alpha, pts[i].alpha_at, pts[j].alpha_at)
            for forward in (True, False):
                if forward:
                    b_inside = set(_between(beta_order, j, i))
                    arc_b = _arc(beta, pts[j].beta_at, pts[i].beta_at)
                else:
                    b_inside = set(_between(beta_order, i, j))
                    arc_b = [p.reversed() for p in reversed(_arc(beta, pts[i].beta_at, pts[j].beta_at))]
                if a_inside & b_inside or not arc_a or not arc_b:
                    continue
                try:
                    curve = PLCurve(alpha.surface, tuple(arc_a + arc_b), f'bicorn({i},{j})')
                    simple, _ = is_simple(curve)
                    if not simple or not is_essential(curve):
                        continue
                    coords, nonsep = homology_class(curve)
                except CurveError as e:
                    log.debug('bicorn (%d, %d) rejected: %s', i, j, e)
                    continue
                if nonseparating_only and not nonsep:
                    continue
                out.append(Bicorn(curve, arc_a, arc_b, (pts[i].point, pts[j].point),
                                  len(a_inside), coords, nonsep))
    return out


class _Surgery:
    """Bicorns a ∪ b with b = β from crossing u forward to crossing v.

    With `forward` set, a runs along α from v to u; otherwise it runs along α
    from u to v and is traversed backwards. Crossings are indexed in α order.
    """

    def __init__(self, alpha: PLCurve, beta: PLCurve, pts: list[Intersection]):
        self.alpha, self.beta, self.pts = alpha, beta, pts
        self.alpha_order = list(range(len(pts)))
        self.by_rank = sorted(self.alpha_order, key=lambda idx: pts[idx].beta_at)
        self.rank = {idx: k for k, idx in enumerate(self.by_rank)}

    def inside(self, u: int, v: int, forward: bool) -> set[int]:
        """Crossings in the interior of the α arc."""
        return set(_between(self.alpha_order, v, u) if forward else _between(self.alpha_order, u, v))

    def _first_hit(self, start: int, stop: int, inside: set[int], step: int) -> Optional[int]:
        """First crossing of `inside` met walking β from `start`; None once `stop` is reached."""
        m = len(self.pts)
        k = self.rank[start]
        while True:
            k = (k + step) % m
            idx = self.by_rank[k]
            if idx == stop:
                return None
            if idx in inside:
                return idx

    def extensions(self, u: int, v: int, forward: bool) -> Optional[list[tuple[int, int]]]:
        """New (u, v) after extending b past either end; None when β itself is reached."""
        inside = self.inside(u, v, forward)
        ahead = self._first_hit(v, u, inside, 1)
        behind = self._first_hit(u, v, inside, -1)
        if ahead is None or behind is None:
            return None
        return [(u, ahead), (behind, v)]

    def bicorn(self, u: int, v: int, forward: bool) -> Bicorn:
        pts = self.pts
        arc_b = _arc(self.beta, pts[u].beta_at, pts[v].beta_at)
        if forward:
            arc_a = _arc(self.alpha, pts[v].alpha_at, pts[u].alpha_at)
        else:
            arc_a = [p.reversed() for p in reversed(_arc(self.alpha, pts[u].alpha_at, pts[v].alpha_at))]
        curve = PLCurve(self.alpha.surface, tuple(arc_b + arc_a), f'bicorn({u},{v})')
        simple, witness = is_simple(curve)
        if not simple:
            raise CurveError(f'bicorn ({u}, {v}) is not simple: {witness}')
        if not is_essential(curve):
            raise CurveError(f'bicorn ({u}, {v}) is inessential')
        coords, nonsep = homology_class(curve)
        return Bicorn(curve, arc_a, arc_b, (pts[u].point, pts[v].point),
                      len(self.inside(u, v, forward)), coords, nonsep, (u, v), forward)


def _whole(curve: PLCurve, crossings: int, as_alpha: bool) -> Bicorn:
    pieces = list(curve.pieces)
    coords, nonsep = homology_class(curve)
    return Bicorn(curve, pieces if as_alpha else [], [] if as_alpha else pieces, (),
                  crossings, coords, nonsep)


def _same_class(a: Bicorn, b: Bicorn) -> bool:
    return a.homology == b.homology or a.homology == tuple(-x for x in b.homology)


def _record(steps: list[Bicorn], b: Bicorn, collapse: bool) -> None:
    # on a torus homologous simple curves are isotopic: keep one entry per class
    if collapse and _same_class(steps[-1], b):
        if len(steps) > 1:
            steps[-1] = b
        return
    steps.append(b)


def bicorn_surgery(alpha: PLCurve, beta: PLCurve, max_steps: int = 64) -> list[Bicorn]:
    """One-arc surgery sequence from α to β.

    Every bicorn keeps the base crossing u or the far crossing v of its
    predecessor and extends its β arc to the first crossing inside its α arc,
    so consecutive curves meet at most once after push-off and the crossings
    with β strictly decrease. Of the two extensions the one leaving fewer
    crossings wins, ties broken by shorter L1 length. β is reached when an
    extension runs all the way around β.
    """
    s = alpha.surface
    if alpha.same_as(beta):
        return [_whole(alpha, 0, True)]
    pts = intersections(alpha, beta).crossings
    steps = [_whole(alpha, len(pts), True)]
    target = _whole(beta, 0, False)
    collapse = s.genus == 1 and not s.singular_points
    if not pts:
        steps.append(target)
        return steps

    surgery = _Surgery(alpha, beta, pts)
    u = v = surgery.by_rank[0]
    directions = (True, False)
    for _ in range(max_steps):
        moves = surgery.extensions(u, v, directions[0])
        if moves is None:
            if collapse and len(steps) > 1 and _same_class(steps[-1], target):
                steps[-1] = target
            else:
                steps.append(target)
            return steps
        candidates = []
        for nu, nv in moves:
            for forward in directions:
                try:
                    candidates.append(surgery.bicorn(nu, nv, forward))
                except CurveError as e:
                    log.debug('surgery (%d, %d) rejected: %s', nu, nv, e)
        if not candidates:
            raise StuckSurgery(f'no bicorn extends ({u}, {v})', {
                'current': curve_to_text(steps[-1].curve), 'target': curve_to_text(beta),
                'crossings': steps[-1].crossings_with_beta})
        chosen = min(candidates, key=lambda b: (b.crossings_with_beta, b.curve.l1_length()))
        (u, v), directions = chosen.ends, (chosen.forward,)
        log.debug('bicorn (%d, %d): %d crossings left', u, v, chosen.crossings_with_beta)
        _record(steps, chosen, collapse)
    raise StuckSurgery('bicorn path did not reach the target', {'steps': max_steps})


def bicorn_path(alpha: PLCurve, beta: PLCurve, max_steps: int = 64) -> list[PLCurve]:
    """Curves of the one-arc surgery sequence from α to β."""
    return [b.curve for b in bicorn_surgery(alpha, beta, max_steps)]


# ─── Serialisation ───────────────────────────────────────────

def curve_to_text(curve: PLCurve) -> str:
    lines = [f'curve {curve.name or "unnamed"}']
    for p in curve.pieces:
        lines.append(f'  segment {p.poly} ({render(p.start.x)}, {render(p.start.y)}) -> '
                     f'({render(p.end.x)}, {render(p.end.y)})')
    lines.append('end')
    return '\n'.join(lines)


def curve_from_text(s: HalfTranslationSurface, text: str) -> PLCurve:
    name = ''
    pieces = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line == 'end':
            continue
        if line.startswith('curve'):
            name = line[5:].strip()
            continue
        if not line.startswith('segment'):
            raise CurveError(f'unexpected curve line {line!r}')
        body = line[len('segment'):].strip()
        poly_text, _, rest = body.partition(' ')
        start_text, _, end_text = rest.partition('->')
        pieces.append(ChartSegment(int(poly_text), _vec(start_text, s.d), _vec(end_text, s.d)))
    return PLCurve(s, tuple(pieces), name)


def _vec(text: str, d: int) -> Vec:
    x, _, y = text.strip().strip('()').partition(',')
    return Vec(parse(x.strip(), d), parse(y.strip(), d))
