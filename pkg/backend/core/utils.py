import pandas as pd
from typing import Optional, Iterable

from backend.core.numerics import QuadNum, Vec, render

EXACTNESS_TAGS = ('exact', 'interval-lower', 'interval-upper', 'empirical')


# ─── Plane predicates ────────────────────────────────────────

def orient(a: Vec, b: Vec, c: Vec) -> int:
    """Sign of the turn a → b → c (+1 left, −1 right, 0 collinear)."""
    return (b - a).cross(c - a).sign()


def on_segment(p: Vec, a: Vec, b: Vec) -> bool:
    """p lies on the closed segment [a, b]."""
    if orient(a, b, p) != 0:
        return False
    return (p - a).dot(p - b).sign() <= 0


def segment_param(p: Vec, a: Vec, b: Vec) -> QuadNum:
    """Parameter t with p = a + t(b − a), for p known to be on the line."""
    d = b - a
    return (p - a).x / d.x if d.x else (p - a).y / d.y


def segment_intersection(a: Vec, b: Vec, c: Vec, d: Vec) -> Optional[tuple]:
    """Intersection of closed segments [a,b] and [c,d].

    Returns None, ('point', p) or ('overlap', p, q) for collinear overlaps.
    """
    r, s = b - a, d - c
    denom = r.cross(s)
    if denom:
        t = (c - a).cross(s) / denom
        u = (c - a).cross(r) / denom
        if t.sign() < 0 or (t - 1).sign() > 0 or u.sign() < 0 or (u - 1).sign() > 0:
            return None
        return ('point', a + r.scale(t))
    if (c - a).cross(r):
        return None
    # collinear: project onto r
    if r.is_zero():
        return ('point', a) if on_segment(a, c, d) else None
    rr = r.dot(r)
    t0 = (c - a).dot(r) / rr
    t1 = (d - a).dot(r) / rr
    lo, hi = min(t0, t1), max(t0, t1)
    lo, hi = max(lo, QuadNum(0)), min(hi, QuadNum(1))
    if lo > hi:
        return None
    if lo == hi:
        return ('point', a + r.scale(lo))
    return ('overlap', a + r.scale(lo), a + r.scale(hi))


def in_convex(p: Vec, vertices: list[Vec]) -> bool:
    """p in the closed convex polygon (counterclockwise vertices)."""
    n = len(vertices)
    return all(orient(vertices[i], vertices[(i + 1) % n], p) >= 0 for i in range(n))


def half_plane(v: Vec) -> int:
    """0 for arguments in [0, π), 1 for [π, 2π)."""
    return 0 if (v.y.sign() > 0 or (not v.y and v.x.sign() > 0)) else 1


def angle_less(u: Vec, v: Vec) -> bool:
    """Argument of u strictly smaller than argument of v, both in [0, 2π)."""
    hu, hv = half_plane(u), half_plane(v)
    if hu != hv:
        return hu < hv
    return u.cross(v).sign() > 0


def strictly_between_ccw(start: Vec, end: Vec, w: Vec) -> bool:
    """w lies strictly inside the counterclockwise sweep from start to end.

    The sweep is taken in (0, 2π); equal start and end mean a full turn.
    """
    base = start.conj()
    rel_w = w.cmul(base)
    rel_end = end.cmul(base)
    if not rel_w.y and rel_w.x.sign() > 0:
        return False
    if not rel_end.y and rel_end.x.sign() > 0:
        return True
    return angle_less(rel_w, rel_end)


def count_half_turns(rays: Iterable[Vec], ccw: bool = True) -> tuple[int, bool]:
    """Total angle swept through consecutive rays, each step in (0, π].

    Returns (c, landed): the sweep equals c·π exactly when `landed`, and lies
    strictly between c·π and (c+1)·π otherwise.
    """
    rays = [r if ccw else r.conj() for r in rays]
    ref = rays[0]
    count = 0
    side = 0
    for prev, cur in zip(rays, rays[1:]):
        new_side = ref.cross(cur).sign()
        if side == 0:
            # leaving the reference line; a straight step lands on it again
            if new_side == 0 and prev.dot(cur).sign() < 0:
                count += 1
        elif new_side == 0 or new_side != side:
            count += 1
        side = new_side
    return count, side == 0


# ─── Report frames ────────────────────────────────────────────

def exact_cell(x) -> str:
    return render(x) if isinstance(x, QuadNum) else str(x)


def tagged_frame(rows: list[dict], tags: dict[str, str]) -> pd.DataFrame:
    """Rows → DataFrame with a `<col>_tag` column next to every tagged column."""
    df = pd.DataFrame(rows)
    if df.empty:
        return df
    columns = []
    for col in df.columns:
        if df[col].map(lambda v: isinstance(v, QuadNum)).any():
            df[col] = df[col].map(exact_cell)
        columns.append(col)
        if col in tags:
            tag = tags[col]
            if tag not in EXACTNESS_TAGS:
                raise ValueError(f"unknown exactness tag {tag!r}")
            df[f'{col}_tag'] = tag
            columns.append(f'{col}_tag')
    return df[columns]
