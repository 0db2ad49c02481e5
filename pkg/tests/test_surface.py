from fractions import Fraction

import pytest

from backend.core.errors import SurfaceFormatError, SurfaceValidationError
from backend.core.numerics import QuadNum, Vec
from backend.core.surface import SurfacePoint, build_resolving_cover, load_surface

SQUARE = """
name square
field 5
polygon 0
  (0, 0)
  (1, 0)
  (1, 1)
  (0, 1)
glue (0.1, 0.3, translation)
glue (0.2, 0.0, translation)
"""


def test_shipped_surfaces_load(manager):
    assert sorted(manager.surfaces) == ['L-origami', 'golden-sheared-torus', 'pillowcase', 'square-torus']


@pytest.mark.parametrize('name', ['L-origami', 'golden-sheared-torus', 'pillowcase', 'square-torus'])
def test_gauss_bonnet_holds(manager, name):
    assert manager.resolve(name).gauss_bonnet()['holds']


def test_torus_invariants(square, golden):
    for s in (square, golden):
        assert s.euler_characteristic == 0
        assert s.genus == 1
        assert s.is_translation_surface
        assert s.singular_points == []
        assert s.area() == 1


def test_pillowcase_invariants(pillowcase):
    assert pillowcase.euler_characteristic == 2
    assert pillowcase.genus == 0
    assert not pillowcase.is_translation_surface
    assert len(pillowcase.P) == 4
    assert all(c.angle_label == 'π' for c in pillowcase.P)


def test_origami_has_one_six_pi_point(origami):
    assert origami.genus == 2
    assert [c.k for c in origami.singular_points] == [6]
    assert origami.area() == 3


def test_resolving_cover_of_pillowcase(pillowcase):
    cover = build_resolving_cover(pillowcase)
    assert cover.degree == 2
    assert cover.cover.euler_characteristic == 0
    assert cover.cover.is_translation_surface
    assert cover.riemann_hurwitz()['holds']
    p = SurfacePoint(0, Vec.of(QuadNum(1) / 3, QuadNum(1) / 4))
    assert cover.project(cover.lift(p, 1)) == p


def test_translation_surface_is_its_own_cover(square):
    cover = build_resolving_cover(square)
    assert cover.degree == 1
    assert cover.cover is square


def test_trace_wraps_around_the_square(square):
    start = SurfacePoint(0, Vec.of(QuadNum(1) / 4, QuadNum(1) / 2))
    trace = square.trace(start, Vec.of(1, 0))
    assert trace.terminal == 'reached'
    assert trace.end == start
    assert len(trace.pieces) == 2
    assert trace.crossings == [(0, 1)]


def test_missing_field_header():
    with pytest.raises(SurfaceFormatError):
        load_surface(SQUARE.replace('field 5', ''), 'bad.surf')


def test_format_error_reports_line():
    with pytest.raises(SurfaceFormatError) as info:
        load_surface(SQUARE.replace('glue (0.2, 0.0, translation)', 'glue 0.2 0.0'), 'bad.surf')
    assert info.value.line == 10
    assert info.value.source == 'bad.surf'


def test_unglued_edge_is_rejected():
    with pytest.raises(SurfaceValidationError):
        load_surface(SQUARE.replace('glue (0.2, 0.0, translation)\n', ''))


def test_incompatible_gluing_is_rejected():
    with pytest.raises(SurfaceValidationError):
        load_surface(SQUARE.replace('(0.1, 0.3, translation)', '(0.1, 0.3, flip)'))


def test_catalog_lists_every_surface(manager):
    catalog = manager.catalog()
    assert list(catalog['name']) == sorted(manager.surfaces)
    row = catalog.set_index('name').loc['pillowcase']
    assert row['coverDegree'] == 2
    assert row['singular'] == 4


L_HEXAGON = """
name L-hexagon
field 5
polygon 0
  (0, 0)
  (1, 0)
  (2, 0)
  (2, 1)
  (1, 1)
  (1, 2)
  (0, 2)
  (0, 1)
glue (0.0, 0.5, translation)
glue (0.1, 0.3, translation)
glue (0.2, 0.7, translation)
glue (0.4, 0.6, translation)
transversal s (0, 7/4, 0, 1/2)
"""


def test_nonconvex_polygon_is_split_into_triangles():
    s = load_surface(L_HEXAGON)
    assert len(s.pieces[0]) == 6
    assert all(len(p) == 3 for p in s.polygons)
    assert s.area() == 3
    assert s.genus == 2
    assert [c.k for c in s.singular_points] == [6]
    assert s.gauss_bonnet()['holds']


def test_nonconvex_transversal_moves_to_its_triangle():
    s = load_surface(L_HEXAGON)
    inside = s.chart_point(0, Vec.of(Fraction(1, 4), Fraction(7, 4)))
    assert s.transversals['s'].poly == inside.poly


def test_transversal_across_a_diagonal_is_rejected():
    with pytest.raises(SurfaceValidationError):
        load_surface(L_HEXAGON.replace('transversal s (0, 7/4, 0, 1/2)', 'transversal s (0, 1/2, 0, 2)'))


def test_traces_cross_the_reflex_corner():
    s = load_surface(L_HEXAGON)
    up = s.chart_point(0, Vec.of(Fraction(1, 3), Fraction(1, 5)))
    trace = s.trace(up, Vec.of(0, 2))
    assert trace.terminal == 'reached'
    assert trace.end == up
    left = s.chart_point(0, Vec.of(Fraction(3, 2), Fraction(1, 2)))
    trace = s.trace(left, Vec.of(-2, 0))
    assert trace.terminal == 'reached'
    assert trace.end.z == left.z


def test_trace_stops_at_the_reflex_cone_point():
    s = load_surface(L_HEXAGON)
    start = s.chart_point(0, Vec.of(Fraction(1, 2), Fraction(1, 2)))
    trace = s.trace(start, Vec.of(1, 1))
    assert trace.terminal == 'cone'
    assert trace.fraction == Fraction(1, 2)
    assert trace.cone_point.k == 6


def test_self_intersecting_polygon_is_rejected():
    bowtie = SQUARE.replace('(1, 1)\n  (0, 1)', '(0, 1)\n  (1, 1)')
    with pytest.raises(SurfaceValidationError):
        load_surface(bowtie)
