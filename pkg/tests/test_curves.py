import math

import numpy as np
import pytest

from backend.core.errors import CurveError
from backend.core.numerics import Vec
from backend.metrics.curves import (
    bicorn_path, bicorn_surgery, bicorns, curve_from_text, curve_to_text, homology_basis,
    homology_class, intersections, is_essential, is_simple, straight_loop, torus_basis,
)
from backend.metrics.graphdist import farey_distance, slope_of


@pytest.fixture(scope='module')
def horizontal(square):
    return straight_loop(square, 1, 0)


@pytest.fixture(scope='module')
def vertical(square):
    return straight_loop(square, 0, 1)


def test_torus_basis(square, golden):
    assert torus_basis(square) == (Vec.of(1, 0), Vec.of(0, 1))
    h1, h2 = torus_basis(golden)
    assert h1 == Vec.of(1, 0)
    assert h1.cross(h2) == 1


def test_torus_basis_rejects_other_surfaces(origami):
    with pytest.raises(CurveError):
        torus_basis(origami)


def test_straight_loops(horizontal, vertical):
    assert len(horizontal) == 2
    assert horizontal.l1_length() == 1
    assert vertical.l1_length() == 1
    assert horizontal.development().holonomy.shift == Vec.of(1, 0)
    assert is_simple(horizontal) == (True, None)


def test_zero_class_has_no_loop(square):
    with pytest.raises(CurveError):
        straight_loop(square, 0, 0)


def test_same_as_ignores_start_and_orientation(horizontal):
    rotated = type(horizontal)(horizontal.surface, horizontal.pieces[1:] + horizontal.pieces[:1])
    assert horizontal.same_as(rotated)
    assert horizontal.same_as(horizontal.reversed())


def test_homology_ranks(square, pillowcase, origami):
    assert homology_basis(square).rank == 2
    assert homology_basis(pillowcase).rank == 0
    assert homology_basis(origami).rank == 4


def test_homology_classes_of_straight_loops(horizontal, vertical, square):
    assert homology_class(horizontal) == ((1, 0), True)
    assert homology_class(vertical) == ((0, 1), True)
    assert homology_class(straight_loop(square, 1, 1))[0] == (1, 1)
    assert is_essential(horizontal)


def test_horizontal_and_vertical_cross_once(horizontal, vertical):
    report = intersections(horizontal, vertical)
    assert len(report.crossings) == 1
    assert abs(report.algebraic) == 1


def test_curve_text_format(horizontal, square):
    text = curve_to_text(horizontal)
    assert text.splitlines()[0] == 'curve (1,0)'
    assert curve_from_text(square, text) == horizontal


def test_degenerate_piece_is_rejected(horizontal):
    piece = horizontal.pieces[0]
    with pytest.raises(CurveError):
        type(horizontal)(horizontal.surface, (type(piece)(piece.poly, piece.start, piece.start),))


def test_intersection_number_of_one_zero_and_one_two(horizontal, square):
    report = intersections(horizontal, straight_loop(square, 1, 2))
    assert len(report.crossings) == 2
    assert abs(report.algebraic) == 2


def test_bicorns_are_simple_essential_with_one_arc_each(horizontal, square):
    found = bicorns(horizontal, straight_loop(square, 1, 3))
    assert found
    for b in found:
        assert b.arc_a and b.arc_b
        assert is_simple(b.curve)[0]
        assert is_essential(b.curve)


def _check_surgery(alpha, beta):
    steps = bicorn_surgery(alpha, beta)
    assert steps[0].curve is alpha
    assert steps[-1].curve is beta
    counts = [b.crossings_with_beta for b in steps]
    assert counts[0] == len(intersections(alpha, beta))
    assert all(a > b for a, b in zip(counts[:-1], counts[1:-1]))
    slopes = [slope_of(b.curve) for b in steps]
    assert all(farey_distance(x, y) <= 1 for x, y in zip(slopes, slopes[1:]))
    assert len(steps) - 1 >= farey_distance(slopes[0], slopes[-1])
    return steps


def test_bicorn_path_steps_along_the_farey_graph(square):
    steps = _check_surgery(straight_loop(square, 2, -5), straight_loop(square, 1, 1))
    assert len(steps) - 1 >= 3


def test_bicorn_path_over_random_torus_pairs(square):
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 12:
        p1, q1, p2, q2 = (int(x) for x in rng.integers(-4, 5, size=4))
        if math.gcd(p1, q1) != 1 or math.gcd(p2, q2) != 1:
            continue
        if (p1, q1) in ((p2, q2), (-p2, -q2)):
            continue
        _check_surgery(straight_loop(square, p1, q1), straight_loop(square, p2, q2))
        checked += 1


def test_single_crossing_needs_one_surgery(square):
    alpha = straight_loop(square, 1, 0)
    path = bicorn_path(alpha, straight_loop(square, 0, 1))
    assert len(path) == 2
