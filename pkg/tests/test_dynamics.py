import time

import pytest

from backend.core.errors import ConfigError
from backend.core.numerics import QuadNum, Vec, parse
from backend.core.surface import SurfacePoint
from backend.metrics import dynamics
from backend.metrics.curves import point_key, straight_loop
from backend.metrics.graphdist import monotone_after


def test_declared_automorphisms(square, golden):
    assert sorted(square.automorphisms) == ['identity', 'parabolic']
    assert sorted(golden.automorphisms) == ['cat', 'cat_inv']


def test_unknown_automorphism(square):
    with pytest.raises(ConfigError):
        dynamics.AffineAuto.named(square, 'rotation')


def test_cat_map_linear_data(golden):
    cat = dynamics.AffineAuto.named(golden, 'cat')
    assert cat.determinant == 1
    assert cat.trace == 3
    assert cat.is_anosov
    assert cat.expansion == parse('3/2+1/2√5')
    assert cat.expansion_estimate() == pytest.approx(2.618034, rel=1e-6)


def test_parabolic_is_not_anosov(square):
    f = dynamics.AffineAuto.named(square, 'parabolic')
    assert f.trace == 2
    assert not f.is_anosov
    assert f.expansion == 1


def test_homology_matrices(square, golden):
    assert dynamics.homology_matrix(dynamics.AffineAuto.named(golden, 'cat')) == ((2, 1), (1, 1))
    assert dynamics.homology_matrix(dynamics.AffineAuto.named(golden, 'cat_inv')) == ((1, -1), (-1, 2))
    assert dynamics.homology_matrix(dynamics.AffineAuto.named(square, 'parabolic')) == ((1, 0), (1, 1))


def test_matrix_power_class(square, golden):
    parabolic = dynamics.AffineAuto.named(square, 'parabolic')
    assert dynamics.matrix_power_class(parabolic, (1, 0), 3) == (1, 3)
    cat = dynamics.AffineAuto.named(golden, 'cat')
    assert dynamics.matrix_power_class(cat, (1, 0), 2) == (5, 3)


def test_torus_class_of_straight_loops(square):
    assert dynamics.torus_class(straight_loop(square, 1, 0)) == (1, 0)
    assert dynamics.torus_class(straight_loop(square, 2, 5)) == (2, 5)


def test_identity_fixes_points(square):
    identity = dynamics.AffineAuto.named(square, 'identity')
    p = SurfacePoint(0, Vec.of(QuadNum(1) / 3, QuadNum(1) / 5))
    image = identity.map_point(p)
    assert point_key(square, image.poly, image.z) == point_key(square, p.poly, p.z)


def test_identity_verifies(square):
    report = dynamics.AffineAuto.named(square, 'identity').verify()
    assert report['valid']
    assert report['violations'] == []


def test_identity_orbit_is_elliptic(square):
    identity = dynamics.AffineAuto.named(square, 'identity')
    orbit = dynamics.axis_experiment(identity, straight_loop(square, 1, 0), 2)
    assert orbit.n == 2
    assert len(orbit.records) == 3
    assert orbit.width_ratio == 1
    assert orbit.signature == 'elliptic'
    assert list(orbit.records['class']) == ['(1, 0)'] * 3
    assert orbit.fit['slope'] == 0.0


def test_identity_apply_returns_the_curve(square):
    identity = dynamics.AffineAuto.named(square, 'identity')
    loop = straight_loop(square, 1, 2)
    assert identity.apply(loop).same_as(loop)


@pytest.mark.parametrize('name', ['cat', 'cat_inv'])
def test_golden_automorphisms_verify(golden, name):
    report = dynamics.AffineAuto.named(golden, name).verify()
    assert report['valid']
    assert report['violations'] == []


def test_cat_inv_maps_the_anchor_to_itself(golden):
    f = dynamics.AffineAuto.named(golden, 'cat_inv')
    anchor = f.anchor_from
    image = f.map_point(anchor)
    assert point_key(golden, image.poly, image.z) == point_key(golden, anchor.poly, anchor.z)


def test_cat_axis_shrinks_widths_by_lambda(golden):
    cat = dynamics.AffineAuto.named(golden, 'cat')
    started = time.perf_counter()
    orbit = dynamics.axis_experiment(cat, straight_loop(golden, 1, 0), 12)
    assert time.perf_counter() - started < 60
    assert orbit.width_ratio == parse('3/2-1/2√5')
    assert orbit.records['class'].iloc[2] == str(dynamics.matrix_power_class(cat, (1, 0), 2))
    lowers = orbit.records['distanceLower'].tolist()
    assert lowers[0] == 0
    assert lowers[-1] > lowers[0]
    assert orbit.fit['slope'] > 0
    assert orbit.signature == 'hyperbolic'


def test_cat_inv_axis_grows_widths_by_lambda(golden):
    f = dynamics.AffineAuto.named(golden, 'cat_inv')
    orbit = dynamics.axis_experiment(f, straight_loop(golden, 1, 0), 4)
    assert orbit.width_ratio == parse('3/2+1/2√5')


def test_axis_needs_an_iterate(square):
    identity = dynamics.AffineAuto.named(square, 'identity')
    with pytest.raises(ConfigError):
        dynamics.axis_experiment(identity, straight_loop(square, 1, 0), 0)


def test_monotone_tail_of_distance_profile():
    assert monotone_after([0, 2, 1, 1, 3]) == 2
    assert monotone_after([1, 2, 3]) == 0
