import itertools
import os
from fractions import Fraction

import pytest

from backend.core.errors import ConfigError
from backend.core.numerics import QuadNum
from backend.metrics import graphdist as gd
from backend.metrics.curves import straight_loop
from tests.conftest import SCHEDULE_DIR


def test_slope_normal_form():
    assert gd.Slope.of(2, -4) == gd.Slope(-1, 2)
    assert gd.Slope.of(-3, 0) == gd.INFINITY
    assert gd.Slope(3, 5).height == 5
    with pytest.raises(ConfigError):
        gd.Slope(2, 4)
    with pytest.raises(ConfigError):
        gd.Slope.of(0, 0)


def test_continued_fraction():
    assert gd.continued_fraction(2, 5) == [0, 2, 2]
    assert gd.continued_fraction(13, 8) == [1, 1, 1, 1, 2]


@pytest.mark.parametrize('a, b, expected', [
    ((0, 1), (1, 0), 1),
    ((0, 1), (1, 2), 1),
    ((0, 1), (2, 5), 2),
    ((1, 0), (1, 1), 1),
    ((1, 2), (1, 2), 0),
    ((1, 0), (5, 2), 2),
])
def test_farey_distance(a, b, expected):
    assert gd.farey_distance(gd.Slope.of(*a), gd.Slope.of(*b), cross_check=True) == expected


def test_farey_ladder_contains_endpoints():
    ladder = gd.farey_ladder(gd.Slope(2, 5))
    assert gd.INFINITY in ladder
    assert gd.Slope(2, 5) in ladder
    assert all(s.q <= 5 for s in ladder)


def test_ladder_agrees_with_bounded_search():
    slopes = gd.slopes_up_to(2)
    for s1, s2 in itertools.product(slopes, repeat=2):
        assert gd.farey_distance(s1, s2) == gd.farey_bfs(s1, s2, 8)


def test_slopes_of_straight_loops(square):
    assert gd.slope_of(straight_loop(square, 1, 0)) == gd.INFINITY
    assert gd.slope_of(straight_loop(square, 0, 1)) == gd.Slope(0, 1)
    assert gd.is_torus(square)


def test_vertical_loop_is_in_every_window_set(square):
    ok, window = gd.in_D_eps_B(straight_loop(square, 0, 1), QuadNum(Fraction(1, 64)), QuadNum(8))
    assert ok
    assert window.width == 0


def test_horizontal_loop_membership_depends_on_size(square):
    horizontal = straight_loop(square, 1, 0)
    ok, window = gd.in_D_eps_B(horizontal, QuadNum(Fraction(1, 8)), QuadNum(1))
    assert not ok
    assert window.width == 1
    ok, window = gd.in_D_eps_B(horizontal, QuadNum(Fraction(1, 8)), QuadNum(Fraction(1, 16)))
    assert ok
    assert window.width == QuadNum(Fraction(1, 16))


def test_development_extent(square):
    assert gd.development_extent(straight_loop(square, 1, 0)) == (1, 1)
    size, width = gd.development_extent(straight_loop(square, 0, 1))
    assert size == 1
    assert width == 0


def test_distance_bounds_on_the_torus(square):
    horizontal = straight_loop(square, 1, 0)
    vertical = straight_loop(square, 0, 1)
    assert gd.fine_distance_bounds(horizontal, horizontal) == gd.DistanceBound(0, 0, ('identical',))
    bound = gd.fine_distance_bounds(horizontal, vertical)
    assert bound.lower == 0
    assert bound.upper <= 1 + gd.PUSHOFF_CALIBRATION
    assert 'farey' in bound.methods


def test_far_classes_skip_intersection_counting(square):
    bound = gd.fine_distance_bounds(straight_loop(square, 1, 0), straight_loop(square, 2, 5))
    assert bound == gd.DistanceBound(1, 5, ('farey',))


def test_invalid_distance_bound():
    with pytest.raises(Exception):
        gd.DistanceBound(3, 1)


def test_default_schedule():
    schedule = gd.Schedule.default(5)
    assert [b for b, _ in schedule.entries] == [1, 2, 3, 4, 5]
    assert [e for _, e in schedule.entries] == [Fraction(1, 2)] * 4 + [Fraction(1, 4)]


def test_schedule_validation():
    with pytest.raises(ConfigError):
        gd.Schedule.from_dict({'entries': []})
    with pytest.raises(ConfigError):
        gd.Schedule.from_dict({'entries': [{'B': '2', 'eps': '1/2'}, {'B': '1', 'eps': '1/4'}]})
    with pytest.raises(ConfigError):
        gd.Schedule.from_dict({'entries': [{'B': '1'}]})


def test_shipped_schedule_loads():
    schedule = gd.Schedule.load(os.path.join(SCHEDULE_DIR, 'fibonacci.json'))
    assert len(schedule.entries) == 6
    assert schedule.to_dict()['entries'][-1] == {'B': '13', 'eps': '1/4'}


def test_missing_schedule_file(tmp_path):
    with pytest.raises(ConfigError):
        gd.Schedule.load(str(tmp_path / 'nope.json'))


def test_constant_sequence_fails_certificate(square):
    seq = gd.constant_sequence(straight_loop(square, 0, 1), 4)
    report = gd.convergence_certificate(seq, gd.Schedule.default(2))
    assert not report.passed
    assert report.trends['windows']
    assert not report.trends['size']
    assert report.stabilization == {0: 0, 1: 0}
    assert report.witness['reason'] == 'size does not diverge'
    assert report.to_dict()['verdict'] == 'FAIL'
    frame = report.to_frame()
    assert len(frame) == 8
    assert set(frame['width_tag']) == {'exact'}


def test_alternating_sequence_breaks_window_tail(square):
    seq = gd.alternating_sequence(gd.constant_sequence(straight_loop(square, 0, 1), 4),
                                  gd.horizontal_base(square))
    schedule = gd.Schedule.from_dict({'entries': [{'B': '1', 'eps': '1/8'}]})
    report = gd.convergence_certificate(seq, schedule)
    assert not report.passed
    assert report.stabilization == {0: None}
    assert report.witness['index'] == 3
    assert report.witness['entry'] == 0


def test_certificate_needs_enough_curves(square):
    with pytest.raises(ConfigError):
        gd.convergence_certificate([straight_loop(square, 0, 1)], gd.Schedule.default(1))


def test_gromov_product_of_identical_curves(square):
    c = straight_loop(square, 0, 1)
    base = straight_loop(square, 2, 5)
    g = gd.gromov_product(c, c, base)
    assert g.lower <= g.upper
    assert g.contains(g.lower)


def test_membership_in_D_of_L(square):
    from backend.core.numerics import Vec
    from backend.core.surface import SurfacePoint
    from backend.metrics.flow import LeafSegment, flow_vertical
    horizontal = straight_loop(square, 1, 0)
    low = flow_vertical(square, SurfacePoint(0, Vec.of(Fraction(1, 3), Fraction(1, 4))), QuadNum(Fraction(1, 2)))
    high = flow_vertical(square, SurfacePoint(0, Vec.of(Fraction(1, 3), Fraction(3, 4))), QuadNum(Fraction(1, 2)))
    assert not gd.in_D_of_L(horizontal, [LeafSegment(low, False)])
    assert gd.in_D_of_L(horizontal, [LeafSegment(high, False)])
    assert gd.in_D_of_L(horizontal, [])


GOLDEN_CONVERGENTS = [(2, 1), (3, 2), (5, 3), (8, 5), (13, 8), (21, 13)]


def test_golden_convergents_pass_certificate(golden):
    seq = [straight_loop(golden, p, q) for p, q in GOLDEN_CONVERGENTS]
    report = gd.convergence_certificate(seq, gd.Schedule.default(4), gd.horizontal_base(golden), jobs=2)
    assert report.trends == {'windows': True, 'size': True, 'distance': True}
    assert report.passed
    assert report.witness is None
    assert report.sizes == [QuadNum(q) for _, q in GOLDEN_CONVERGENTS]
    assert [d.lower for d in report.distances] == [0, 0, 0, 1, 1, 2]
    assert report.burn_in == 0
    assert report.to_dict()['verdict'] == 'PASS'


def test_distance_regression_fails_certificate(golden):
    # 15/8 sits next to 2/1 in the Farey graph although its size keeps growing
    classes = GOLDEN_CONVERGENTS[:5] + [(15, 8)]
    seq = [straight_loop(golden, p, q) for p, q in classes]
    report = gd.convergence_certificate(seq, gd.Schedule.default(1), gd.horizontal_base(golden))
    assert [d.lower for d in report.distances] == [0, 0, 0, 1, 1, 0]
    assert report.trends['size']
    assert not report.trends['distance']
    assert report.burn_in == 5
    assert not report.passed


def test_bicorns_of_window_members_stay_in_the_doubled_window(golden):
    from backend.metrics.curves import bicorns
    eps, B = QuadNum(Fraction(1, 8)), QuadNum(2)
    family = [straight_loop(golden, p, q) for p, q in [(8, 5), (13, 8), (18, 11), (19, 12)]]
    assert all(gd.in_D_eps_B(c, eps, B)[0] for c in family)
    checked = 0
    for alpha, beta in itertools.combinations(family, 2):
        for b in bicorns(alpha, beta):
            member, window = gd.in_D_eps_B(b.curve, 2 * eps, B)
            assert member, (alpha.name, beta.name, window.to_dict())
            checked += 1
    assert checked > 0
