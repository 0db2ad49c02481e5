from fractions import Fraction

import numpy as np
import pytest

from backend.core.errors import ConePointHit, ConfigError, CurveError
from backend.core.numerics import QuadNum, Vec, parse
from backend.core.surface import SurfacePoint
from backend.metrics import flow


def test_vertical_flow_on_square_returns_to_start(square):
    p = SurfacePoint(0, Vec.of(QuadNum(1) / 3, QuadNum(1) / 4))
    traj = flow.flow_vertical(square, p, QuadNum(2))
    assert traj.terminal == flow.TERMINAL_REACHED
    assert traj.end == p
    assert traj.total_length == 2
    assert len(traj.crossings) == 2


def test_flow_budget_must_be_positive(square):
    p = SurfacePoint(0, Vec.of(QuadNum(1) / 3, QuadNum(1) / 4))
    with pytest.raises(ConfigError):
        flow.flow_vertical(square, p, QuadNum(0))


def test_flow_from_cone_point_is_rejected(pillowcase):
    with pytest.raises(ConePointHit):
        flow.flow_vertical(pillowcase, SurfacePoint(0, Vec.of(Fraction(1, 2), 0)), QuadNum(1))


def test_singular_leaves_of_pillowcase(pillowcase):
    leaves = flow.singular_leaves(pillowcase, QuadNum(4))
    assert leaves
    assert all(leaf.is_singular for leaf in leaves)


def test_golden_return_map_is_a_rotation(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    assert t.width == 1
    assert iet.is_rotation()
    assert len(iet.intervals) == 2
    assert set(iet.return_lengths) == {QuadNum(1)}
    assert iet.fubini_total() == golden.area()


def test_three_gap_census_on_golden_rotation(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    census = flow.three_gap_census(iet, t.x0 + t.width / 3, 40)
    assert len(census) == 40
    assert census['distinctGaps'].max() <= 3
    assert census['maxGap_tag'].iloc[0] == 'exact'


def test_near_return_times_improve(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    times = flow.near_return_times(iet, t.x0 + t.width / 3, 50)
    ks = [k for k, _ in times]
    gaps = [d for _, d in times]
    assert ks == sorted(ks)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_exact_rotation_bound_is_finite(golden):
    iet = flow.first_return_map(golden.transversals['h'], golden)
    n, length = flow.exact_rotation_bound(iet, QuadNum(Fraction(1, 4)))
    assert n >= 2
    assert length == n


def test_fast_return_constant_is_confirmed(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    g = [t.segment]
    report = flow.fast_return_constant(golden, g, t.width, 20, QuadNum(64), np.random.default_rng(7), iet)
    replay = np.random.default_rng(7)
    expected = []
    for _ in range(20):
        gap = t.y - golden.random_point(replay).z.y
        expected.append(gap if gap.sign() >= 0 else gap + 1)
    assert [row['hitLength'] for row in report.rows] == expected
    assert report.L == max(expected)
    assert report.exact_iterates == 1
    assert report.exact_bound == 1
    assert report.confirmed


def test_target_check_with_zero_length_misses(square):
    from backend.metrics.curves import straight_loop
    gamma = straight_loop(square, 1, 0)
    report = flow.target_check(square, gamma, QuadNum(0), 5, np.random.default_rng(0))
    assert report.hits == 0
    assert report.fraction == 0


def test_target_check_with_long_leaves_always_hits(square):
    from backend.metrics.curves import straight_loop
    gamma = straight_loop(square, 1, 0)
    report = flow.target_check(square, gamma, parse('2'), 25, np.random.default_rng(3))
    assert report.hits == 25


def test_pillowcase_flow_runs_into_the_cone_above(pillowcase):
    p = SurfacePoint(0, Vec.of(Fraction(1, 2), Fraction(3, 4)))
    traj = flow.flow_vertical(pillowcase, p, QuadNum(1))
    assert traj.terminal == flow.TERMINAL_CONE
    assert traj.total_length == Fraction(1, 4)
    assert traj.cone_point.k == 1


FIBONACCI = [1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610, 987, 1597, 2584, 4181, 6765]


def test_three_gaps_over_ten_thousand_returns(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    census = flow.three_gap_census(iet, t.x0 + t.width / 3, 10_000)
    assert len(census) == 10_000
    assert census['distinctGaps'].max() <= 3
    assert list(census['m'])[-1] == 10_000


def test_near_returns_happen_at_convergent_denominators(golden):
    t = golden.transversals['h']
    iet = flow.first_return_map(t, golden)
    times = flow.near_return_times(iet, t.x0 + t.width / 3, 10_000)
    assert [k for k, _ in times] == FIBONACCI


def test_pillowcase_leaf_closes_through_both_flips(pillowcase):
    t = pillowcase.transversals['t']
    curve = flow.close_to_curve(pillowcase, t, QuadNum(1) / 3, QuadNum(1) / 8, QuadNum(16))
    third, two_thirds = Fraction(1, 3), Fraction(2, 3)
    assert [(p.start, p.end) for p in curve.pieces] == [
        (Vec.of(third, Fraction(1, 4)), Vec.of(third, 1)),
        (Vec.of(two_thirds, 1), Vec.of(two_thirds, Fraction(1, 4))),
        (Vec.of(two_thirds, Fraction(1, 4)), Vec.of(two_thirds, 0)),
        (Vec.of(third, 0), Vec.of(third, Fraction(1, 4))),
    ]
    assert curve.l1_length() == 2


def test_close_to_curve_rejects_an_empty_window(pillowcase):
    t = pillowcase.transversals['t']
    with pytest.raises(ConfigError):
        flow.close_to_curve(pillowcase, t, QuadNum(1) / 3, QuadNum(0))


def test_golden_return_loop_is_nonseparating(golden):
    from backend.metrics.curves import homology_class, is_simple
    t = golden.transversals['h']
    loop = flow.return_loop(golden, t, t.x0 + t.width / 3)
    coords, nonsep = homology_class(loop)
    assert nonsep
    assert is_simple(loop)[0]


def test_pillowcase_has_no_nonseparating_return_loop(pillowcase):
    t = pillowcase.transversals['t']
    with pytest.raises(CurveError):
        flow.return_loop(pillowcase, t, QuadNum(1) / 3)


def test_worker_threads_do_not_change_sampled_results(golden, square):
    from backend.metrics.curves import straight_loop
    t = golden.transversals['h']
    serial = flow.fast_return_constant(golden, [t.segment], t.width, 12, QuadNum(64), np.random.default_rng(5))
    threaded = flow.fast_return_constant(golden, [t.segment], t.width, 12, QuadNum(64),
                                         np.random.default_rng(5), jobs=4)
    assert threaded.rows == serial.rows
    assert threaded.L == serial.L
    gamma = straight_loop(square, 1, 0)
    serial = flow.target_check(square, gamma, QuadNum(Fraction(1, 2)), 12, np.random.default_rng(9))
    threaded = flow.target_check(square, gamma, QuadNum(Fraction(1, 2)), 12, np.random.default_rng(9), jobs=3)
    assert threaded.rows == serial.rows
    assert threaded.witnesses == serial.witnesses
