import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwiloc.aoa import AoAEstimate
from mmwiloc.beam import DEFAULT_POSES, DevicePose, bearing
from mmwiloc.errors import BehindDevice, InvalidArgument, NoIntersection
from mmwiloc.locate import (
    DET_EPS,
    PairingConfig,
    TrajectoryDiagnostics,
    build_trajectory,
    pair_streams,
    triangulate,
)

P0, P1 = DEFAULT_POSES["dev0"], DEFAULT_POSES["dev1"]


def est(dev, t, theta=0.0):
    return AoAEstimate(dev, t, theta, 1.0, np.zeros(1))


def test_symmetric_example():
    x, y, r0, r1 = triangulate(26.5651, -26.5651, P0, P1)
    assert x == pytest.approx(0.0, abs=1e-9)
    assert y == pytest.approx(1.5, abs=1e-4)
    assert r0 == pytest.approx(r1)


def test_parallel_boresight():
    with pytest.raises(NoIntersection):
        triangulate(0.0, 0.0, P0, P1)


def test_diamond_vertex():
    t0 = math.degrees(math.atan2(2.01, 1.68))
    t1 = math.degrees(math.atan2(0.51, 1.68))
    assert t0 == pytest.approx(50.11, abs=2e-2) and t1 == pytest.approx(16.889, abs=3e-3)
    x, y, _, _ = triangulate(t0, t1, P0, P1)
    assert math.hypot(x - 1.26, y - 1.68) <= 1e-9


def test_behind_device():
    with pytest.raises(BehindDevice):
        triangulate(-30.0, 30.0, P0, P1)


def test_same_position_rejected():
    with pytest.raises(InvalidArgument):
        triangulate(10.0, 20.0, P0, P0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-2.5, 2.5), st.floats(0.2, 3.5))
def test_round_trip_property(x, y):
    if math.hypot(x - P0.x, y) < 1e-6 or math.hypot(x - P1.x, y) < 1e-6:
        return
    gx, gy, r0, r1 = triangulate(bearing((x, y), P0), bearing((x, y), P1), P0, P1)
    assert math.hypot(gx - x, gy - y) <= 1e-9
    assert r0 > 0 and r1 > 0


def test_round_trip_rotated_devices(rng):
    p0, p1 = DevicePose(-1.0, 0.0, 20.0), DevicePose(1.0, 0.5, -35.0)
    for x, y in rng.uniform([-2, 1], [2, 3], (200, 2)):
        gx, gy, _, _ = triangulate(bearing((x, y), p0), bearing((x, y), p1), p0, p1)
        assert math.hypot(gx - x, gy - y) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-80, 80), st.floats(-80, 80))
def test_determinant_matches_angle_difference(t0, t1):
    a0, a1 = math.radians(t0), math.radians(t1)
    det = -math.sin(a0) * math.cos(a1) + math.sin(a1) * math.cos(a0)
    assert abs(det) == pytest.approx(abs(math.sin(a1 - a0)), abs=1e-12)


def test_threshold_in_degrees():
    # |det| < 1e-9 corresponds to bearings within about 5.7e-8 degrees
    assert math.degrees(math.asin(DET_EPS)) == pytest.approx(5.7e-8, rel=0.01)
    with pytest.raises(NoIntersection):
        triangulate(30.0, 30.0 + 5e-8, P0, P1)


def test_pairing_example():
    s0 = [est("dev0", t) for t in (0, 60, 120)]
    s1 = [est("dev1", t) for t in (10, 70, 200)]
    pairs = pair_streams(s0, s1, PairingConfig(max_gap_ms=50))
    assert [(a.t_ms, b.t_ms) for a, b in pairs] == [(0, 10), (60, 70)]


def test_pairing_empty_and_identical():
    assert pair_streams([], [est("dev1", 0)]) == []
    s0 = [est("dev0", t) for t in (0, 60, 120)]
    s1 = [est("dev1", t) for t in (0, 60, 120)]
    assert [(a.t_ms, b.t_ms) for a, b in pair_streams(s0, s1)] == [(0, 0), (60, 60), (120, 120)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 2000), unique=True, max_size=15), st.lists(st.integers(0, 2000), unique=True, max_size=15))
def test_pairing_properties(t0, t1):
    s0 = [est("dev0", t) for t in sorted(t0)]
    s1 = [est("dev1", t) for t in sorted(t1)]
    pairs = pair_streams(s0, s1)
    assert all(abs(a.t_ms - b.t_ms) <= 100 for a, b in pairs)
    assert len({id(a) for a, _ in pairs}) == len(pairs) == len({id(b) for _, b in pairs})
    mids = [a.t_ms + b.t_ms for a, b in pairs]
    assert mids == sorted(mids)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        PairingConfig(max_gap_ms=0)
    with pytest.raises(InvalidArgument):
        PairingConfig(area=(1, 0, 0, 1))


def test_all_parallel_pairs_dropped():
    pairs = [(est("dev0", t, 10.0), est("dev1", t, 10.0)) for t in (0, 60, 120)]
    diag = TrajectoryDiagnostics()
    assert build_trajectory(pairs, (P0, P1), diagnostics=diag) == []
    assert diag.no_intersection == 3 and diag.dropped == 3


def test_out_of_area_flagged():
    t0, t1 = bearing((0, 5), P0), bearing((0, 5), P1)
    (fix,) = build_trajectory([(est("dev0", 0, t0), est("dev1", 0, t1))], {"dev0": P0, "dev1": P1})
    assert not fix.in_area
    assert fix.x == pytest.approx(0.0, abs=1e-9) and fix.y == pytest.approx(5.0)


def test_fixes_time_ordered_and_positive():
    pts = [(0.3, 1.0), (-0.5, 2.0), (1.0, 0.6)]
    pairs = [(est("dev0", 200 - 60 * i, bearing(p, P0)), est("dev1", 210 - 60 * i, bearing(p, P1))) for i, p in enumerate(pts)]
    pairs.append((est("dev0", 500, -30.0), est("dev1", 500, 30.0)))
    diag = TrajectoryDiagnostics()
    fixes = build_trajectory(pairs, (P0, P1), diagnostics=diag)
    assert [f.t_ms for f in fixes] == [85, 145, 205]
    assert all(f.r0 > 0 and f.r1 > 0 for f in fixes)
    assert diag.behind_device == 1 and diag.n_pairs == 4
