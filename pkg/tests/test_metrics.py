import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metrics_oracle import naive_session_metrics
from mmwiloc.beam import Trajectory
from mmwiloc.errors import InvalidArgument
from mmwiloc.locate import PositionFix
from mmwiloc.metrics import EvalConfig, error_cdf, frame_error, group_by_time, session_metrics


def fix(t, x, y):
    return PositionFix(t, x, y, 1.0, 1.0, 0.0, 0.0)


GT = Trajectory([0, 1000], [[0.0, 0.0], [1.0, 0.0]])


def test_frame_error_examples():
    assert frame_error([(0.0, 0.0)], (0.0, 0.0)) == (0.0, 1)
    err, n = frame_error([(0.1, 0.0), (0.3, 0.0)], (0.0, 0.0))
    assert err == pytest.approx(0.1) and n == 1
    assert frame_error([], (0.0, 0.0)) == (0.25, 0)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        EvalConfig(0.0)


def test_on_path_perfect():
    m = session_metrics([fix(t, t / 1000, 0.0) for t in (0, 250, 500, 1000)], GT)
    assert m.mean_error == pytest.approx(0.0, abs=1e-15) and m.association_rate == 1.0


def test_far_off_path():
    m = session_metrics([fix(t, t / 1000, 1.0) for t in (0, 500)], GT)
    assert m.mean_error == 0.25 and m.association_rate == 0.0


def test_mixed_small_session():
    fixes = [fix(0, 0.0, 0.1), fix(500, 0.5, 0.2), fix(1000, 1.0, 0.4)]
    m = session_metrics(fixes, GT)
    assert m.mean_error == pytest.approx((0.1 + 0.2 + 0.25) / 3)
    assert m.association_rate == pytest.approx(2 / 3)
    assert m.per_timestamp_errors == pytest.approx([0.1, 0.2, 0.25])


def test_empty_trajectory():
    m = session_metrics([], GT)
    assert m.n_detected == 0 and m.per_timestamp_errors == [] and m.association_rate == 0.0


def test_grouping_within_one_ms():
    assert group_by_time([0, 1, 3, 4, 10]) == [[0, 1], [2, 3], [4]]


def test_cdf_examples():
    assert error_cdf([0.3, 0.1, 0.2]) == pytest.approx([(0.1, 1 / 3), (0.2, 2 / 3), (0.3, 1.0)])
    assert error_cdf([0.7]) == [(0.7, 1.0)]
    assert error_cdf([0.1, 0.1]) == [(0.1, 0.5), (0.1, 1.0)]
    assert error_cdf([]) == []


def random_instance(seed):
    r = np.random.default_rng(seed)
    n_gt = int(r.integers(2, 8))
    gt_t = np.cumsum(r.integers(1, 400, n_gt))
    gt_xy = r.uniform(-1, 1, (n_gt, 2))
    n = int(r.integers(0, 21))
    ts = r.integers(gt_t[0] - 50, gt_t[-1] + 50, n)
    # repeat some timestamps so multi-fix groups occur
    if n > 3:
        ts[1] = ts[0]
        ts[3] = ts[2] + 1
    fixes = [fix(int(t), *(r.uniform(-1, 1, 2) * 0.2 + 0.0)) for t in ts]
    gt = Trajectory(gt_t, gt_xy)
    # place some fixes near the interpolated truth
    fixes = [
        fix(f.t_ms, *(gt.position_at(f.t_ms) + r.normal(scale=0.15, size=2))) if i % 2 else f
        for i, f in enumerate(fixes)
    ]
    return fixes, gt


@pytest.mark.parametrize("seed", range(100))
def test_matches_naive_oracle(seed):
    fixes, gt = random_instance(seed)
    errs, mean, median, rate, n, matched = naive_session_metrics(fixes, gt.t_ms.tolist(), gt.xy.tolist())
    m = session_metrics(fixes, gt)
    assert m.per_timestamp_errors == errs
    assert m.mean_error == mean
    assert m.median_error == median
    assert (m.association_rate, m.n_detected, m.n_matched) == (rate, n, matched)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.5), st.floats(0.0, 0.5))
def test_invariants(seed, thr, extra):
    fixes, gt = random_instance(seed)
    lo = session_metrics(fixes, gt, EvalConfig(thr))
    hi = session_metrics(fixes, gt, EvalConfig(thr + extra))
    assert all(0 <= e <= thr for e in lo.per_timestamp_errors)
    assert lo.mean_error <= thr * (1 + 1e-12)
    assert 0 <= lo.association_rate <= 1
    assert hi.association_rate >= lo.association_rate
    cdf = error_cdf(lo.per_timestamp_errors)
    if cdf:
        v, p = zip(*cdf)
        assert list(v) == sorted(v) and list(p) == sorted(p) and p[-1] == 1.0


def test_to_dict_keys():
    d = session_metrics([fix(0, 0, 0)], GT).to_dict("diamond")
    assert {"pattern", "mean", "median", "association_rate", "n"} <= set(d)
    assert d["pattern"] == "diamond"
