import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mmwiloc import dataio
from mmwiloc.aoa import AoAEstimate
from mmwiloc.beam import BeamFrame, DevicePose, MeasurementMatrix, Session, Trajectory, make_grid
from mmwiloc.errors import FormatError
from mmwiloc.locate import PositionFix
from mmwiloc.synth import ScenarioConfig, gen_session

HEADER = '{"format_version":1,"n_sectors":3,"device_ids":["a","b"],"epoch_note":"","poses":{"a":[-0.75,0,0],"b":[0.75,0,0]}}'


def write(tmp_path, text, name="s.jsonl"):
    p = tmp_path / name
    p.write_text(text)
    return p


def small_session(rng, n=3, frames=4):
    poses = {"a": DevicePose(-0.75, 0.0), "b": DevicePose(0.75, 0.0, 5.0)}
    fr = {d: tuple(BeamFrame(60 * i + j, d, rng.normal(size=n) * 10) for i in range(frames)) for j, d in enumerate(poses)}
    return Session(n, fr, poses, clock_offsets_ms={"b": 3})


def test_load_well_formed(tmp_path):
    text = HEADER + '\n{"t_ms":0,"dev":"a","snr":[1,2,3]}\n{"t_ms":5,"dev":"b","snr":[4,5,6.5]}\n'
    s = dataio.load_session(write(tmp_path, text))
    assert s.n_frames() == 2 and s.n_sectors == 3
    assert s.snr_matrix("b").tolist() == [[4, 5, 6.5]]
    assert s.device_poses["b"] == DevicePose(0.75, 0.0, 0.0)


def test_wrong_length_names_line(tmp_path):
    text = HEADER + '\n{"t_ms":0,"dev":"a","snr":[1,2,3]}\n{"t_ms":60,"dev":"a","snr":[1,2]}\n'
    with pytest.raises(FormatError) as info:
        dataio.load_session(write(tmp_path, text))
    assert info.value.line == 3
    assert ":3:" in str(info.value)


def test_non_monotone_rejected(tmp_path):
    text = HEADER + '\n{"t_ms":60,"dev":"a","snr":[1,2,3]}\n{"t_ms":60,"dev":"a","snr":[1,2,3]}\n'
    with pytest.raises(FormatError) as info:
        dataio.load_session(write(tmp_path, text))
    assert info.value.line == 3


@pytest.mark.parametrize(
    "line",
    [
        '{"t_ms":0,"dev":"z","snr":[1,2,3]}',
        '{"t_ms":0.5,"dev":"a","snr":[1,2,3]}',
        '{"t_ms":0,"dev":"a","snr":[1,2,NaN]}',
        '{"t_ms":0,"dev":"a","snr":[1,2,"3"]}',
        '{"t_ms":0,"dev":"a"}',
        "[1,2,3]",
        "{not json",
    ],
)
def test_bad_frame_lines(tmp_path, line):
    with pytest.raises(FormatError) as info:
        dataio.load_session(write(tmp_path, HEADER + "\n" + line + "\n"))
    assert info.value.line == 2


@pytest.mark.parametrize(
    "header",
    [
        '{"format_version":2,"n_sectors":3,"device_ids":[]}',
        '{"format_version":1,"n_sectors":0,"device_ids":[]}',
        '{"format_version":1,"n_sectors":3,"device_ids":["a","a"]}',
        '{"format_version":1,"n_sectors":3,"device_ids":[],"poses":{"a":[1]}}',
    ],
)
def test_bad_headers(tmp_path, header):
    with pytest.raises(FormatError):
        dataio.load_session(write(tmp_path, header + "\n"))


def test_missing_header(tmp_path):
    with pytest.raises(FormatError):
        dataio.load_session(write(tmp_path, "\n"))


def test_round_trip_byte_identical(tmp_path, rng):
    s = small_session(rng)
    p1, p2 = tmp_path / "1.jsonl", tmp_path / "2.jsonl"
    dataio.save_session(s, p1)
    loaded = dataio.load_session(p1)
    dataio.save_session(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.device_ids == s.device_ids
    assert loaded.clock_offsets_ms == {"b": 3}
    assert loaded.device_poses == s.device_poses
    for d in s.device_ids:
        assert loaded.times(d).tolist() == s.times(d).tolist()
        assert np.allclose(loaded.snr_matrix(d), s.snr_matrix(d), rtol=1e-8)


def test_frames_sorted_by_time_then_device(rng):
    text = dataio.session_to_text(small_session(rng))
    keys = [(json.loads(l)["t_ms"], json.loads(l)["dev"]) for l in text.splitlines()[1:]]
    assert keys == sorted(keys)


def test_empty_session_header_only(tmp_path):
    s = Session(36, {}, {"dev0": DevicePose(0, 0)})
    p = tmp_path / "e.jsonl"
    dataio.save_session(s, p)
    assert len(p.read_text().splitlines()) == 1
    assert dataio.load_session(p).n_frames() == 0


def test_permuted_inputs_identical_bytes(rng):
    s = small_session(rng)
    rev = Session(s.n_sectors, dict(reversed(list(s.frames.items()))), dict(reversed(list(s.device_poses.items()))),
                  clock_offsets_ms=s.clock_offsets_ms)
    assert dataio.session_to_text(s) == dataio.session_to_text(rev)


def test_synthetic_session_round_trip(tmp_path, truth):
    s, _ = gen_session(ScenarioConfig(pattern="square", truth_matrix=truth, noise_sigma=1.0, seed=2))
    p = tmp_path / "s.jsonl"
    dataio.save_session(s, p)
    text = p.read_text()
    assert dataio.session_to_text(dataio.load_session(p)) == text


def test_matrix_round_trip(tmp_path, truth):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    dataio.save_matrix(truth, p1)
    m = dataio.load_matrix(p1)
    assert m.grid == truth.grid
    assert np.allclose(m.entries, truth.entries, rtol=1e-8, atol=0)
    dataio.save_matrix(m, p2)
    assert p1.read_bytes() == p2.read_bytes()


@pytest.mark.parametrize(
    "text",
    [
        '{"n_sectors":2,"k_bins":2,"entries":[1,2,3]}',
        '{"n_sectors":2,"k_bins":3,"entries":[1,2,3,4]}',
        '{"n_sectors":1,"k_bins":2,"entries":[1,-2]}',
        '{"n_sectors":1.5,"k_bins":2,"entries":[1,2]}',
        '{"n_sectors":1,"entries":[1,2]}',
    ],
)
def test_matrix_validation(tmp_path, text):
    with pytest.raises(FormatError):
        dataio.load_matrix(write(tmp_path, text, "m.json"))


def test_ground_truth_cases(tmp_path):
    good = write(tmp_path, "t_ms,x,y\n0,0,0\n60,0.5,1.25\n", "g.csv")
    tr = dataio.load_ground_truth(good)
    assert tr.t_ms.tolist() == [0, 60] and tr.position_at(30).tolist() == [0.25, 0.625]
    with pytest.raises(FormatError) as info:
        dataio.load_ground_truth(write(tmp_path, "t_ms,x,y\n0,0,0\n0,1,1\n", "bad.csv"))
    assert info.value.line == 3
    assert len(dataio.load_ground_truth(write(tmp_path, "t_ms,x,y\n", "empty.csv"))) == 0
    with pytest.raises(FormatError):
        dataio.load_ground_truth(write(tmp_path, "t,x\n0,0\n", "cols.csv"))


def test_ground_truth_round_trip(tmp_path, rng):
    tr = Trajectory(np.arange(10) * 60, rng.normal(size=(10, 2)))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    dataio.save_ground_truth(tr, p1)
    dataio.save_ground_truth(dataio.load_ground_truth(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_trajectory_and_tables(tmp_path):
    fixes = [PositionFix(0, 0.1, 1.2, 1.0, 1.1, 20.0, -10.0, True), PositionFix(60, 0.0, 5.0, 5.1, 5.2, 8.0, -8.0, False)]
    p = tmp_path / "t.csv"
    dataio.save_trajectory(fixes, p)
    assert p.read_text().splitlines()[0] == "t_ms,x,y,theta0,theta1,r0,r1,in_area"
    assert dataio.load_trajectory(p) == fixes
    streams = {"dev1": [AoAEstimate("dev1", 5, 1.5, 2.0, np.zeros(1))], "dev0": [AoAEstimate("dev0", 5, -1.5, 3.0, np.zeros(1))]}
    dataio.save_aoa(streams, tmp_path / "aoa.csv")
    rows = dataio.read_csv_text((tmp_path / "aoa.csv").read_text())
    assert [r["device_id"] for r in rows] == ["dev0", "dev1"]
    dataio.save_diagnostics([0.5, 0.1], [-3.0, -2.0], tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines() == ["iter,delta,loglik", "1,0.5,-3", "2,0.1,-2"]
    dataio.save_cdf([(0.1, 0.5), (0.2, 1.0)], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "error_m,prob"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=8), st.integers(0, 10**12))
def test_float_rendering_round_trip(values, t):
    s = Session(len(values), {"d": (BeamFrame(t, "d", values),)}, {"d": DevicePose(0.0, 0.0)})
    text = dataio.session_to_text(s)
    assert dataio.session_to_text(dataio.session_from_text(text)) == text


def _mutate(text, data):
    ops = data.draw(st.lists(st.tuples(st.integers(0, max(len(text) - 1, 0)), st.sampled_from(list('0123456789-.,:[]{}"eE \nabtn'))), max_size=4))
    chars = list(text)
    for pos, ch in ops:
        if chars and data.draw(st.booleans()):
            chars[pos % len(chars)] = ch
        else:
            chars.insert(pos, ch)
    return "".join(chars)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_fuzzed_sessions_never_yield_invalid_objects(data):
    r = np.random.default_rng(data.draw(st.integers(0, 1000)))
    text = dataio.session_to_text(small_session(r, n=2, frames=2))
    text = _mutate(text, data)
    try:
        s = dataio.session_from_text(text)
    except FormatError:
        return
    for d, seq in s.frames.items():
        t = [f.t_ms for f in seq]
        assert t == sorted(set(t))
        assert all(f.snr.shape == (s.n_sectors,) and np.all(np.isfinite(f.snr)) for f in seq)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_fuzzed_matrices(data):
    A = MeasurementMatrix(np.arange(6, dtype=float).reshape(2, 3) / 7, make_grid(3))
    text = _mutate(dataio.matrix_to_text(A), data)
    try:
        m = dataio.matrix_from_text(text)
    except FormatError:
        return
    assert np.all(m.entries >= 0) and m.entries.shape[1] == m.grid.k_bins


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_fuzzed_ground_truth(tmp_path_factory, data):
    base = "t_ms,x,y\n0,0.5,1\n60,0.25,1.5\n120,0,2\n"
    p = tmp_path_factory.mktemp("gt") / "g.csv"
    p.write_text(_mutate(base, data))
    try:
        tr = dataio.load_ground_truth(p)
    except FormatError:
        return
    assert np.all(np.diff(tr.t_ms) > 0) and np.all(np.isfinite(tr.xy))
