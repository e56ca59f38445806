"""Readers and writers for sessions, matrices, ground truth and results.

See FORMATS.md for the grammar of each file. Floats are written with nine
significant digits, so writing, reading and writing again is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .beam import AngularGrid, BeamFrame, DevicePose, MeasurementMatrix, Session, Trajectory
from .errors import FormatError, InvalidArgument
from .locate import PositionFix

FORMAT_VERSION = 1


def fmt(v: float) -> str:
    # adding 0.0 folds -0.0 into 0.0, which JSON cannot tell apart on reload
    return format(float(v) + 0.0, ".9g")


def _json_floats(values) -> str:
    return "[" + ",".join(fmt(v) for v in values) + "]"


# -- sessions ---------------------------------------------------------------

def session_to_text(session: Session, epoch_note: str = "") -> str:
    devices = session.device_ids
    poses = {d: session.device_poses[d] for d in sorted(session.device_poses)}
    header = (
        "{"
        f'"format_version":{FORMAT_VERSION},'
        f'"n_sectors":{session.n_sectors},'
        f'"device_ids":{json.dumps(devices, separators=(",", ":"))},'
        f'"epoch_note":{json.dumps(epoch_note)},'
        f'"preprocessed":{json.dumps(bool(session.preprocessed))},'
        '"poses":{' + ",".join(f"{json.dumps(d)}:{_json_floats((p.x, p.y, p.boresight))}" for d, p in poses.items()) + "},"
        '"clock_offsets_ms":{' + ",".join(f"{json.dumps(d)}:{int(o)}" for d, o in sorted(session.clock_offsets_ms.items())) + "}"
        "}"
    )
    frames = [f for seq in session.frames.values() for f in seq]
    frames.sort(key=lambda f: (f.t_ms, f.device_id))
    lines = [header]
    for f in frames:
        lines.append(f'{{"t_ms":{f.t_ms},"dev":{json.dumps(f.device_id)},"snr":{_json_floats(f.snr)}}}')
    return "\n".join(lines) + "\n"


def save_session(session: Session, path, epoch_note: str = "") -> None:
    Path(path).write_text(session_to_text(session, epoch_note), encoding="utf-8")


def _parse_json(line, lineno, path):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", lineno, path) from None
    if not isinstance(obj, dict):
        raise FormatError("expected a JSON object", lineno, path)
    return obj


def session_from_text(text: str, path=None) -> Session:
    header = None
    frames: dict[str, list] = {}
    last_t: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        obj = _parse_json(line, lineno, path)
        if header is None:
            header = _read_header(obj, lineno, path)
            frames = {d: [] for d in header["device_ids"]}
            continue
        try:
            t = obj["t_ms"]
            dev = obj["dev"]
            snr = obj["snr"]
        except KeyError as exc:
            raise FormatError(f"frame missing field {exc.args[0]!r}", lineno, path) from None
        if not isinstance(t, int) or isinstance(t, bool):
            raise FormatError("t_ms must be an integer", lineno, path)
        if dev not in frames:
            raise FormatError(f"device {dev!r} not declared in header", lineno, path)
        if not isinstance(snr, list) or len(snr) != header["n_sectors"]:
            n = len(snr) if isinstance(snr, list) else "non-list"
            raise FormatError(f"snr has {n} values, header declares {header['n_sectors']}", lineno, path)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in snr):
            raise FormatError("snr values must be numbers", lineno, path)
        try:
            vec = np.array(snr, dtype=float)
        except OverflowError:
            raise FormatError("snr value out of range", lineno, path) from None
        if not np.all(np.isfinite(vec)):
            raise FormatError("non-finite snr value", lineno, path)
        if dev in last_t and t <= last_t[dev]:
            raise FormatError(f"timestamp {t} not after {last_t[dev]} for device {dev!r}", lineno, path)
        last_t[dev] = t
        frames[dev].append(BeamFrame(t, dev, vec))
    if header is None:
        raise FormatError("missing header line", None, path)
    try:
        return Session(
            header["n_sectors"],
            {d: tuple(v) for d, v in frames.items()},
            header["poses"],
            header["preprocessed"],
            header["clock_offsets_ms"],
        )
    except InvalidArgument as exc:
        raise FormatError(str(exc), None, path) from None


def _read_header(obj, lineno, path):
    if obj.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {obj.get('format_version')!r}", lineno, path)
    n = obj.get("n_sectors")
    if not isinstance(n, int) or isinstance(n, bool) or n <= 0:
        raise FormatError("n_sectors must be a positive integer", lineno, path)
    devices = obj.get("device_ids", [])
    if not isinstance(devices, list) or not all(isinstance(d, str) for d in devices) or len(set(devices)) != len(devices):
        raise FormatError("device_ids must be a list of distinct strings", lineno, path)
    poses = {}
    if not isinstance(obj.get("poses") or {}, dict) or not isinstance(obj.get("clock_offsets_ms") or {}, dict):
        raise FormatError("poses and clock_offsets_ms must be objects", lineno, path)
    for d, vals in (obj.get("poses") or {}).items():
        try:
            poses[d] = DevicePose(*(float(v) for v in vals))
        except (TypeError, ValueError, OverflowError, InvalidArgument) as exc:
            raise FormatError(f"bad pose for {d!r}: {exc}", lineno, path) from None
    offsets = obj.get("clock_offsets_ms") or {}
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in offsets.values()):
        raise FormatError("clock offsets must be integers", lineno, path)
    return {
        "n_sectors": n,
        "device_ids": devices,
        "poses": poses,
        "preprocessed": bool(obj.get("preprocessed", False)),
        "clock_offsets_ms": offsets,
    }


def load_session(path) -> Session:
    return session_from_text(Path(path).read_text(encoding="utf-8"), path)


# -- measurement matrices ---------------------------------------------------

def matrix_to_text(A: MeasurementMatrix) -> str:
    return (
        f'{{"format_version":{FORMAT_VERSION},"n_sectors":{A.n_sectors},"k_bins":{A.grid.k_bins},'
        f'"entries":{_json_floats(A.entries.ravel())}}}\n'
    )


def save_matrix(A: MeasurementMatrix, path) -> None:
    Path(path).write_text(matrix_to_text(A), encoding="utf-8")


def matrix_from_text(text: str, path=None) -> MeasurementMatrix:
    obj = _parse_json(text, 1, path)
    if obj.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {obj.get('format_version')!r}", path=path)
    try:
        n, k, entries = obj["n_sectors"], obj["k_bins"], obj["entries"]
    except KeyError as exc:
        raise FormatError(f"matrix missing field {exc.args[0]!r}", path=path) from None
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (n, k)):
        raise FormatError("n_sectors and k_bins must be integers", path=path)
    if n <= 0 or k < 2:
        raise FormatError(f"bad dimensions {n} x {k}", path=path)
    if not isinstance(entries, list) or len(entries) != n * k:
        raise FormatError(f"expected {n * k} entries, found {len(entries) if isinstance(entries, list) else 'none'}", path=path)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in entries):
        raise FormatError("matrix entries must be numbers", path=path)
    try:
        return MeasurementMatrix(np.array(entries, dtype=float).reshape(n, k), AngularGrid(k))
    except (TypeError, ValueError, OverflowError, InvalidArgument) as exc:
        raise FormatError(str(exc), path=path) from None


def load_matrix(path) -> MeasurementMatrix:
    return matrix_from_text(Path(path).read_text(encoding="utf-8"), path)


# -- ground truth and trajectories -------------------------------------------

def _rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise FormatError(f"missing columns {missing}", 1, path)
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def save_ground_truth(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ms", "x", "y"])
        for t, (x, y) in zip(traj.t_ms, traj.xy):
            w.writerow([int(t), fmt(x), fmt(y)])


def load_ground_truth(path) -> Trajectory:
    ts, xy = [], []
    for lineno, row in _rows(path, ("t_ms", "x", "y")):
        try:
            t = int(row["t_ms"])
            x, y = float(row["x"]), float(row["y"])
        except (TypeError, ValueError):
            raise FormatError("unparsable row", lineno, path) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise FormatError("non-finite coordinate", lineno, path)
        if ts and t <= ts[-1]:
            raise FormatError(f"timestamp {t} not after {ts[-1]}", lineno, path)
        ts.append(t)
        xy.append((x, y))
    try:
        return Trajectory(np.array(ts, dtype=np.int64), np.array(xy, dtype=float).reshape(-1, 2))
    except (OverflowError, InvalidArgument) as exc:
        raise FormatError(str(exc), path=path) from None


TRAJECTORY_COLUMNS = ["t_ms", "x", "y", "theta0", "theta1", "r0", "r1", "in_area"]


def save_trajectory(fixes, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for f in fixes:
            w.writerow([f.t_ms, fmt(f.x), fmt(f.y), fmt(f.theta0), fmt(f.theta1), fmt(f.r0), fmt(f.r1), int(f.in_area)])


def load_trajectory(path) -> list[PositionFix]:
    fixes = []
    for lineno, row in _rows(path, TRAJECTORY_COLUMNS):
        try:
            fixes.append(PositionFix(
                int(row["t_ms"]), float(row["x"]), float(row["y"]), float(row["r0"]), float(row["r1"]),
                float(row["theta0"]), float(row["theta1"]), row["in_area"].strip().lower() in ("1", "true"),
            ))
        except (TypeError, ValueError, AttributeError):
            raise FormatError("unparsable row", lineno, path) from None
    return fixes


# -- result tables ----------------------------------------------------------

def save_aoa(streams, path) -> None:
    rows = sorted((e for s in streams.values() for e in s), key=lambda e: (e.t_ms, e.device_id))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "t_ms", "theta_deg", "peak_value"])
        for e in rows:
            w.writerow([e.device_id, e.t_ms, fmt(e.theta_deg), fmt(e.peak_value)])


def save_diagnostics(deltas, logliks, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "delta", "loglik"])
        for i, (d, ll) in enumerate(zip(deltas, logliks), start=1):
            w.writerow([i, fmt(d), fmt(ll)])


def save_cdf(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error_m", "prob"])
        for v, p in points:
            w.writerow([fmt(v), fmt(p)])


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_csv_text(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
