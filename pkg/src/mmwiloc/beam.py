"""Core domain types, the angular grid and the linear beamSNR forward model.

Angles are in degrees. A device's bearing to a target is measured from its
boresight, positive toward +x when the boresight points along +y, so a target
at bearing ``theta`` and range ``r`` from a device at ``(x0, y0)`` sits at
``(x0 + r sin(theta), y0 + r cos(theta))``.

Angular profiles are plain 1-D float arrays of length ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import DegenerateGeometry, InvalidArgument

DEFAULT_K = 192
DEFAULT_N_SECTORS = 36
DEFAULT_SPREAD_BINS = 3


@dataclass(frozen=True)
class AngularGrid:
    k_bins: int

    def __post_init__(self):
        if self.k_bins < 2:
            raise InvalidArgument(f"k_bins must be >= 2, got {self.k_bins}")

    @property
    def angles(self) -> np.ndarray:
        return -90.0 + 180.0 * np.arange(self.k_bins) / (self.k_bins - 1)

    @property
    def bin_width(self) -> float:
        return 180.0 / (self.k_bins - 1)

    def angle(self, k: float) -> float:
        """Angle of a (possibly fractional) bin index."""
        return -90.0 + 180.0 * k / (self.k_bins - 1)

    def nearest_bin(self, theta_deg: float) -> int:
        """Index of the closest bin; a bearing halfway between two bins maps to the lower one."""
        k = math.ceil((theta_deg + 90.0) / self.bin_width - 0.5)
        return int(min(max(k, 0), self.k_bins - 1))


def make_grid(k_bins: int = DEFAULT_K) -> AngularGrid:
    return AngularGrid(int(k_bins))


def default_spread_deg(grid: AngularGrid) -> float:
    return DEFAULT_SPREAD_BINS * grid.bin_width


@dataclass(frozen=True)
class DevicePose:
    """Planar device position in meters.

    ``boresight`` is the world direction of the device's 0 degree beam,
    measured clockwise from +y (0 means facing +y, 90 means facing +x).
    """

    x: float
    y: float
    boresight: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.boresight)):
            raise InvalidArgument(f"non-finite device pose {self}")


DEFAULT_POSES = {
    "dev0": DevicePose(-0.75, 0.0, 0.0),
    "dev1": DevicePose(0.75, 0.0, 0.0),
}


@dataclass(frozen=True)
class BeamFrame:
    t_ms: int
    device_id: str
    snr: np.ndarray

    def __post_init__(self):
        snr = np.asarray(self.snr, dtype=float)
        if snr.ndim != 1:
            raise InvalidArgument("snr must be a 1-D vector")
        if not np.all(np.isfinite(snr)):
            raise InvalidArgument(f"non-finite snr in frame t={self.t_ms} dev={self.device_id}")
        snr.setflags(write=False)
        object.__setattr__(self, "snr", snr)
        object.__setattr__(self, "t_ms", int(self.t_ms))


@dataclass(frozen=True)
class Session:
    """Beam frames of one recording, grouped per device and sorted by time.

    ``clock_offsets_ms`` holds a constant per-device correction added to frame
    timestamps before streams from different devices are compared.
    """

    n_sectors: int
    frames: Mapping[str, tuple]
    device_poses: Mapping[str, DevicePose]
    preprocessed: bool = False
    clock_offsets_ms: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_sectors <= 0:
            raise InvalidArgument("n_sectors must be positive")
        frames = {}
        for dev, seq in self.frames.items():
            seq = tuple(seq)
            for f in seq:
                if f.device_id != dev:
                    raise InvalidArgument(f"frame of {f.device_id!r} filed under {dev!r}")
                if f.snr.shape != (self.n_sectors,):
                    raise InvalidArgument(
                        f"frame t={f.t_ms} dev={dev} has {f.snr.size} values, expected {self.n_sectors}"
                    )
            times = [f.t_ms for f in seq]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InvalidArgument(f"frames of device {dev!r} not strictly time-ordered")
            frames[dev] = seq
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "device_poses", dict(self.device_poses))
        object.__setattr__(self, "clock_offsets_ms", dict(self.clock_offsets_ms))

    @property
    def device_ids(self) -> list[str]:
        return sorted(set(self.frames) | set(self.device_poses))

    def times(self, device_id: str) -> np.ndarray:
        return np.array([f.t_ms for f in self.frames.get(device_id, ())], dtype=np.int64)

    def snr_matrix(self, device_id: str) -> np.ndarray:
        """Frames of one device stacked as an (M, N) array."""
        seq = self.frames.get(device_id, ())
        if not seq:
            return np.zeros((0, self.n_sectors))
        return np.vstack([f.snr for f in seq])

    def n_frames(self) -> int:
        return sum(len(v) for v in self.frames.values())


@dataclass(frozen=True)
class MeasurementMatrix:
    entries: np.ndarray
    grid: AngularGrid

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2:
            raise InvalidArgument("measurement matrix must be 2-D")
        if a.shape[1] != self.grid.k_bins:
            raise InvalidArgument(f"matrix has {a.shape[1]} columns, grid has {self.grid.k_bins} bins")
        if not np.all(np.isfinite(a)):
            raise InvalidArgument("measurement matrix has non-finite entries")
        if np.any(a < 0):
            raise InvalidArgument("measurement matrix has negative entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n_sectors(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_array(cls, entries) -> "MeasurementMatrix":
        entries = np.asarray(entries, dtype=float)
        return cls(entries, AngularGrid(entries.shape[1]))


def preprocess_session(session: Session) -> Session:
    """Subtract each sector's per-device minimum over the session.

    Idempotent: a preprocessed stream already has a zero minimum per sector.
    """
    frames = {}
    for dev, seq in session.frames.items():
        if not seq:
            frames[dev] = seq
            continue
        Y = session.snr_matrix(dev)
        Y = Y - Y.min(axis=0)
        frames[dev] = tuple(BeamFrame(f.t_ms, dev, row) for f, row in zip(seq, Y))
    return replace(session, frames=frames, preprocessed=True)


def forward_project(A, h) -> np.ndarray:
    """Noiseless sector response ``A @ h``."""
    a = A.entries if isinstance(A, MeasurementMatrix) else np.asarray(A, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.shape[0] != a.shape[1]:
        raise InvalidArgument(f"profile length {h.shape} does not match matrix {a.shape}")
    return a @ h


def bearing(target, pose: DevicePose) -> float:
    """Device-relative bearing of ``target`` in degrees, wrapped to [-180, 180)."""
    dx = target[0] - pose.x
    dy = target[1] - pose.y
    if dx == 0 and dy == 0:
        raise DegenerateGeometry(f"target {tuple(target)} coincides with device at ({pose.x}, {pose.y})")
    theta = math.degrees(math.atan2(dx, dy)) - pose.boresight
    if -180.0 <= theta < 180.0:
        return theta
    return (theta + 180.0) % 360.0 - 180.0


def angular_profile(target, pose: DevicePose, grid: AngularGrid, spread_deg: float, amplitude: float = 10.0) -> np.ndarray:
    """Gaussian bump over the grid centered on the target's bearing."""
    if not spread_deg > 0:
        raise InvalidArgument("spread_deg must be positive")
    theta = bearing(target, pose)
    return amplitude * np.exp(-((grid.angles - theta) ** 2) / (2.0 * spread_deg**2))


@dataclass(frozen=True)
class Trajectory:
    """Ground-truth path sampled at increasing timestamps."""

    t_ms: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_ms, dtype=np.int64).reshape(-1)
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if t.shape[0] != xy.shape[0]:
            raise InvalidArgument("t_ms and xy lengths differ")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgument("trajectory timestamps must be strictly increasing")
        if not np.all(np.isfinite(xy)):
            raise InvalidArgument("non-finite trajectory coordinates")
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "xy", xy)

    def __len__(self):
        return self.t_ms.shape[0]

    def position_at(self, t_ms) -> np.ndarray:
        """Linear interpolation, clamped to the end samples."""
        if len(self) == 0:
            raise InvalidArgument("empty trajectory")
        t = np.asarray(t_ms, dtype=float)
        x = np.interp(t, self.t_ms, self.xy[:, 0])
        y = np.interp(t, self.t_ms, self.xy[:, 1])
        return np.stack([x, y], axis=-1)
