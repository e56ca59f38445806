"""Synthetic scenarios: movement patterns, a truth dictionary and beamSNR sessions.

Everything here is deterministic given its seed. The generator is the oracle
used to check calibration, AoA estimation and localization end to end; it
does not try to emulate a 60 GHz channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beam import (
    DEFAULT_N_SECTORS,
    DEFAULT_POSES,
    AngularGrid,
    BeamFrame,
    DevicePose,
    MeasurementMatrix,
    Session,
    Trajectory,
    angular_profile,
    default_spread_deg,
    make_grid,
)
from .errors import DegenerateGeometry, InvalidArgument

log = logging.getLogger(__name__)

# Ground-truth polylines of the six recorded movement patterns, in meters.
PATTERNS = {
    "hourglass": [(0, 0.42), (-1.26, 0.42), (1.26, 2.94), (-1.26, 2.94), (1.26, 0.42), (0, 0.42)],
    "diamond": [(1.26, 1.68), (0, 0.42), (-1.26, 1.68), (0, 2.94), (1.26, 1.68)],
    "square": [(1.26, 0.42), (0, 0.42), (-1.26, 0.42), (-1.26, 2.94), (1.26, 2.94), (1.26, 0.42)],
    "zshape": [
        (1.56, 0.42), (0, 0.42), (-1.56, 0.42), (1.56, 2.94), (-1.56, 2.94),
        (1.56, 2.94), (-1.56, 0.42), (0, 0.42), (1.56, 0.42),
    ],
    "rectangle": [(2.1, 0.42), (0, 0.42), (-2.1, 0.42), (-2.1, 2.94), (2.1, 2.94), (2.1, 0.42)],
    "large_hourglass": [(0, 0.42), (-2.1, 0.42), (2.1, 2.94), (-2.1, 2.94), (2.1, 0.42), (0, 0.42)],
}

DEFAULT_AMPLITUDE = 10.0


def pattern_waypoints(name: str) -> list[tuple[float, float]]:
    try:
        pts = PATTERNS[name]
    except KeyError:
        raise InvalidArgument(f"unknown pattern {name!r}; choose from {sorted(PATTERNS)}") from None
    return [(float(x), float(y)) for x, y in pts]


def gen_trajectory(waypoints, speed_mps: float = 1.2, dt_ms: int = 60) -> Trajectory:
    """Constant-speed walk along a polyline, sampled every ``dt_ms``.

    Samples are taken at ``t = k * dt`` for as long as the distance walked does
    not exceed the path length, so the first sample is the first waypoint.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise InvalidArgument("need at least two (x, y) waypoints")
    if not speed_mps > 0 or not dt_ms > 0:
        raise InvalidArgument("speed and dt must be positive")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = cum[-1]
    if length <= 0:
        raise InvalidArgument("path has zero length")

    step = speed_mps * dt_ms / 1000.0
    n = int(np.floor(length / step + 1e-9)) + 1
    s = np.minimum(np.arange(n) * step, length)
    # searchsorted picks the segment; zero-length segments are skipped naturally
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    seg_len = np.where(seg[idx] > 0, seg[idx], 1.0)
    frac = np.where(seg[idx] > 0, (s - cum[idx]) / seg_len, 0.0)
    xy = pts[idx] + frac[:, None] * (pts[idx + 1] - pts[idx])
    return Trajectory(np.arange(n, dtype=np.int64) * int(dt_ms), xy)


def _coherence(entries: np.ndarray) -> float:
    norms = np.linalg.norm(entries, axis=0)
    unit = entries / norms
    gram = np.abs(unit.T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def truth_dictionary(
    grid: AngularGrid | None = None,
    n_sectors: int = DEFAULT_N_SECTORS,
    seed: int = 0,
    *,
    kappa: float = 60.0,
    ripple: float = 0.08,
    floor: float = 0.02,
    ripple_freqs: tuple = (2.0, 9.0),
) -> MeasurementMatrix:
    """Smooth nonnegative beam patterns, one row per sector.

    Row ``n`` is a von Mises main lobe ``exp(kappa (cos(theta - c_n) - 1))``
    centered at a seeded jitter of a uniform sector layout, plus a
    low-amplitude seeded ripple and a constant floor.
    """
    grid = grid or make_grid()
    if n_sectors < 2:
        raise InvalidArgument("n_sectors must be >= 2")
    rng = np.random.default_rng(seed)
    theta = np.radians(grid.angles)
    spacing = 170.0 / n_sectors
    for _ in range(100):
        centers = np.radians(np.linspace(-85.0, 85.0, n_sectors) + rng.uniform(-0.3, 0.3, n_sectors) * spacing)
        gains = rng.uniform(0.7, 1.0, n_sectors)
        lobes = gains[:, None] * np.exp(kappa * (np.cos(theta[None, :] - centers[:, None]) - 1.0))
        freqs = rng.uniform(ripple_freqs[0], ripple_freqs[1], (n_sectors, 3))
        phases = rng.uniform(0, 2 * np.pi, (n_sectors, 3))
        wiggle = np.sin(freqs[:, :, None] * theta[None, None, :] + phases[:, :, None]).sum(axis=1) / 3.0
        entries = lobes + ripple * (1.0 + wiggle) / 2.0 + floor
        if _coherence(entries) < 1.0 - 1e-6:
            return MeasurementMatrix(entries, grid)
    raise RuntimeError("could not draw a dictionary with distinct columns")


@dataclass(frozen=True)
class ScenarioConfig:
    pattern: str = "diamond"
    speed_mps: float = 1.2
    dt_ms: int = 60
    noise_sigma: float = 0.0
    spread_deg: float | None = None
    amplitude: float = DEFAULT_AMPLITUDE
    seed: int = 0
    truth_matrix: MeasurementMatrix | None = None
    poses: dict = field(default_factory=lambda: dict(DEFAULT_POSES))

    def __post_init__(self):
        if not self.speed_mps > 0 or not self.dt_ms > 0:
            raise InvalidArgument("speed_mps and dt_ms must be positive")
        if self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be >= 0")


def gen_session(cfg: ScenarioConfig, poses: dict | None = None) -> tuple[Session, Trajectory]:
    """Simulate a beamSNR session of one target walking ``cfg.pattern``.

    Every device records a frame at each trajectory sample:
    ``snr = A_truth @ h + N(0, noise_sigma^2)``, clamped at 0, with ``h`` the
    Gaussian angular profile of the target seen from that device.
    """
    poses = dict(poses if poses is not None else cfg.poses)
    A = cfg.truth_matrix if cfg.truth_matrix is not None else truth_dictionary(seed=cfg.seed)
    grid = A.grid
    spread = cfg.spread_deg if cfg.spread_deg is not None else default_spread_deg(grid)
    traj = gen_trajectory(pattern_waypoints(cfg.pattern), cfg.speed_mps, cfg.dt_ms)
    rng = np.random.default_rng(cfg.seed)

    frames = {dev: [] for dev in sorted(poses)}
    for t, xy in zip(traj.t_ms, traj.xy):
        for dev in sorted(poses):
            try:
                h = angular_profile(xy, poses[dev], grid, spread, cfg.amplitude)
            except DegenerateGeometry:
                log.warning("target on top of %s at t=%d ms, frame skipped", dev, t)
                continue
            snr = A.entries @ h
            if cfg.noise_sigma > 0:
                snr = np.maximum(snr + rng.normal(0.0, cfg.noise_sigma, snr.shape), 0.0)
            frames[dev].append(BeamFrame(int(t), dev, snr))
    return Session(A.n_sectors, frames, poses), traj


def calibration_set(truth: MeasurementMatrix, n_frames: int, seed: int = 0, *, spread_deg=None, amplitude=DEFAULT_AMPLITUDE, noise_sigma: float = 0.0, pose: DevicePose | None = None):
    """Frames of a target at random positions in front of one device.

    Returns ``(Y, X, targets)`` with ``Y = X @ A^T (+ noise)``: ``X`` rows are
    the target's angular profiles, ``Y`` rows the matching sector responses.
    Targets are drawn so their bearings cover the whole grid.
    """
    pose = pose or DevicePose(0.0, 0.0, 0.0)
    grid = truth.grid
    spread = spread_deg if spread_deg is not None else default_spread_deg(grid)
    rng = np.random.default_rng(seed)
    bearings = rng.uniform(-88.0, 88.0, n_frames)
    ranges = rng.uniform(0.5, 3.0, n_frames)
    rad = np.radians(bearings + pose.boresight)
    targets = np.stack([pose.x + ranges * np.sin(rad), pose.y + ranges * np.cos(rad)], axis=1)
    X = np.vstack([angular_profile(p, pose, grid, spread, amplitude) for p in targets])
    Y = X @ truth.entries.T
    if noise_sigma > 0:
        Y = Y + rng.normal(0.0, noise_sigma, Y.shape)
    return Y, X, targets
