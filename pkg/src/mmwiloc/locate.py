"""Pair two devices' AoA streams in time and triangulate target positions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beam import DevicePose
from .errors import BehindDevice, InvalidArgument, NoIntersection

DET_EPS = 1e-9


@dataclass(frozen=True)
class PositionFix:
    t_ms: int
    x: float
    y: float
    r0: float
    r1: float
    theta0: float
    theta1: float
    in_area: bool = True


@dataclass(frozen=True)
class PairingConfig:
    max_gap_ms: float = 100.0
    # x_min, x_max, y_min, y_max of the 5 m x 3.5 m area in front of the devices
    area: tuple = (-2.5, 2.5, 0.0, 3.5)

    def __post_init__(self):
        if not self.max_gap_ms > 0:
            raise InvalidArgument("max_gap_ms must be positive")
        x0, x1, y0, y1 = self.area
        if not (x0 < x1 and y0 < y1):
            raise InvalidArgument(f"bad area bounds {self.area}")

    def contains(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.area
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass
class TrajectoryDiagnostics:
    n_pairs: int = 0
    no_intersection: int = 0
    behind_device: int = 0
    out_of_area: int = 0

    @property
    def dropped(self) -> int:
        return self.no_intersection + self.behind_device


def triangulate(theta0: float, theta1: float, p0: DevicePose, p1: DevicePose) -> tuple[float, float, float, float]:
    """Intersect the bearing rays of two devices.

    Solves ``[[sin t0, -sin t1], [cos t0, -cos t1]] @ [r0, r1] = p1 - p0``
    with world bearings ``t_i = theta_i + boresight_i`` and returns
    ``(x, y, r0, r1)``.
    """
    if (p0.x, p0.y) == (p1.x, p1.y):
        raise InvalidArgument("devices share a position")
    a0 = math.radians(theta0 + p0.boresight)
    a1 = math.radians(theta1 + p1.boresight)
    s0, c0, s1, c1 = math.sin(a0), math.cos(a0), math.sin(a1), math.cos(a1)
    det = -s0 * c1 + s1 * c0
    if abs(det) < DET_EPS:
        raise NoIntersection(f"parallel bearings {theta0:.6g} and {theta1:.6g}")
    bx, by = p1.x - p0.x, p1.y - p0.y
    # Cramer's rule
    r0 = (-bx * c1 + s1 * by) / det
    r1 = (s0 * by - c0 * bx) / det
    if r0 <= 0 or r1 <= 0:
        raise BehindDevice(f"intersection behind a device (r0={r0:.3g}, r1={r1:.3g})")
    return p0.x + r0 * s0, p0.y + r0 * c0, r0, r1


def pair_streams(stream0, stream1, cfg: PairingConfig = PairingConfig()) -> list[tuple]:
    """Greedy nearest-timestamp matching of two time-ordered AoA streams.

    Candidate pairs within ``max_gap_ms`` are accepted in order of increasing
    gap (earlier first on ties); each estimate is used at most once. The result
    is ordered by pair midpoint time.
    """
    if not stream0 or not stream1:
        return []
    t1 = np.array([e.t_ms for e in stream1], dtype=float)
    cands = []
    for i, e0 in enumerate(stream0):
        lo = np.searchsorted(t1, e0.t_ms - cfg.max_gap_ms, side="left")
        hi = np.searchsorted(t1, e0.t_ms + cfg.max_gap_ms, side="right")
        for j in range(lo, hi):
            cands.append((abs(e0.t_ms - t1[j]), e0.t_ms, i, j))
    cands.sort()
    used0, used1 = set(), set()
    pairs = []
    for _, _, i, j in cands:
        if i in used0 or j in used1:
            continue
        used0.add(i)
        used1.add(j)
        pairs.append((stream0[i], stream1[j]))
    pairs.sort(key=lambda p: (p[0].t_ms + p[1].t_ms, p[0].t_ms))
    return pairs


def build_trajectory(pairs, poses, cfg: PairingConfig = PairingConfig(), diagnostics: TrajectoryDiagnostics | None = None) -> list[PositionFix]:
    """Triangulate each ``(estimate0, estimate1)`` pair into a position fix.

    ``poses`` is either a ``(pose0, pose1)`` tuple or a mapping from device id
    to pose. Parallel and behind-device intersections are dropped and counted
    in ``diagnostics``; fixes outside the area are kept with ``in_area`` unset.
    The fix timestamp is the (floored) pair midpoint.
    """
    diag = diagnostics if diagnostics is not None else TrajectoryDiagnostics()
    fixes = []
    for e0, e1 in pairs:
        diag.n_pairs += 1
        if isinstance(poses, dict):
            p0, p1 = poses[e0.device_id], poses[e1.device_id]
        else:
            p0, p1 = poses
        try:
            x, y, r0, r1 = triangulate(e0.theta_deg, e1.theta_deg, p0, p1)
        except NoIntersection:
            diag.no_intersection += 1
            continue
        except BehindDevice:
            diag.behind_device += 1
            continue
        inside = cfg.contains(x, y)
        diag.out_of_area += not inside
        fixes.append(PositionFix((e0.t_ms + e1.t_ms) // 2, x, y, r0, r1, e0.theta_deg, e1.theta_deg, inside))
    fixes.sort(key=lambda f: f.t_ms)
    return fixes
