"""Thresholded localization error, association rate and error CDFs."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field

import numpy as np

from .beam import Trajectory
from .errors import InvalidArgument

GROUP_TOL_MS = 1


@dataclass(frozen=True)
class EvalConfig:
    threshold_m: float = 0.25

    def __post_init__(self):
        if not self.threshold_m > 0:
            raise InvalidArgument("threshold_m must be positive")


@dataclass
class SessionMetrics:
    per_timestamp_errors: list = field(default_factory=list)
    mean_error: float = 0.0
    median_error: float = 0.0
    association_rate: float = 0.0
    n_detected: int = 0
    n_matched: int = 0

    def to_dict(self, pattern: str | None = None) -> dict:
        d = asdict(self)
        d.pop("per_timestamp_errors")
        d = {"pattern": pattern, "mean": self.mean_error, "median": self.median_error,
             "association_rate": self.association_rate, "n": self.n_detected, **d}
        return d


def frame_error(estimates, gt, cfg: EvalConfig = EvalConfig()) -> tuple[float, int]:
    """Mean distance of the estimates lying within the threshold of ``gt``.

    Returns ``(threshold, 0)`` when no estimate is close enough.
    """
    pts = np.asarray(estimates, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return cfg.threshold_m, 0
    dx = pts[:, 0] - gt[0]
    dy = pts[:, 1] - gt[1]
    d = np.sqrt(dx * dx + dy * dy)
    near = d <= cfg.threshold_m
    if not near.any():
        return cfg.threshold_m, 0
    # fsum is correctly rounded, so the result does not depend on summation order
    return math.fsum(d[near]) / int(near.sum()), int(near.sum())


def group_by_time(t_ms, tol_ms: int = GROUP_TOL_MS) -> list[list[int]]:
    """Indices of time-sorted fixes split into groups spanning at most ``tol_ms``."""
    order = np.argsort(np.asarray(t_ms), kind="stable")
    groups: list[list[int]] = []
    start = None
    for i in order:
        if start is None or t_ms[i] - start > tol_ms:
            groups.append([int(i)])
            start = t_ms[i]
        else:
            groups[-1].append(int(i))
    return groups


def session_metrics(trajectory, gt_path: Trajectory, cfg: EvalConfig = EvalConfig()) -> SessionMetrics:
    """Per-timestamp errors and association rate of a list of position fixes.

    Ground truth is interpolated at each timestamp group's first time. Every
    fix counts toward the association-rate denominator, in area or not.
    """
    fixes = list(trajectory)
    if not fixes:
        return SessionMetrics()
    t = [f.t_ms for f in fixes]
    errors = []
    matched = 0
    for group in group_by_time(t):
        gt = gt_path.position_at(t[group[0]])
        err, n_within = frame_error([(fixes[i].x, fixes[i].y) for i in group], gt, cfg)
        errors.append(err)
        matched += n_within
    return SessionMetrics(
        per_timestamp_errors=errors,
        mean_error=math.fsum(errors) / len(errors),
        median_error=float(statistics.median(errors)),
        association_rate=matched / len(fixes),
        n_detected=len(fixes),
        n_matched=matched,
    )


def error_cdf(errors) -> list[tuple[float, float]]:
    """Empirical CDF: i-th smallest error paired with ``i / n``."""
    v = np.sort(np.asarray(errors, dtype=float))
    n = v.size
    return [(float(x), (i + 1) / n) for i, x in enumerate(v)]
