"""Multi-scale adaptive LASSO and peak-based angle-of-arrival extraction.

Scale ``l`` (1-based) averages groups of ``f_l`` consecutive sectors in both
the frame and the measurement matrix, solves a LASSO with
``lam_l = lam0 * 2**(l-1)`` and contributes its K-bin profile with weight
``exp(-beta*l) / sum_k exp(-beta*k)``. Because only sectors are pooled, every
scale already lives on the full angular grid and no up-sampling is needed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .beam import AngularGrid, MeasurementMatrix, Session
from .errors import InvalidArgument, NoDetection, NumericalFailure
from .solvers import SolverConfig, elastic_net_cd, lasso_cd, omp

SOLVERS = ("mslasso", "lasso", "omp", "enet")


@dataclass(frozen=True)
class MSLConfig:
    L: int = 3
    beta: float = 0.75
    alpha: float = 1.0
    lambda0_override: float | None = None
    downsample_factors: tuple = (1, 2, 4)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(nonneg=True))
    noise_window: int = 16
    interpolate: bool = True
    warm_start: bool = False
    omp_sparsity: int = 3
    enet_ratio: float = 1.0

    def __post_init__(self):
        factors = tuple(int(f) for f in self.downsample_factors)
        object.__setattr__(self, "downsample_factors", factors)
        if self.L < 1:
            raise InvalidArgument("L must be >= 1")
        if len(factors) != self.L:
            raise InvalidArgument(f"need {self.L} downsample factors, got {len(factors)}")
        if factors[0] != 1 or any(b < a for a, b in zip(factors, factors[1:])):
            raise InvalidArgument("downsample factors must start at 1 and be non-decreasing")
        if not math.isfinite(self.beta):
            raise InvalidArgument("beta must be finite")
        if self.noise_window < 2:
            raise InvalidArgument("noise_window must be >= 2")


def default_factors(L: int) -> tuple:
    return tuple(2**i for i in range(L))


@dataclass(frozen=True)
class AoAEstimate:
    device_id: str
    t_ms: int
    theta_deg: float
    peak_value: float
    profile: np.ndarray = field(repr=False, compare=False)


def downsample_rows(M, factor: int) -> np.ndarray:
    """Average-pool consecutive groups of ``factor`` rows.

    A trailing partial group is averaged over its actual size.
    """
    if factor < 1:
        raise InvalidArgument("downsample factor must be >= 1")
    M = np.asarray(M, dtype=float)
    if factor == 1:
        return M
    n = M.shape[0]
    starts = np.arange(0, n, factor)
    sums = np.add.reduceat(M, starts, axis=0)
    counts = np.minimum(starts + factor, n) - starts
    return sums / counts.reshape((-1,) + (1,) * (M.ndim - 1))


def estimate_noise(Y_window) -> float:
    """Robust noise level from first-order temporal differences.

    ``1.4826 * median(|diff|) / sqrt(2)`` over every sector: the MAD scale of
    a difference of two i.i.d. Gaussians is ``sqrt(2) * sigma``.
    """
    Y = np.asarray(Y_window, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InvalidArgument("need at least two frames to estimate noise")
    d = np.abs(np.diff(Y, axis=0))
    return float(1.4826 * np.median(d) / math.sqrt(2.0))


def lambda0(sigma_hat: float, K: int, M: int, alpha: float = 1.0) -> float:
    if K < 2 or M < 1 or sigma_hat < 0:
        raise InvalidArgument("need K >= 2, M >= 1, sigma_hat >= 0")
    return alpha * sigma_hat * math.sqrt(math.log(K) / M)


def lambda_schedule(lam0: float, L: int) -> list[float]:
    if L < 1:
        raise InvalidArgument("L must be >= 1")
    return [lam0 * 2.0**l for l in range(L)]


def scale_weights(L: int, beta: float) -> list[float]:
    if L < 1:
        raise InvalidArgument("L must be >= 1")
    # shifting the exponent by beta leaves the normalized weights unchanged
    e = np.exp(-beta * np.arange(L, dtype=float))
    w = e / e.sum()
    return w.tolist()


def ms_lasso(A, y, cfg: MSLConfig = MSLConfig(), lam0: float | None = None, h0=None) -> np.ndarray:
    """Fused multi-scale LASSO profile of one frame."""
    a = A.entries if isinstance(A, MeasurementMatrix) else np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (a.shape[0],):
        raise InvalidArgument(f"frame has {y.shape} values, matrix has {a.shape[0]} sectors")
    if cfg.lambda0_override is not None:
        lam0 = cfg.lambda0_override
    if lam0 is None:
        raise InvalidArgument("lambda0 not given and no override configured")

    lams = lambda_schedule(lam0, cfg.L)
    weights = scale_weights(cfg.L, cfg.beta)
    fused = None
    for l, (f, lam, w) in enumerate(zip(cfg.downsample_factors, lams, weights), start=1):
        try:
            h = lasso_cd(downsample_rows(a, f), downsample_rows(y, f), lam, cfg.solver, h0)
        except NumericalFailure as exc:
            raise NumericalFailure(f"scale {l}: {exc}", scale=l) from exc
        fused = w * h if fused is None else fused + w * h
    return fused


def detect_peak(profile, grid: AngularGrid, interpolate: bool = True) -> tuple[float, float]:
    """Angle and height of the global maximum of ``profile``.

    Ties go to the lowest bin. With ``interpolate`` a parabola through the
    peak and its two neighbours refines the angle by at most half a bin.
    Raises :class:`NoDetection` when the profile has no positive value.
    """
    p = np.asarray(profile, dtype=float)
    if p.size == 0:
        raise InvalidArgument("empty profile")
    k = int(np.argmax(p))
    peak = float(p[k])
    if not peak > 0:
        raise NoDetection("profile has no positive peak")
    offset = 0.0
    if interpolate and 0 < k < p.size - 1:
        left, right = p[k - 1], p[k + 1]
        curv = left - 2.0 * peak + right
        if curv < 0:
            offset = float(np.clip(0.5 * (left - right) / curv, -0.5, 0.5))
    return grid.angle(k + offset), peak


def solve_profile(A: MeasurementMatrix, y, method: str, cfg: MSLConfig, lam0: float, h0=None) -> np.ndarray:
    """Angular profile of one frame with the named recovery method."""
    if method == "mslasso":
        return ms_lasso(A, y, cfg, lam0, h0)
    if cfg.lambda0_override is not None:
        lam0 = cfg.lambda0_override
    if method == "lasso":
        return lasso_cd(A.entries, y, lam0, cfg.solver, h0)
    if method == "enet":
        return elastic_net_cd(A.entries, y, lam0, cfg.enet_ratio * lam0, cfg.solver, h0)
    if method == "omp":
        return omp(A.entries, y, sparsity=cfg.omp_sparsity)
    raise InvalidArgument(f"unknown solver {method!r}; choose from {SOLVERS}")


def frame_lambdas(Y, K: int, cfg: MSLConfig) -> np.ndarray:
    """Per-frame lam0 from a trailing window of the most recent frames.

    Frame ``i`` uses frames ``i-W+1 .. i``; early frames whose window holds
    fewer than two frames use the first ``min(W, M)`` frames instead.
    """
    Y = np.asarray(Y, dtype=float)
    M = Y.shape[0]
    out = np.zeros(M)
    if M < 2:
        return out
    W = cfg.noise_window
    for i in range(M):
        lo = max(0, i - W + 1)
        win = Y[lo : i + 1] if i - lo + 1 >= 2 else Y[: min(W, M)]
        out[i] = lambda0(estimate_noise(win), K, win.shape[0], cfg.alpha)
    return out


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("MMWILOC_THREADS", "1") or 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def device_aoa(session: Session, device_id: str, A: MeasurementMatrix, cfg: MSLConfig, method: str = "mslasso", workers: int | None = None) -> list[AoAEstimate]:
    seq = session.frames.get(device_id, ())
    if not seq:
        return []
    if A.n_sectors != session.n_sectors:
        raise InvalidArgument(f"matrix for {device_id} has {A.n_sectors} sectors, session has {session.n_sectors}")
    Y = session.snr_matrix(device_id)
    lams = frame_lambdas(Y, A.grid.k_bins, cfg)
    offset = int(session.clock_offsets_ms.get(device_id, 0))

    if cfg.warm_start:
        profiles = []
        prev = None
        for y, lam in zip(Y, lams):
            prev = solve_profile(A, y, method, cfg, lam, prev)
            profiles.append(prev)
    else:
        n = worker_count(workers)
        jobs = zip(Y, lams)
        if n > 1:
            with ThreadPoolExecutor(n) as pool:
                profiles = list(pool.map(lambda job: solve_profile(A, job[0], method, cfg, job[1]), jobs))
        else:
            profiles = [solve_profile(A, y, method, cfg, lam) for y, lam in jobs]

    out = []
    for frame, prof in zip(seq, profiles):
        try:
            theta, peak = detect_peak(prof, A.grid, cfg.interpolate)
        except NoDetection:
            continue
        out.append(AoAEstimate(device_id, frame.t_ms + offset, theta, peak, prof))
    return out


def frames_to_aoa(session: Session, A_per_device: Mapping[str, MeasurementMatrix], cfg: MSLConfig = MSLConfig(), method: str = "mslasso", workers: int | None = None) -> dict[str, list[AoAEstimate]]:
    """AoA stream of every device; frames without a detection are dropped."""
    if not session.preprocessed:
        raise InvalidArgument("session must be preprocessed first")
    if method not in SOLVERS:
        raise InvalidArgument(f"unknown solver {method!r}; choose from {SOLVERS}")
    streams = {}
    for dev in sorted(session.frames):
        if dev not in A_per_device:
            raise InvalidArgument(f"no measurement matrix for device {dev!r}")
        streams[dev] = device_aoa(session, dev, A_per_device[dev], cfg, method, workers)
    return streams
