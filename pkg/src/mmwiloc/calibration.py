"""Expectation-maximization calibration of the beam measurement matrix.

The calibrated quantity is kept in square-root form: the state stores a
nonnegative root ``A`` whose elementwise square ``B = A * A`` is the forward
operator the E- and M-steps fit (``Y_i ~ B h_i``). :attr:`EMState.forward`
exposes ``B``; it is what :func:`run_em` is initialized from and what the AoA
stage consumes.

Two updates are kept exactly as written in the method even though they sit
awkwardly with the square-root form: the noise variance is computed from the
residual ``Y_i - A (h_i + p)`` with the root ``A``, and the same scalar sigma
weights the prior in the E-step.

With fewer sectors than angular bins the E-step data term alone cannot pin
down ``h``; the sigma-weighted prior term keeps the hidden states near
``X + p`` instead of letting small matrix errors blow up into them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .beam import AngularGrid, MeasurementMatrix
from .errors import InvalidArgument, NumericalFailure

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class EMConfig:
    sigma0: float = 1.0
    eps: float = 1e-4
    max_iters: int = 200
    blend_iters: int = 5
    ridge: float = 1e-6

    def __post_init__(self):
        if not self.sigma0 > 0 or not self.eps > 0:
            raise InvalidArgument("sigma0 and eps must be positive")
        if self.max_iters < 1 or self.blend_iters < 1:
            raise InvalidArgument("max_iters and blend_iters must be >= 1")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be >= 0")


@dataclass(frozen=True)
class CalibrationSet:
    """Observed frames ``Y`` (M x N) and ground-truth angular profiles ``X`` (M x K)."""

    Y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if Y.shape[0] != X.shape[0]:
            raise InvalidArgument(f"Y has {Y.shape[0]} frames, X has {X.shape[0]}")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise InvalidArgument("calibration data must be finite")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)

    @property
    def M(self) -> int:
        return self.Y.shape[0]


@dataclass
class EMState:
    A: np.ndarray
    p: np.ndarray
    sigma: float
    H: np.ndarray
    loglik_history: list = field(default_factory=list)
    delta_history: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0

    @property
    def forward(self) -> np.ndarray:
        return self.A * self.A

    def measurement_matrix(self, grid: AngularGrid | None = None) -> MeasurementMatrix:
        B = self.forward
        return MeasurementMatrix(B, grid or AngularGrid(B.shape[1]))


def _ridge_solve(G, rhs, ridge, what):
    """Solve ``(G + ridge * trace(G)/K * I) X = rhs`` by Cholesky."""
    K = G.shape[0]
    jitter = ridge * np.trace(G) / K
    try:
        cho = scipy.linalg.cho_factor(G + jitter * np.eye(K), check_finite=True)
        out = scipy.linalg.cho_solve(cho, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"singular normal equations in {what}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalFailure(f"non-finite solution in {what}")
    return out


def data_states(A, Y, ridge: float, anchor=None, weight: float = 0.0) -> np.ndarray:
    """Ridge least-squares hidden states of all frames under ``Y_i = (A*A) h``.

    Minimizes ``||Y_i - B h||^2 + weight ||h - anchor_i||^2`` per frame, plus
    the ``ridge`` jitter, with ``B = A*A``. ``anchor`` rows broadcast against
    ``Y`` and default to zero. With ``weight = 0`` this is the least-squares
    solution nearest the anchor.
    """
    B = np.asarray(A, dtype=float) ** 2
    Y = np.atleast_2d(Y)
    K = B.shape[1]
    G = B.T @ B + weight * np.eye(K)
    if anchor is None:
        return _ridge_solve(G, B.T @ Y.T, ridge, "E-step").T
    anchor = np.broadcast_to(anchor, (Y.shape[0], K))
    R = Y - anchor @ B.T
    return anchor + _ridge_solve(G, B.T @ R.T, ridge, "E-step").T


def blend(h_data, X, p, sigma: float, rounds: int) -> np.ndarray:
    """Pull data-driven states toward the prior ``X + p`` with weight ``sigma``."""
    prior = X + p
    h = h_data
    for _ in range(rounds):
        h = (h_data + sigma * prior) / (1.0 + sigma)
    return h


def e_step(state: EMState, Y_i, X_i, cfg: EMConfig = EMConfig()) -> np.ndarray:
    """Hidden state of one frame.

    ``h_data`` minimizes ``||Y_i - (A*A) h||^2 + sigma ||h - (X_i + p)||^2``;
    ``blend_iters`` rounds of ``h <- (h_data + sigma (X_i + p)) / (1 + sigma)``
    follow. Both use the current sigma, so ``sigma = 0`` returns the plain
    least-squares state and a large sigma returns the prior.
    """
    Y_i = np.asarray(Y_i, dtype=float)
    X_i = np.asarray(X_i, dtype=float)
    N, K = state.A.shape
    if Y_i.shape != (N,) or X_i.shape != (K,):
        raise InvalidArgument(f"frame shapes {Y_i.shape}, {X_i.shape} do not match A {state.A.shape}")
    h_data = data_states(state.A, Y_i[None, :], cfg.ridge, X_i + state.p, state.sigma)[0]
    return blend(h_data, X_i, state.p, state.sigma, cfg.blend_iters)


def residual_sq(Y, A, H, p) -> float:
    """``sum_i ||Y_i - A (h_i + p)||^2``."""
    R = Y - (H + p) @ np.asarray(A).T
    return float(np.sum(R * R))


def m_step(Y, H, X, cfg: EMConfig = EMConfig()):
    """Returns ``(A, p, sigma)`` from the current hidden states."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M, N = Y.shape
    if M < 1 or H.shape[0] != M or X.shape != H.shape:
        raise InvalidArgument("Y, H and X must have matching, nonzero frame counts")
    B_new = _ridge_solve(H.T @ H, H.T @ Y, cfg.ridge, "M-step").T
    A = np.sqrt(np.abs(B_new))
    p = (H - X).mean(axis=0)
    sigma = max(residual_sq(Y, A, H, p) / (M * N), SIGMA_FLOOR)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(p)) and math.isfinite(sigma)):
        raise NumericalFailure("non-finite M-step update")
    return A, p, sigma


def log_likelihood(Y, A, H, p, sigma: float) -> float:
    if not sigma > 0:
        raise InvalidArgument("sigma must be positive")
    Y = np.atleast_2d(Y)
    M = Y.shape[0]
    return -residual_sq(Y, A, H, p) / (2.0 * sigma) - 0.5 * M * math.log(sigma)


def run_em(calib: CalibrationSet, A0, cfg: EMConfig = EMConfig(), *, on_iteration=None) -> EMState:
    """Alternate E- and M-steps until the parameter change falls below ``eps``.

    ``A0`` is the initial forward matrix; its elementwise square root seeds the
    state. The stopping quantity is ``||A_new - A||_F^2 + ||p_new - p||^2`` on
    the root; both it and the log-likelihood are recorded every iteration.
    ``on_iteration(i, delta, loglik)`` is called after each iteration.
    """
    B0 = A0.entries if isinstance(A0, MeasurementMatrix) else np.asarray(A0, dtype=float)
    if calib.M == 0:
        raise InvalidArgument("calibration set has no frames")
    N, K = B0.shape
    if calib.Y.shape[1] != N or calib.X.shape[1] != K:
        raise InvalidArgument(f"calibration data {calib.Y.shape}/{calib.X.shape} does not match A0 {B0.shape}")

    state = EMState(A=np.sqrt(B0), p=np.zeros(K), sigma=cfg.sigma0, H=calib.X.copy())
    for it in range(1, cfg.max_iters + 1):
        try:
            h_data = data_states(state.A, calib.Y, cfg.ridge, calib.X + state.p, state.sigma)
            H = blend(h_data, calib.X, state.p, state.sigma, cfg.blend_iters)
            A, p, sigma = m_step(calib.Y, H, calib.X, cfg)
        except NumericalFailure as exc:
            raise NumericalFailure(f"iteration {it}: {exc}", iteration=it) from exc
        delta = float(np.sum((A - state.A) ** 2) + np.sum((p - state.p) ** 2))
        ll = log_likelihood(calib.Y, A, H, p, sigma)
        state.A, state.p, state.sigma, state.H = A, p, sigma, H
        state.delta_history.append(delta)
        state.loglik_history.append(ll)
        state.n_iter = it
        if on_iteration is not None:
            on_iteration(it, delta, ll)
        log.debug("EM iteration %d: delta=%.3e loglik=%.6g sigma=%.4g", it, delta, ll, sigma)
        if delta < cfg.eps:
            state.converged = True
            break
    return state
