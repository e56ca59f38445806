"""Sparse recovery kernels.

All objectives here omit the usual ``1/2`` data-term factor::

    lasso:        ||y - A h||^2 + lam * ||h||_1
    elastic net:  ||y - A h||^2 + lam1 * ||h||_1 + lam2 * ||h||^2

so soft-thresholds are at ``lam / 2``. Multiply by two before comparing a
``lam`` with scikit-learn's ``alpha`` (which also divides by ``n_samples``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceWarning, InvalidArgument, NumericalFailure

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        return args[0] if args and callable(args[0]) else (lambda f: f)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 1000
    nonneg: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgument("tol must be positive")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")


@dataclass
class SolveInfo:
    converged: bool
    n_sweeps: int
    objective: list = field(default_factory=list)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(A, y, lam, h, lam2=0.0) -> float:
    r = y - A @ h
    return float(r @ r + lam * np.abs(h).sum() + lam2 * (h @ h))


def _check(A, y):
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2 or y.ndim != 1 or A.shape[0] != y.shape[0]:
        raise InvalidArgument(f"shape mismatch: A {A.shape}, y {y.shape}")
    return A, y


@njit(cache=True, nogil=True)
def _sweep(G, c, diag, denom, h, q, thr, nonneg, coords):
    """One cyclic pass over ``coords``; returns the largest coordinate change."""
    max_delta = 0.0
    K = h.shape[0]
    for k in coords:
        hk = h[k]
        rho = c[k] - q[k] + diag[k] * hk
        if rho > thr:
            new = (rho - thr) / denom[k]
        elif rho < -thr and not nonneg:
            new = (rho + thr) / denom[k]
        else:
            new = 0.0
        delta = new - hk
        if delta != 0.0:
            for j in range(K):
                q[j] += G[k, j] * delta
            h[k] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


def _coordinate_descent(A, y, lam1, lam2, cfg, h0, track):
    """Cyclic coordinate descent on the elastic-net objective.

    Full sweeps alternate with sweeps over the current nonzero set; a full
    sweep whose largest coordinate change is below ``tol`` ends the run.
    Every sweep counts toward ``max_iters``.
    """
    n, k_bins = A.shape
    G = np.ascontiguousarray(A.T @ A)
    c = A.T @ y
    diag = np.diag(G).copy()
    if lam1 == 0 and lam2 == 0 and np.any(diag == 0):
        raise InvalidArgument("all-zero column with zero regularization")
    denom = diag + lam2
    thr = lam1 / 2.0

    h = np.zeros(k_bins) if h0 is None else np.array(h0, dtype=float)
    if h.shape != (k_bins,):
        raise InvalidArgument("warm start has wrong length")
    q = G @ h
    info = SolveInfo(False, 0)
    if track:
        info.objective.append(lasso_objective(A, y, lam1, h, lam2))

    usable = np.flatnonzero(denom > 0)
    full = True
    while info.n_sweeps < cfg.max_iters:
        coords = usable if full else usable[h[usable] != 0.0]
        max_delta = _sweep(G, c, diag, denom, h, q, thr, cfg.nonneg, coords)
        info.n_sweeps += 1
        if track:
            info.objective.append(lasso_objective(A, y, lam1, h, lam2))
        if not np.isfinite(max_delta) or not np.all(np.isfinite(h)):
            raise NumericalFailure("coordinate descent diverged", iteration=info.n_sweeps)
        if max_delta < cfg.tol:
            if full:
                info.converged = True
                break
            full = True
        else:
            full = False
    return h, info


def _finish(h, info, return_info, name):
    if not info.converged:
        warnings.warn(f"{name} stopped after {info.n_sweeps} sweeps without converging", ConvergenceWarning, stacklevel=3)
    return (h, info) if return_info else h


def lasso_cd(A, y, lam: float, cfg: SolverConfig = SolverConfig(), h0=None, *, return_info=False, track_objective=False):
    """Minimize ``||y - A h||^2 + lam ||h||_1`` by cyclic coordinate descent.

    Each coordinate update is exact: ``h_k = S(a_k^T r_k, lam/2) / ||a_k||^2``
    with ``r_k`` the residual excluding coordinate ``k``. ``h0`` warm-starts
    the iterate. A non-converged run returns the last iterate and emits a
    :class:`ConvergenceWarning`; ``return_info=True`` also returns a
    :class:`SolveInfo` with the flag.
    """
    if lam < 0:
        raise InvalidArgument("lambda must be >= 0")
    A, y = _check(A, y)
    h, info = _coordinate_descent(A, y, float(lam), 0.0, cfg, h0, track_objective)
    return _finish(h, info, return_info, "lasso_cd")


def elastic_net_cd(A, y, lam1: float, lam2: float, cfg: SolverConfig = SolverConfig(), h0=None, *, return_info=False, track_objective=False):
    """Minimize ``||y - A h||^2 + lam1 ||h||_1 + lam2 ||h||^2``.

    Update: ``h_k = S(a_k^T r_k, lam1/2) / (||a_k||^2 + lam2)``.
    """
    if lam1 < 0 or lam2 < 0:
        raise InvalidArgument("lambdas must be >= 0")
    A, y = _check(A, y)
    h, info = _coordinate_descent(A, y, float(lam1), float(lam2), cfg, h0, track_objective)
    return _finish(h, info, return_info, "elastic_net_cd")


def omp(A, y, sparsity: int | None = None, residual_tol: float | None = None) -> np.ndarray:
    """Orthogonal matching pursuit.

    Selects the column with the largest normalized correlation with the
    residual, refits least squares on the active set, and stops after
    ``sparsity`` atoms or once the residual norm is at most ``residual_tol``.
    At least one stopping rule must be given.
    """
    A, y = _check(A, y)
    n, k_bins = A.shape
    if sparsity is None and residual_tol is None:
        raise InvalidArgument("give sparsity or residual_tol")
    limit = min(n, k_bins)
    if sparsity is not None:
        if not 0 <= sparsity <= limit:
            raise InvalidArgument(f"sparsity must be in [0, {limit}]")
        limit = sparsity
    tol = 0.0 if residual_tol is None else residual_tol

    norms = np.linalg.norm(A, axis=0)
    usable = norms > 0
    h = np.zeros(k_bins)
    support: list[int] = []
    r = y.copy()
    coef = np.zeros(0)
    while len(support) < limit and np.linalg.norm(r) > tol:
        corr = np.zeros(k_bins)
        corr[usable] = np.abs(A[:, usable].T @ r) / norms[usable]
        corr[support] = 0.0
        k = int(np.argmax(corr))
        if corr[k] <= 1e-12 * max(np.linalg.norm(y), 1.0):
            break
        support.append(k)
        sub = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support) or not np.all(np.isfinite(coef)):
            raise NumericalFailure(f"singular active set of size {len(support)}")
        r = y - sub @ coef
    h[support] = coef
    return h


def kkt_violation(A, y, lam: float, h, lam2: float = 0.0) -> float:
    """Largest violation of the optimality conditions of the objectives above.

    For zero coordinates the subgradient condition ``|g_k| <= lam`` is checked
    (clamped at 0); for nonzero ones ``g_k = lam * sign(h_k)``, where
    ``g_k = 2 a_k^T (y - A h) - 2 lam2 h_k``.
    """
    A, y = _check(A, y)
    h = np.asarray(h, dtype=float)
    g = 2.0 * A.T @ (y - A @ h) - 2.0 * lam2 * h
    zero = h == 0
    v = np.where(zero, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(h)))
    return float(v.max()) if v.size else 0.0


def lambda_max(A, y) -> float:
    """Smallest ``lam`` for which ``h = 0`` solves the lasso."""
    A, y = _check(A, y)
    return float(2.0 * np.max(np.abs(A.T @ y))) if A.size else 0.0
