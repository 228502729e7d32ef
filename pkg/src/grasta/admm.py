"""ADMM solver for the least-absolute-deviations subproblem.

For a fixed row block ``U_omega`` and observation ``v`` it estimates the
sparse residual ``s``, the weights ``w`` and the dual vector ``y`` of

    min ||s||_1  s.t.  U_omega w + s - v = 0.

The iteration uses the unscaled dual and a soft-threshold level of
``1 / (1 + rho)``. It is only stable for ``0 < rho < 2``; ``rho = 1``
coincides with textbook scaled ADMM at penalty 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InputValidationError

_logger = logging.getLogger(__name__)

COND_LIMIT = 1e12


@dataclass(frozen=True)
class AdmmParams:
    rho: float = 1.8
    eps_abs: float = 1e-7
    eps_rel: float = 1e-5
    max_iter: int = 60

    def __post_init__(self):
        if not self.rho > 0:
            raise InputValidationError(f"rho must be positive, got {self.rho}")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise InputValidationError("ADMM tolerances must be positive")
        if int(self.max_iter) < 1:
            raise InputValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.rho >= 2:
            _logger.warning("rho=%g >= 2: the ADMM iteration is not stable there", self.rho)


@dataclass(frozen=True)
class AdmmSolution:
    sparse: np.ndarray
    weight: np.ndarray
    dual: np.ndarray
    iterations: int = 0
    converged: bool = False
    r_pri: float = float("nan")
    r_dual: float = float("nan")


def soft_threshold(x, kappa: float) -> np.ndarray:
    """Entrywise ``sign(x) * max(|x| - kappa, 0)``."""
    if kappa < 0:
        raise InputValidationError(f"threshold must be nonnegative, got {kappa}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def lad_objective(U_omega, v, w) -> float:
    """``||U_omega w - v||_1``."""
    U_omega = np.asarray(U_omega, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if U_omega.shape != (v.size, w.size):
        raise InputValidationError(
            f"shapes do not match: U {U_omega.shape}, v {v.shape}, w {w.shape}"
        )
    return float(np.abs(U_omega @ w - v).sum())


def lad_projector(U_omega) -> np.ndarray:
    """``(U^T U)^{-1} U^T`` for the observed rows, with a conditioning check."""
    U_omega = np.asarray(U_omega, dtype=float)
    m, d = U_omega.shape
    if m < d:
        raise DegeneracyError(f"{m} observed entries cannot determine {d} weights")
    gram = U_omega.T @ U_omega
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegeneracyError(f"U_omega^T U_omega is ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(gram, U_omega.T)


def solve_lad(U_omega, v, params: AdmmParams = AdmmParams(),
              warm: AdmmSolution | None = None) -> AdmmSolution:
    """Run the ADMM iteration from zeros, or from ``warm`` when given."""
    U_omega = np.asarray(U_omega, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if U_omega.ndim != 2 or U_omega.shape[0] != v.size:
        raise InputValidationError(f"U_omega {U_omega.shape} does not match v {v.shape}")
    return solve_lad_with_projector(U_omega, lad_projector(U_omega), v, params, warm)


def solve_lad_with_projector(U_omega, P, v, params: AdmmParams = AdmmParams(),
                             warm: AdmmSolution | None = None) -> AdmmSolution:
    """Same as :func:`solve_lad` with a precomputed ``P = (U^T U)^{-1} U^T``.

    Useful when the same rows of a fixed basis are reused across many vectors.
    """
    m, d = U_omega.shape
    rho = params.rho
    kappa = 1.0 / (1.0 + rho)
    if warm is None:
        s = np.zeros(m)
        y = np.zeros(m)
        w = np.zeros(d)
    else:
        s = np.array(warm.sparse, dtype=float)
        y = np.array(warm.dual, dtype=float)
        w = np.array(warm.weight, dtype=float)
        if s.shape != (m,) or y.shape != (m,) or w.shape != (d,):
            raise InputValidationError("warm start does not match the problem dimensions")

    sqrt_m_abs = np.sqrt(m) * params.eps_abs
    sqrt_d_abs = np.sqrt(d) * params.eps_abs
    v_norm = np.linalg.norm(v)
    r_pri = r_dual = float("nan")
    converged = False
    k = 0
    for k in range(1, int(params.max_iter) + 1):
        w = (P @ (rho * (v - s) - y)) / rho
        Uw = U_omega @ w
        s_prev = s
        s = soft_threshold(v - Uw - y, kappa)
        resid = Uw + s - v
        y = y + rho * resid

        r_pri = float(np.linalg.norm(resid))
        r_dual = float(np.linalg.norm(rho * (U_omega.T @ (s - s_prev))))
        eps_pri = sqrt_m_abs + params.eps_rel * max(np.linalg.norm(Uw), np.linalg.norm(s), v_norm)
        eps_dual = sqrt_d_abs + params.eps_rel * np.linalg.norm(rho * (U_omega.T @ y))
        if r_pri <= eps_pri and r_dual <= eps_dual:
            converged = True
            break
    return AdmmSolution(s, w, y, k, converged, r_pri, r_dual)
