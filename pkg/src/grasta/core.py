"""Grassmannian geometry primitives.

A subspace basis is a plain ``(n, d)`` float array with orthonormal columns.
Partial observations keep only the observed indices and values; the
selection/zero-padding operator is never formed as an ``n x n`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InputValidationError

ORTHO_TOL = 1e-10


def as_basis(U, check: bool = True, tol: float = ORTHO_TOL) -> np.ndarray:
    """Validate ``U`` as an ``(n, d)`` orthonormal basis with ``1 <= d < n``."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise InputValidationError(f"basis must be 2-D, got shape {U.shape}")
    n, d = U.shape
    if not 1 <= d < n:
        raise InputValidationError(f"basis needs 1 <= d < n, got n={n}, d={d}")
    if check and orthonormality_error(U) > tol:
        raise InputValidationError(
            f"basis columns are not orthonormal (error {orthonormality_error(U):.3g})"
        )
    return U


def orthonormality_error(U: np.ndarray) -> float:
    """Max-abs entry of ``U^T U - I``."""
    d = U.shape[1]
    return float(np.max(np.abs(U.T @ U - np.eye(d))))


@dataclass(frozen=True)
class PartialObservation:
    """Observed entries ``values`` of an ambient ``n``-vector at ``indices``."""

    indices: np.ndarray
    values: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        n = int(self.ambient_dim)
        if idx.shape != vals.shape:
            raise InputValidationError(
                f"{idx.size} indices but {vals.size} values"
            )
        if idx.size > n:
            raise InputValidationError("more observed entries than the ambient dimension")
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise InputValidationError(f"indices out of range [0, {n})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise InputValidationError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "ambient_dim", n)

    @classmethod
    def from_vector(cls, v, indices=None) -> "PartialObservation":
        """Observe a full vector ``v`` on ``indices`` (all entries if None)."""
        v = np.asarray(v, dtype=float).reshape(-1)
        if indices is None:
            indices = np.arange(v.size)
        indices = np.sort(np.asarray(indices, dtype=np.intp))
        return cls(indices, v[indices], v.size)

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class GradientSketch:
    """Rank-one factors of the Grassmannian gradient ``gamma @ weight.T``."""

    gamma: np.ndarray
    weight: np.ndarray
    sigma: float

    @property
    def dense(self) -> np.ndarray:
        """Materialize the full ``n x d`` gradient (tests and debugging only)."""
        return np.outer(self.gamma, self.weight)


def extract_rows(U: np.ndarray, indices) -> np.ndarray:
    """Rows of ``U`` at ``indices``, in order."""
    U = np.asarray(U, dtype=float)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= U.shape[0]):
        raise InputValidationError(f"row index out of range [0, {U.shape[0]})")
    return U[idx]


def zero_pad(x, indices, n: int) -> np.ndarray:
    """Scatter ``x`` into a zero ``n``-vector at ``indices``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    idx = np.asarray(indices, dtype=np.intp)
    if x.size != idx.size:
        raise InputValidationError(f"{x.size} values for {idx.size} indices")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InputValidationError(f"index out of range [0, {n})")
    out = np.zeros(n)
    out[idx] = x
    return out


def compute_gradient(U: np.ndarray, obs: PartialObservation, sol, rho: float) -> GradientSketch:
    """Gradient of the augmented Lagrangian loss at ``U`` in rank-one form.

    ``sol`` is the ADMM triple computed against ``U[obs.indices]`` with the
    same ``rho``. Returns ``(gamma, w, sigma)`` with gradient ``gamma w^T``.
    """
    U = np.asarray(U, dtype=float)
    n, d = U.shape
    if obs.ambient_dim != n:
        raise InputValidationError(f"observation has n={obs.ambient_dim}, basis n={n}")
    s = np.asarray(sol.sparse, dtype=float)
    w = np.asarray(sol.weight, dtype=float)
    y = np.asarray(sol.dual, dtype=float)
    if s.shape != (len(obs),) or y.shape != (len(obs),) or w.shape != (d,):
        raise InputValidationError("ADMM solution does not match the observation/basis shapes")
    U_omega = U[obs.indices]
    gamma1 = y + rho * (U_omega @ w + s - obs.values)
    gamma2 = U_omega.T @ gamma1
    gamma = -(U @ gamma2)
    gamma[obs.indices] += gamma1
    sigma = float(np.linalg.norm(gamma) * np.linalg.norm(w))
    return GradientSketch(gamma, w.copy(), sigma)


def geodesic_step(U: np.ndarray, g: GradientSketch, eta: float) -> np.ndarray:
    """Move ``U`` a length ``eta`` along the geodesic in direction ``-gradient``.

    Returns ``U`` itself (no copy) when ``sigma == 0``; callers treat that as
    "no update".
    """
    if not np.isfinite(eta) or eta < 0:
        raise InputValidationError(f"step size must be finite and nonnegative, got {eta}")
    if g.sigma == 0.0:
        return U
    w_norm = np.linalg.norm(g.weight)
    gamma_norm = np.linalg.norm(g.gamma)
    theta = eta * g.sigma
    w_hat = g.weight / w_norm
    direction = (np.cos(theta) - 1.0) * (U @ w_hat) - np.sin(theta) * (g.gamma / gamma_norm)
    return U + np.outer(direction, w_hat)


def reorthonormalize(U) -> np.ndarray:
    """Thin orthonormal factor of ``U`` with the same column span.

    Sign convention: the first nonzero entry of every column is nonnegative.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] > U.shape[0]:
        raise InputValidationError(f"need a tall matrix, got shape {U.shape}")
    Q, R = np.linalg.qr(U)
    diag = np.abs(np.diag(R))
    scale = max(float(np.max(np.abs(U))), np.finfo(float).tiny)
    if diag.size and diag.min() <= 1e-12 * scale * max(U.shape):
        raise DegeneracyError("matrix is rank deficient; cannot reorthonormalize")
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > 1e-14)
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


def subspace_distance(U1, U2) -> float:
    """Projection-Frobenius distance ``||U1 U1^T - U2 U2^T||_F / sqrt(2)``.

    Ranges over ``[0, sqrt(d)]`` and is zero iff the spans coincide.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape != U2.shape:
        raise InputValidationError(f"shape mismatch {U1.shape} vs {U2.shape}")
    d = U1.shape[1]
    overlap = np.linalg.norm(U1.T @ U2) ** 2
    return float(np.sqrt(max(d - overlap, 0.0)))


def projection_residual(U, B) -> float:
    """How far ``span(B)`` sticks out of ``span(U)``: ``||(I - U U^T) Q_B||_F``.

    ``B`` may have fewer columns than ``U``. For equal column counts this
    equals :func:`subspace_distance`.
    """
    U = np.asarray(U, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != U.shape[0]:
        raise InputValidationError("ambient dimensions differ")
    Q = np.linalg.qr(B)[0]
    return float(np.linalg.norm(Q - U @ (U.T @ Q)))
