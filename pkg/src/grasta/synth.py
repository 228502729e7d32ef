"""Seeded generators for the synthetic experiments.

Data vectors follow ``v = U_true w + s + zeta`` with Gaussian weights, sparse
Gaussian outliers whose variance equals the largest entry of the clean vector,
and i.i.d. Gaussian noise of variance ``noise_std**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.linalg import expm

from .core import PartialObservation, reorthonormalize
from .errors import InputValidationError
from .observed import SparseObservedMatrix
from .seeding import as_rng, substream

OUTLIER_VAR_FLOOR = 1e-6


def random_orthonormal(n: int, d: int, seed=0) -> np.ndarray:
    """Orthonormalized ``n x d`` standard Gaussian matrix."""
    if not 1 <= d < n:
        raise InputValidationError(f"need 1 <= d < n, got n={n}, d={d}")
    return reorthonormalize(as_rng(seed).standard_normal((n, d)))


@dataclass(frozen=True)
class GenModelParams:
    n: int
    d: int
    outlier_fraction: float = 0.1
    sample_fraction: float = 1.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.d < self.n:
            raise InputValidationError(f"need 1 <= d < n, got n={self.n}, d={self.d}")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise InputValidationError("outlier_fraction must lie in [0, 1]")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise InputValidationError("sample_fraction must lie in (0, 1]")
        if not self.noise_std >= 0:
            raise InputValidationError("noise_std must be nonnegative")

    @property
    def n_observed(self) -> int:
        return int(round(self.sample_fraction * self.n))

    @property
    def n_outliers(self) -> int:
        return int(round(self.outlier_fraction * self.n))


class GeneratedVector(NamedTuple):
    truth: np.ndarray
    obs: PartialObservation
    outlier_support: np.ndarray
    noise: np.ndarray
    # True when the outlier variance hit OUTLIER_VAR_FLOOR
    floored: bool


def outlier_variance(clean) -> tuple[float, bool]:
    """``|max(clean)|`` floored at :data:`OUTLIER_VAR_FLOOR`."""
    var = abs(float(np.max(clean)))
    if var < OUTLIER_VAR_FLOOR:
        return OUTLIER_VAR_FLOOR, True
    return var, False


def gen_vector(U_true, params: GenModelParams, rng, outlier_fraction: float | None = None,
               sample_fraction: float | None = None) -> GeneratedVector:
    """Draw one vector. The optional fractions override ``params`` for this draw."""
    rng = as_rng(rng)
    n, d = U_true.shape
    if n != params.n or d != params.d:
        raise InputValidationError(f"U_true shape {U_true.shape} does not match params")
    n_out = params.n_outliers if outlier_fraction is None else int(round(outlier_fraction * n))
    m = params.n_observed if sample_fraction is None else int(round(sample_fraction * n))

    clean = U_true @ rng.standard_normal(d)
    var, floored = outlier_variance(clean)
    support = np.sort(rng.choice(n, n_out, replace=False))
    s = np.zeros(n)
    s[support] = rng.standard_normal(n_out) * np.sqrt(var)
    noise = params.noise_std * rng.standard_normal(n)
    v = clean + s + noise
    if m == n:
        omega = np.arange(n)
    else:
        omega = np.sort(rng.choice(n, m, replace=False))
    return GeneratedVector(clean, PartialObservation(omega, v[omega], n), support, noise, floored)


def noise_rel_power(noise, clean) -> float:
    """``N_Rel = ||zeta|| / ||v||`` for one vector."""
    return float(np.linalg.norm(noise) / np.linalg.norm(clean))


def skew_generator(n: int, seed=0) -> np.ndarray:
    """``(A - A^T) / 2`` for a standard Gaussian ``A``."""
    A = as_rng(seed).standard_normal((n, n))
    return 0.5 * (A - A.T)


def rotation_matrix(n: int, delta: float, seed=0) -> np.ndarray:
    """``expm(delta * B)`` for the seeded skew-symmetric ``B``."""
    if delta < 0:
        raise InputValidationError("delta must be nonnegative")
    return expm(delta * skew_generator(n, seed))


def rotating_subspace(U0, delta: float, seed=0, reortho_every: int = 1000) -> Iterator[np.ndarray]:
    """Yield ``U[0] = U0``, ``U[t+1] = R U[t]`` forever."""
    U = np.array(U0, dtype=float)
    R = rotation_matrix(U.shape[0], delta, seed)
    t = 0
    while True:
        yield U
        U = R @ U
        t += 1
        if t % reortho_every == 0:
            U = reorthonormalize(U)


def sudden_change_schedule(n: int, d: int, period: int, seed=0) -> Iterator[np.ndarray]:
    """Yield a basis per step, replaced by a fresh random one every ``period`` steps."""
    if period < 1:
        raise InputValidationError("period must be >= 1")
    rng = as_rng(seed)
    while True:
        U = random_orthonormal(n, d, rng)
        for _ in range(period):
            yield U


def gen_mc_instance(rows: int, cols: int, d: int, outlier_fraction: float, density: float,
                    noise_std: float, seed=0) -> tuple[SparseObservedMatrix, np.ndarray]:
    """Corrupted, partially observed ``L_true = Y_L Y_R^T`` and ``L_true`` itself."""
    if not 1 <= d <= min(rows, cols):
        raise InputValidationError("need 1 <= d <= min(rows, cols)")
    if not 0.0 < density <= 1.0:
        raise InputValidationError("density must lie in (0, 1]")
    if not 0.0 <= outlier_fraction <= 1.0:
        raise InputValidationError("outlier_fraction must lie in [0, 1]")
    rng = as_rng(seed)
    L = rng.standard_normal((rows, d)) @ rng.standard_normal((cols, d)).T
    V = L + noise_std * rng.standard_normal((rows, cols))
    total = rows * cols
    k = int(round(outlier_fraction * total))
    var, _ = outlier_variance(L)
    corrupt = rng.choice(total, k, replace=False)
    V.flat[corrupt] += rng.standard_normal(k) * np.sqrt(var)
    picked = rng.choice(total, int(round(density * total)), replace=False)
    r, c = np.divmod(picked, cols)
    return SparseObservedMatrix(rows, cols, r, c, V[r, c]), L


class SyntheticVideo(NamedTuple):
    frames: np.ndarray       # (T, h, w) in [0, 1]
    masks: np.ndarray        # (T, h, w) bool foreground
    background: np.ndarray   # (T, h, w) background-only frames


def _profile(length: int, rng, width: int = 3) -> np.ndarray:
    """Random 1-D profile smoothed by a box filter of ``width`` pixels."""
    raw = rng.standard_normal(length + width - 1)
    return np.convolve(raw, np.ones(width) / width, mode="valid")


def _texture(h: int, w: int, rank: int, rng) -> np.ndarray:
    """Sum of ``rank`` outer products of random profiles, scaled into [0.2, 1.0].

    Rough profiles keep a 20-pixel shifted crop well outside the span of the
    original crop, so pan experiments are not trivially solved.
    """
    img = np.zeros((h, w))
    for k in range(rank):
        img += np.outer(_profile(h, rng), _profile(w, rng)) / (k + 1)
    img -= img.min()
    img /= max(img.max(), 1e-12)
    return 0.2 + 0.8 * img


def gen_synthetic_video(width: int, height: int, frames: int, n_objects: int = 2,
                        lighting_drift: float = 0.0, seed=0, rank: int = 3,
                        object_size: tuple[int, int] | None = None) -> SyntheticVideo:
    """Static textured background, dark moving rectangles, optional brightness ramp.

    Background intensities lie in [0.2, 1.0] before the ramp and object
    shades in [0, 0.15], so every object pixel differs from the background.

    The background image is ``rank`` random outer products plus a constant
    offset, so its rank is at most ``rank + 1 <= 5``. ``lighting_drift`` is the
    total multiplicative brightness change over the sequence, so drifted
    backgrounds stay in a rank-one family of the base texture.
    """
    if width < 1 or height < 1 or frames < 1:
        raise InputValidationError("width, height and frames must be >= 1")
    if not 1 <= rank <= 4:
        raise InputValidationError("rank must lie in [1, 4]")
    rng = substream(seed, "data") if isinstance(seed, (int, np.integer)) else as_rng(seed)
    base = _texture(height, width, rank, rng)
    if object_size is None:
        object_size = (max(1, height // 5), max(1, width // 8))
    oh, ow = min(object_size[0], height), min(object_size[1], width)

    ramp = 1.0 + lighting_drift * np.linspace(-0.5, 0.5, frames) if frames > 1 else np.ones(1)
    bg = np.clip(base[None] * ramp[:, None, None], 0.0, 1.0)
    out = bg.copy()
    masks = np.zeros((frames, height, width), dtype=bool)

    for _ in range(n_objects):
        y0 = rng.integers(0, height - oh + 1)
        x0 = rng.uniform(0, width - ow)
        speed = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
        shade = rng.uniform(0.0, 0.15)
        x = x0
        for t in range(frames):
            xi = int(round(x))
            masks[t, y0:y0 + oh, xi:xi + ow] = True
            out[t, y0:y0 + oh, xi:xi + ow] = shade
            x += speed
            if x < 0 or x > width - ow:
                speed = -speed
                x = min(max(x, 0.0), float(width - ow))
    return SyntheticVideo(out, masks, bg)


def vector_stream(U_seq, params: GenModelParams, steps: int, seed=0,
                  outlier_fraction_at=None) -> Iterator[GeneratedVector]:
    """Draw ``steps`` vectors, one per basis from ``U_seq``.

    ``U_seq`` is a fixed basis or an iterator of bases. ``outlier_fraction_at``
    optionally maps ``t`` to an outlier fraction overriding ``params``.
    """
    rng = substream(seed, "data")
    fixed = isinstance(U_seq, np.ndarray)
    it = None if fixed else iter(U_seq)
    for t in range(steps):
        U = U_seq if fixed else next(it)
        frac = None if outlier_fraction_at is None else outlier_fraction_at(t)
        yield gen_vector(U, params, rng, outlier_fraction=frac)


def burst_schedule(base: float, burst: float, period: int, length: int):
    """Outlier fraction ``burst`` for ``length`` steps at the start of each period, else ``base``."""
    def frac(t: int) -> float:
        return burst if t > 0 and t % period < length else base
    return frac
