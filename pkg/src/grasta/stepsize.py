"""Multi-level adaptive step-size rule.

The rule watches the inner product of consecutive gradients. Aligned
gradients shrink ``mu`` (a larger step), opposing ones grow it. When ``mu``
leaves ``(mu_min, mu_max)`` the level moves by one and ``mu`` resets to
``mu_zero``, so the step changes by a factor of two per level:

    eta = C * 2**(-level) / (1 + mu)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import GradientSketch
from .errors import InputValidationError

LEVEL_BOUNDS = (-20, 20)


@dataclass(frozen=True)
class StepSizeParams:
    c_scale: float = 1.0
    f_max: float = 1.0
    f_min: float = -1.0
    omega_shape: float = 0.1
    mu_min: float = 1.0
    mu_max: float = 15.0
    mu_zero: float = 3.0
    # "multilevel" (adaptive) or "diminishing" (mu_t = t, level fixed at 0)
    rule: str = "multilevel"

    def __post_init__(self):
        if not self.c_scale > 0:
            raise InputValidationError("c_scale must be positive")
        if not self.f_max > 0 > self.f_min:
            raise InputValidationError("need f_max > 0 > f_min")
        if not self.omega_shape > 0:
            raise InputValidationError("omega_shape must be positive")
        if not self.mu_min < self.mu_zero < self.mu_max:
            raise InputValidationError("need mu_min < mu_zero < mu_max")
        if self.rule not in ("multilevel", "diminishing"):
            raise InputValidationError(f"unknown step-size rule {self.rule!r}")


@dataclass(frozen=True)
class StepSizeState:
    mu: float
    level: int = 0
    prev_gamma: np.ndarray | None = None
    prev_weight: np.ndarray | None = None
    t: int = 0

    @property
    def has_prev(self) -> bool:
        return self.prev_gamma is not None

    @classmethod
    def initial(cls, params: StepSizeParams = StepSizeParams()) -> "StepSizeState":
        return cls(mu=params.mu_zero)


def sigmoid(x: float, params: StepSizeParams = StepSizeParams()) -> float:
    """``f_min + (f_max - f_min) / (1 - (f_max / f_min) * exp(-x / omega))``.

    Zero at the origin, saturating at ``f_max`` and ``f_min``.
    """
    f_max, f_min = params.f_max, params.f_min
    z = -x / params.omega_shape
    # 1 - (f_max/f_min) e^z with f_max/f_min < 0; guard exp overflow
    if z > 700:
        return f_min
    return f_min + (f_max - f_min) / (1.0 - (f_max / f_min) * math.exp(z))


def gradient_inner_product(prev: GradientSketch, cur: GradientSketch) -> float:
    """Trace inner product of two rank-one gradients without forming them."""
    if prev.gamma.shape != cur.gamma.shape or prev.weight.shape != cur.weight.shape:
        raise InputValidationError("gradient sketches have different shapes")
    return float(np.dot(prev.gamma, cur.gamma) * np.dot(prev.weight, cur.weight))


def next_mu_level(mu: float, level: int, inner: float, params: StepSizeParams) -> tuple[float, int]:
    """One multi-level transition of ``(mu, level)`` for a given inner product."""
    mu = max(mu + sigmoid(-inner, params), params.mu_min)
    if mu >= params.mu_max:
        level, mu = level + 1, params.mu_zero
    elif mu <= params.mu_min:
        level, mu = level - 1, params.mu_zero
    level = min(max(level, LEVEL_BOUNDS[0]), LEVEL_BOUNDS[1])
    return mu, level


def update_step(state: StepSizeState, cur: GradientSketch,
                params: StepSizeParams = StepSizeParams()) -> tuple[float, StepSizeState]:
    """Return ``(eta, new_state)``; the input state is not modified."""
    if params.rule == "diminishing":
        mu, level = float(state.t + 1), 0
    else:
        if state.has_prev:
            inner = gradient_inner_product(
                GradientSketch(state.prev_gamma, state.prev_weight, 0.0), cur
            )
        else:
            inner = 0.0
        mu, level = next_mu_level(state.mu, state.level, inner, params)
    eta = params.c_scale * 2.0 ** (-level) / (1.0 + mu)
    new_state = replace(
        state, mu=mu, level=level, prev_gamma=cur.gamma, prev_weight=cur.weight, t=state.t + 1
    )
    return eta, new_state
