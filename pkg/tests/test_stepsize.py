import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grasta.core import GradientSketch
from grasta.errors import InputValidationError
from grasta.stepsize import (
    StepSizeParams,
    StepSizeState,
    gradient_inner_product,
    next_mu_level,
    sigmoid,
    update_step,
)

P = StepSizeParams()


def scripted_trace(inner_products, mu0=3.0, c=1.0):
    """The multi-level rule written out line by line, independent of the package."""
    f_max, f_min, omega = 1.0, -1.0, 0.1
    mu_min, mu_max = 1.0, 15.0
    mu, level, out = mu0, 0, []
    for ip in inner_products:
        x = -ip
        sig = f_min + (f_max - f_min) / (1 - (f_max / f_min) * math.exp(-x / omega))
        mu = max(mu + sig, mu_min)
        if mu >= mu_max:
            level += 1
            mu = mu0
        elif mu <= mu_min:
            level -= 1
            mu = mu0
        out.append((mu, level, c * 2.0 ** (-level) / (1 + mu)))
    return out


def sketch(ip):
    # <prev, cur> = ip when prev = e1 e1^T and cur = ip e1 e1^T
    return GradientSketch(np.array([ip, 0.0]), np.array([1.0]), abs(ip))


def test_sigmoid_zero_and_limits():
    assert sigmoid(0.0) == 0.0
    assert sigmoid(100.0) == pytest.approx(1.0)
    assert sigmoid(-100.0) == pytest.approx(-1.0)
    assert sigmoid(-1e6) == -1.0
    for x in (-0.3, -0.01, 0.02, 0.5):
        assert sigmoid(x) == pytest.approx(math.tanh(x / 0.2), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_sigmoid_monotone_and_bounded(a, b):
    lo, hi = min(a, b), max(a, b)
    assert -1.0 <= sigmoid(lo) <= sigmoid(hi) <= 1.0


def test_trace_matches_hand_script_for_50_values():
    rng = np.random.default_rng(0)
    ips = np.concatenate([-np.abs(rng.normal(0.5, 0.3, 20)), np.abs(rng.normal(0.3, 0.2, 15)),
                          rng.normal(0.0, 0.2, 15)])
    expected = scripted_trace(ips)
    state = StepSizeState(mu=3.0, level=0, prev_gamma=np.array([1.0, 0.0]), prev_weight=np.array([1.0]))
    levels = set()
    for ip, (mu, level, eta) in zip(ips, expected):
        eta_pkg, state = update_step(state, sketch(ip), P)
        assert state.mu == mu and state.level == level and eta_pkg == eta
        assert P.mu_min <= state.mu <= P.mu_max
        levels.add(level)
        # keep the previous gradient at e1 e1^T so the next inner product is exactly ip
        state = StepSizeState(state.mu, state.level, np.array([1.0, 0.0]), np.array([1.0]), state.t)
    assert len(levels) > 2


def test_opposing_gradients_raise_level():
    mu, level = 3.0, 0
    for _ in range(12):
        mu, level = next_mu_level(mu, level, -10.0, P)
    assert level == 1 and mu == P.mu_zero


def test_aligned_gradients_lower_level():
    mu, level = next_mu_level(3.0, 0, 10.0, P)
    assert mu == 2.0 and level == 0
    mu, level = next_mu_level(mu, level, 10.0, P)
    assert level == -1 and mu == P.mu_zero


def test_first_step_uses_zero_inner_product():
    eta, state = update_step(StepSizeState.initial(P), sketch(5.0), P)
    assert state.mu == 3.0 and state.level == 0
    assert eta == pytest.approx(1.0 / 4.0)


def test_update_does_not_mutate_input():
    s0 = StepSizeState.initial(P)
    update_step(s0, sketch(1.0), P)
    assert s0 == StepSizeState.initial(P)


def test_diminishing_rule():
    params = StepSizeParams(rule="diminishing", c_scale=2.0)
    state = StepSizeState.initial(params)
    etas = []
    for _ in range(4):
        eta, state = update_step(state, sketch(-1.0), params)
        etas.append(eta)
    np.testing.assert_allclose(etas, [2 / 2, 2 / 3, 2 / 4, 2 / 5])


def test_inner_product_matches_dense():
    rng = np.random.default_rng(1)
    a = GradientSketch(rng.standard_normal(6), rng.standard_normal(2), 0.0)
    b = GradientSketch(rng.standard_normal(6), rng.standard_normal(2), 0.0)
    assert gradient_inner_product(a, b) == pytest.approx(np.sum(a.dense * b.dense))


def test_params_validation():
    with pytest.raises(InputValidationError):
        StepSizeParams(mu_zero=20.0)
    with pytest.raises(InputValidationError):
        StepSizeParams(rule="constant")
    with pytest.raises(InputValidationError):
        StepSizeParams(f_min=0.5)
