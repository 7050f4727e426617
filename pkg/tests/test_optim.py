import numpy as np
import pytest

from igr import optim
from igr.errors import InvalidInputError


def _reference_adam(params, grad_fn, lr, steps):
    """Straightforward re-implementation used as the oracle."""
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    b1, b2, eps = 0.9, 0.999, 1e-8
    x = params.copy()
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_adam_init_validates_lr():
    with pytest.raises(InvalidInputError):
        optim.adam_init(3, 0.0)
    with pytest.raises(InvalidInputError):
        optim.adam_init(3, float("nan"))
    state = optim.adam_init(3, 0.01)
    assert state.step == 0 and state.m.shape == (3,)


def test_zero_gradient_leaves_params_unchanged():
    state = optim.adam_init(2, 0.1)
    params = np.array([1.0, -2.0])
    new_params, new_state = optim.adam_step(state, params, np.zeros(2))
    np.testing.assert_array_equal(new_params, params)
    assert new_state.step == 1


def test_first_step_is_lr_times_sign():
    state = optim.adam_init(3, 0.05)
    params = np.zeros(3)
    grads = np.array([3.0, -0.7, 1e-4])
    new_params, _ = optim.adam_step(state, params, grads)
    np.testing.assert_allclose(new_params, -0.05 * np.sign(grads), rtol=1e-3)


def test_trajectory_matches_reference_on_quadratic():
    lr, steps = 0.01, 50
    x0 = np.array([1.5, -2.0, 0.3])
    grad = lambda x: 2.0 * x
    expect = _reference_adam(x0, grad, lr, steps)
    state = optim.adam_init(3, lr)
    x = x0.copy()
    for _ in range(steps):
        x, state = optim.adam_step(state, x, grad(x))
    np.testing.assert_allclose(x, expect, rtol=1e-12)
    assert state.step == steps


def test_quadratic_bowl_converges():
    # Adam's early steps move by roughly lr per step regardless of gradient
    # magnitude, so from x0 the first ~x0/lr steps are spent travelling; with
    # lr=3e-4 and 2000 steps a start of 0.1 leaves ample time to settle.
    lr, steps = 3e-4, 2000
    state = optim.adam_init(1, lr)
    x = np.array([0.1])
    for _ in range(steps):
        x, state = optim.adam_step(state, x, 2.0 * x)
    assert abs(float(x[0])) < 1e-4


def test_nonfinite_gradient_rejected():
    state = optim.adam_init(2, 0.1)
    params = np.array([1.0, 2.0])
    new_params, new_state = optim.adam_step(state, params, np.array([np.nan, 0.0]))
    np.testing.assert_array_equal(new_params, params)
    assert new_state.step == 0
    assert new_state.rejected == 1
    np.testing.assert_array_equal(new_state.m, 0.0)


def test_shape_mismatch_rejected():
    state = optim.adam_init(2, 0.1)
    with pytest.raises(InvalidInputError):
        optim.adam_step(state, np.zeros(3), np.zeros(3))


def test_adam_grow_preserves_moments():
    state = optim.adam_init(2, 0.1)
    params = np.array([1.0, -1.0])
    params, state = optim.adam_step(state, params, np.array([0.5, -0.5]))
    grown = optim.adam_grow(state, 4)
    assert grown.m.shape == (4,)
    np.testing.assert_array_equal(grown.m[:2], state.m)
    np.testing.assert_array_equal(grown.m[2:], 0.0)
    np.testing.assert_array_equal(grown.v[2:], 0.0)
    assert grown.step == state.step
    # growing to a smaller or equal size is a no-op
    assert optim.adam_grow(state, 2) is state


def test_growing_mid_run_uses_shared_step_count():
    # a coordinate added mid-run starts with zero moments but shares the
    # global step count, so its first update is damped by the ratio of the
    # two bias corrections rather than being a full lr * sign(g) step
    lr = 0.02
    state = optim.adam_init(1, lr)
    x = np.array([0.5])
    for _ in range(3):
        x, state = optim.adam_step(state, x, 2.0 * x)
    state = optim.adam_grow(state, 2)
    x = np.append(x, 1.0)
    g = 4.0
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m_hat = (1 - b1) * g / (1 - b1**t)
    v_hat = (1 - b2) * g * g / (1 - b2**t)
    expect = 1.0 - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    x, state = optim.adam_step(state, x, np.array([0.0, g]))
    np.testing.assert_allclose(x[1], expect, rtol=1e-12)
