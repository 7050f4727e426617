"""Adam with bias correction, as a pure step function on flat arrays.

Positivity of scale parameters is the caller's concern: optimize xi = log
sigma (or a clamped parameterization) and transform gradients accordingly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rejected: int = 0


def adam_init(n_params: int, lr: float) -> AdamState:
    if not (np.isfinite(lr) and lr > 0.0):
        raise InvalidInputError("learning rate must be finite and > 0")
    return AdamState(step=0, m=np.zeros(n_params), v=np.zeros(n_params), lr=float(lr))


def adam_grow(state: AdamState, n_params: int) -> AdamState:
    """Extend moment arrays with zeros when the parameter vector grows."""
    extra = n_params - state.m.size
    if extra <= 0:
        return state
    return replace(
        state,
        m=np.concatenate([state.m, np.zeros(extra)]),
        v=np.concatenate([state.v, np.zeros(extra)]),
    )


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray):
    """One bias-corrected Adam update; returns (new_params, new_state).

    A non-finite gradient rejects the step: parameters and moments are left
    untouched and the rejection is counted and logged.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise InvalidInputError("params, grads, and state must share a shape")
    if not np.all(np.isfinite(grads)):
        log.warning("rejecting Adam step %d: non-finite gradient", state.step + 1)
        return params, replace(state, rejected=state.rejected + 1)
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, step=t, m=m, v=v)
