"""Gradient estimators for expectations of functions of relaxed samples.

The pathwise (reparameterization) estimator differentiates through the
sampling map with the hand-derived pullbacks; the score-function estimator
is the classical REINFORCE form for an exact categorical, kept here as the
high-variance reference point.  The moment-matching loss is the workhorse
objective for fitting a relaxation to a target pmf.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from . import distributions as dist
from . import transforms as tf
from .errors import ContractViolationError, InvalidInputError


@dataclass(frozen=True)
class Objective:
    """A function of the completed probability vector, with an optional
    discrete restriction f(k) = relaxed(e_k) used by the score estimator.

    relaxed must be finite on the closed simplex; relaxed_grad, when given,
    returns d relaxed / d z at a completed vector and skips the finite
    difference fallback.
    """

    relaxed: Callable[[np.ndarray], float]
    discrete: Optional[Callable[[int], float]] = None
    relaxed_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def vertex_gap(self, k: int) -> float:
        """Worst |relaxed(e_j) - discrete(j)| over the K vertices."""
        if self.discrete is None:
            raise ContractViolationError("objective has no discrete restriction")
        worst = 0.0
        for j in range(k):
            e = np.zeros(k)
            e[j] = 1.0
            worst = max(worst, abs(float(self.relaxed(e)) - float(self.discrete(j))))
        return worst


def _objective_grad(obj: Objective, zc: np.ndarray, h_scale=1e-5) -> np.ndarray:
    """Gradient of obj.relaxed at each row of zc, analytic or by central
    differences in the ambient coordinates."""
    if obj.relaxed_grad is not None:
        return np.stack([np.asarray(obj.relaxed_grad(row), dtype=float) for row in zc])
    out = np.empty_like(zc)
    k = zc.shape[-1]
    for i, row in enumerate(zc):
        h = h_scale * (1.0 + np.abs(row))
        for j in range(k):
            up = row.copy()
            dn = row.copy()
            up[j] += h[j]
            dn[j] -= h[j]
            out[i, j] = (float(obj.relaxed(up)) - float(obj.relaxed(dn))) / (2.0 * h[j])
    return out


def reparam_grad(
    params: dist.IgrParams, obj: Objective, batch: int, rng: np.random.Generator
):
    """Pathwise gradient of E[obj.relaxed(completed(z))] w.r.t. (mu, sigma).

    Averages the pullback of the objective gradient through the sampling
    map over `batch` draws; returns (grad_mu, grad_sigma).
    """
    samples = dist.igr_sample_batch(params, rng, batch)
    zc = tf.completed(samples.z)
    g_full = _objective_grad(obj, zc)
    cot = tf.completed_vjp(g_full)
    gy = tf.pullback(params.spec, samples.y, params.tau, cot)
    return gy.mean(axis=0), (gy * samples.epsilon).mean(axis=0)


def score_grad(logits, obj: Objective, batch: int, rng: np.random.Generator):
    """REINFORCE gradient of E[f(H)] for H ~ categorical(softmax(logits)).

    grad = mean_b f(h_b) * (onehot(h_b) - softmax(logits)).
    """
    if obj.discrete is None:
        raise ContractViolationError("score estimator needs a discrete objective")
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1 or logits.size < 2:
        raise InvalidInputError("logits must be a 1-D vector of length >= 2")
    p = np.exp(logits - logsumexp(logits))
    idx = rng.choice(logits.size, size=int(batch), p=p)
    f = np.asarray([float(obj.discrete(int(h))) for h in idx])
    hot = np.zeros((int(batch), logits.size))
    hot[np.arange(int(batch)), idx] = 1.0
    return (f[:, None] * (hot - p)).mean(axis=0)


# ---------------------------------------------------------------------------
# Moment matching


def _check_target(target, k):
    # A deficient target (sum < 1) is allowed: when the model's support is
    # shorter than the target's, the unmodeled mass is constant in the loss.
    target = np.asarray(target, dtype=float)
    if target.shape != (k,):
        raise InvalidInputError(f"target must have length {k}")
    if np.any(target < 0.0) or target.sum() > 1.0 + 1e-6:
        raise InvalidInputError("target must be a (sub-)probability vector")
    return target


def mm_loss_and_grad(mu, sigma, tau, spec, target, eps):
    """Mean squared distance between completed samples and the target pmf,
    with its exact gradient, for a frozen noise batch eps of shape (B, n).

    Returns (loss, grad_mu, grad_sigma).  Freezing the noise makes the pair
    finite-difference consistent, which is how it is verified.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    n = mu.size
    target = _check_target(target, n + 1)
    y = mu + sigma * eps
    z = tf.forward(spec, y, tau).z
    diff = tf.completed(z) - target
    loss = float((diff * diff).sum(axis=-1).mean())
    cot = tf.completed_vjp(2.0 * diff)
    gy = tf.pullback(spec, y, tau, cot)
    return loss, gy.mean(axis=0), (gy * eps).mean(axis=0)


def moment_match_loss(
    params: dist.IgrParams, target, batch: int, rng: np.random.Generator
) -> float:
    """Monte Carlo moment-matching loss E ||completed(z) - target||^2."""
    eps = rng.standard_normal((int(batch), params.n))
    loss, _, _ = mm_loss_and_grad(
        params.mu, params.sigma, params.tau, params.spec, target, eps
    )
    return loss


# ---------------------------------------------------------------------------
# Gumbel-Softmax pathwise helpers (eta = log alpha)


def gs_path(eta, eps, tau):
    """Sampler path z = softmax((eps + eta) / tau) for fixed Gumbel noise."""
    a = (np.asarray(eps, dtype=float) + np.asarray(eta, dtype=float)) / tau
    return np.exp(a - logsumexp(a, axis=-1, keepdims=True))


def gs_path_vjp(eta, eps, tau, cotangent):
    """Pullback of gs_path at eta: (z * g - z (z . g)) / tau."""
    z = gs_path(eta, eps, tau)
    g = np.asarray(cotangent, dtype=float)
    zg = (z * g).sum(axis=-1, keepdims=True)
    return (z * g - z * zg) / tau


def gs_loss_and_grad(eta, tau, target, eps):
    """Moment-matching loss and gradient for the Gumbel-Softmax baseline,
    with frozen Gumbel noise eps of shape (B, K)."""
    eta = np.asarray(eta, dtype=float)
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    target = _check_target(target, eta.size)
    z = gs_path(eta, eps, tau)
    diff = z - target
    loss = float((diff * diff).sum(axis=-1).mean())
    geta = gs_path_vjp(eta, eps, tau, 2.0 * diff)
    return loss, geta.mean(axis=0)
