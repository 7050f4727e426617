"""Recovering discrete distributions from relaxed samples and parameters.

A relaxed sample z concentrates on a vertex as the temperature drops; the
category it points at is read off without sampling noise by discretize, and
category probabilities are recovered either by Monte Carlo frequencies or,
for the softmax++ map, by exact one-dimensional orthant integrals evaluated
with Gauss-Legendre quadrature.  The quadrature probabilities are smooth in
(mu, sigma) and ship with an analytic pullback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_ndtr, roots_legendre

from . import distributions as dist
from . import transforms as tf
from .errors import InvalidInputError

log = logging.getLogger(__name__)

FINITE = "finite"
TRUNCATED_INFINITE = "truncated-infinite"

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))

# Two 64-node Gauss-Legendre panels on the truncated interval; one panel
# leaves ~2e-5 mass errors at the corner of the clamped parameter box.
_QUAD_NODES = 64
_QUAD_PANELS = 2


@dataclass(frozen=True)
class DiscretePmf:
    """A pmf over categories 0..K-1, plus lumped tail mass for truncated
    supports."""

    probs: np.ndarray
    tail_mass: float = 0.0
    kind: str = FINITE

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidInputError("probs must be a non-empty 1-D vector")
        if not np.all(np.isfinite(p)) or not np.isfinite(self.tail_mass):
            raise InvalidInputError("probabilities must be finite")
        if np.any(p < 0.0) or self.tail_mass < 0.0:
            raise InvalidInputError("probabilities must be nonnegative")
        total = p.sum() + self.tail_mass
        if abs(total - 1.0) > 2e-6:
            raise InvalidInputError(f"probabilities sum to {total}, not 1")
        if self.kind not in (FINITE, TRUNCATED_INFINITE):
            raise InvalidInputError(f"unknown support kind: {self.kind!r}")
        if self.kind == FINITE and self.tail_mass != 0.0:
            raise InvalidInputError("finite support cannot carry tail mass")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @property
    def k(self) -> int:
        return self.probs.size

    def to_json(self) -> dict:
        return {"probs": self.probs.tolist(), "tail_mass": self.tail_mass}

    @classmethod
    def from_json(cls, obj: dict) -> "DiscretePmf":
        tail = float(obj.get("tail_mass", 0.0))
        kind = TRUNCATED_INFINITE if tail > 0.0 else FINITE
        return cls(np.asarray(obj["probs"], float), tail, kind)


class McRecovery(NamedTuple):
    pmf: DiscretePmf
    std_error: np.ndarray


def hard_limit(y) -> int:
    """Category selected in the zero-temperature limit of softmax++.

    Returns argmax_k y_k when the maximum is positive, otherwise the
    remainder category len(y) (the delta term wins every coordinate).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise InvalidInputError("y must be a non-empty 1-D vector")
    m = int(np.argmax(y))
    return m if y[m] > 0.0 else y.size


def discretize(z, delta=1.0):
    """Zero-temperature category of a relaxed point, without inverting.

    Equivalent to hard_limit(inverse(z)) for softmax++: category
    argmax_k z_k when max_k z_k > remainder / delta, else the remainder
    category n.  With delta = 1 this is the argmax of the completed vector.
    Accepts a batch (..., n) and then returns an integer array.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    rem = 1.0 - Z.sum(axis=-1)
    arg = np.argmax(Z, axis=-1)
    best = np.take_along_axis(Z, arg[:, None], axis=-1)[:, 0]
    idx = np.where(best > rem / delta, arg, Z.shape[-1])
    return int(idx[0]) if single else idx


def recover_pmf_mc(params: dist.IgrParams, n_samples: int, rng: np.random.Generator) -> McRecovery:
    """Empirical category frequencies of discretized draws, with binomial
    standard errors per category."""
    batch = dist.igr_sample_batch(params, rng, n_samples)
    idx = discretize(batch.z, params.spec.delta)
    counts = np.bincount(idx, minlength=params.k)
    probs = counts / float(n_samples)
    se = np.sqrt(probs * (1.0 - probs) / n_samples)
    return McRecovery(DiscretePmf(probs), se)


@lru_cache(maxsize=None)
def _panel_rule(n_nodes, n_panels):
    x, w = roots_legendre(n_nodes)
    return x, w, n_panels


def quad_probs_raw(mu, sigma) -> np.ndarray:
    """Orthant probabilities of the zero-temperature softmax++ limit.

    P(H = k) = int_0^inf (1/sigma_k) phi((t - mu_k)/sigma_k)
               prod_{j != k} Phi((t - mu_j)/sigma_j) dt
    P(H = K) = prod_j Phi(-mu_j / sigma_j)

    evaluated by composite Gauss-Legendre on [0, max mu + 10 max sigma].
    No renormalization is applied here.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != sigma.shape or mu.ndim != 1:
        raise InvalidInputError("mu and sigma must be matching 1-D vectors")
    if not np.all(sigma > 0.0):
        raise InvalidInputError("sigma must be strictly positive")
    t, wt = _quad_grid(mu, sigma)
    d = (t[:, None] - mu) / sigma
    L = log_ndtr(d)
    S = L.sum(axis=1)
    phi = np.exp(-0.5 * d * d) / _SQRT_2PI
    m = mu.size
    probs = np.empty(m + 1)
    for k in range(m):
        probs[k] = np.sum(wt * (phi[:, k] / sigma[k]) * np.exp(S - L[:, k]))
    probs[m] = float(np.exp(log_ndtr(-mu / sigma).sum()))
    return probs


def _quad_grid(mu, sigma):
    b = max(float(mu.max() + 10.0 * sigma.max()), 0.0)
    x, w, n_panels = _panel_rule(_QUAD_NODES, _QUAD_PANELS)
    edges = np.linspace(0.0, b, n_panels + 1)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        ts.append(half * (x + 1.0) + lo)
        ws.append(w * half)
    return np.concatenate(ts), np.concatenate(ws)


def recover_pmf_quad(mu, sigma) -> DiscretePmf:
    """Quadrature recovery of the discretized pmf for the softmax++ map.

    Renormalizes (and warns) only when the raw probabilities miss 1 by more
    than 1e-6, which does not happen on the clamped parameter ranges.
    """
    probs = quad_probs_raw(mu, sigma)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        log.warning("quadrature pmf sums to %.9f; renormalizing", total)
        probs = probs / total
    return DiscretePmf(probs)


def quad_pmf_jacobian(mu, sigma) -> np.ndarray:
    """d probs / d (mu, sigma), shape (K, 2m), by differentiating the
    integrand at the fixed quadrature nodes."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = mu.size
    t, wt = _quad_grid(mu, sigma)
    d = (t[:, None] - mu) / sigma
    L = log_ndtr(d)
    S = L.sum(axis=1)
    phi = np.exp(-0.5 * d * d) / _SQRT_2PI
    jac = np.zeros((m + 1, 2 * m))
    for k in range(m):
        base = wt * (phi[:, k] / sigma[k])
        E_k = np.exp(S - L[:, k])
        jac[k, k] = np.sum(base * E_k * (d[:, k] / sigma[k]))
        jac[k, m + k] = np.sum(base * E_k * ((d[:, k] ** 2 - 1.0) / sigma[k]))
        for j in range(m):
            if j == k:
                continue
            E_kj = np.exp(S - L[:, k] - L[:, j])
            common = base * E_kj * phi[:, j] / sigma[j]
            jac[k, j] = -np.sum(common)
            jac[k, m + j] = -np.sum(common * d[:, j])
    e = -mu / sigma
    Ltail = log_ndtr(e)
    Stail = Ltail.sum()
    phi_e = np.exp(-0.5 * e * e) / _SQRT_2PI
    rest = np.exp(Stail - Ltail)
    jac[m, :m] = -rest * phi_e / sigma
    jac[m, m:] = rest * phi_e * mu / (sigma * sigma)
    return jac


def quad_pmf_vjp(mu, sigma, cotangent):
    """Pullback of the raw quadrature probabilities: returns (dmu, dsigma)."""
    jac = quad_pmf_jacobian(mu, sigma)
    g = np.asarray(cotangent, dtype=float)
    packed = jac.T @ g
    m = np.asarray(mu).size
    return packed[:m], packed[m:]


def straight_through(trace: dist.SampleTrace):
    """Hard one-hot forward value with the relaxed completed vector as the
    gradient surrogate.

    Returns (hard, surrogate); downstream gradients flow through the
    surrogate by way of transforms.pullback on the owning trace.
    """
    z = trace.z.coords
    idx = discretize(z, trace.params.spec.delta)
    hard = np.zeros(z.size + 1)
    hard[idx] = 1.0
    return hard, tf.completed(z)


def clamp_params(mu_raw, sigma_raw):
    """Map unconstrained parameters into the quadrature-safe box:
    mu = -5 tanh(mu_raw) in (-5, 5), sigma = 0.5 + 2 sigmoid(sigma_raw)
    in (0.5, 2.5)."""
    mu_raw = np.asarray(mu_raw, dtype=float)
    sigma_raw = np.asarray(sigma_raw, dtype=float)
    return -5.0 * np.tanh(mu_raw), 0.5 + 2.0 * expit(sigma_raw)


def clamp_params_vjp(mu_raw, sigma_raw, cot_mu, cot_sigma):
    """Pullback of clamp_params; returns (dmu_raw, dsigma_raw)."""
    mu_raw = np.asarray(mu_raw, dtype=float)
    sigma_raw = np.asarray(sigma_raw, dtype=float)
    th = np.tanh(mu_raw)
    s = expit(sigma_raw)
    dmu = np.asarray(cot_mu, float) * (-5.0) * (1.0 - th * th)
    dsig = np.asarray(cot_sigma, float) * 2.0 * s * (1.0 - s)
    return dmu, dsig


def recover_pmf_gs(params: dist.GsParams, n_samples: int, rng: np.random.Generator) -> McRecovery:
    """Monte Carlo recovery for the Gumbel-Softmax baseline: argmax
    frequencies of sampled vectors."""
    Z = dist.gs_sample_batch(params, rng, n_samples)
    idx = np.argmax(Z, axis=-1)
    counts = np.bincount(idx, minlength=params.k)
    probs = counts / float(n_samples)
    se = np.sqrt(probs * (1.0 - probs) / n_samples)
    return McRecovery(DiscretePmf(probs), se)
