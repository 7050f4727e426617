"""Distributions induced on the simplex by Gaussian noise and invertible maps.

An IGR distribution draws y ~ N(mu, diag(sigma^2)) in R^(K-1) and pushes it
through one of the invertible simplex maps; its density at z is the Gaussian
density of the pre-image minus the log-Jacobian, both exact.  The
Gumbel-Softmax distribution is included with its closed-form density as the
comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from . import transforms as tf
from .errors import ContractViolationError, DomainError, InvalidInputError

_LOG_2PI = float(np.log(2.0 * np.pi))


def _check_pos_vec(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} must be finite")
    if not np.all(x > 0.0):
        raise InvalidInputError(f"{name} must be strictly positive")
    return x


@dataclass(frozen=True)
class GaussianDiag:
    """Diagonal Gaussian with standard-deviation vector std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = _check_pos_vec(self.std, "std")
        if mean.shape != std.shape:
            raise InvalidInputError("mean and std must share a shape")
        if not np.all(np.isfinite(mean)):
            raise InvalidInputError("mean must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def log_pdf(self, y):
        y = np.asarray(y, dtype=float)
        q = (y - self.mean) / self.std
        return -0.5 * (q * q).sum(axis=-1) - np.log(self.std).sum() - 0.5 * self.mean.size * _LOG_2PI

    def kl(self, other: "GaussianDiag") -> float:
        """KL(self || other), the standard closed form per coordinate."""
        if self.mean.shape != other.mean.shape:
            raise InvalidInputError("KL needs matching dimensions")
        r = self.std / other.std
        d = (self.mean - other.mean) / other.std
        return float(np.sum(np.log(other.std) - np.log(self.std) + 0.5 * (r * r + d * d) - 0.5))


@dataclass(frozen=True)
class IgrParams:
    """Parameters of one IGR distribution: location, scale, temperature, map."""

    mu: np.ndarray
    sigma: np.ndarray
    tau: float
    spec: tf.TransformSpec

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = _check_pos_vec(self.sigma, "sigma")
        if mu.shape != sigma.shape:
            raise InvalidInputError("mu and sigma must share a shape")
        if not np.all(np.isfinite(mu)):
            raise InvalidInputError("mu must be finite")
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise InvalidInputError("tau must be finite and > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def k(self) -> int:
        return self.mu.size + 1

    def gaussian(self) -> GaussianDiag:
        return GaussianDiag(self.mu, self.sigma)

    def to_json(self) -> dict:
        out = self.spec.to_json()
        return {
            "kind": out["kind"],
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "tau": self.tau,
            "delta": out["delta"],
            "flow_params": out["flow_params"],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IgrParams":
        spec = tf.TransformSpec.from_json(obj)
        return cls(
            mu=np.asarray(obj["mu"], float),
            sigma=np.asarray(obj["sigma"], float),
            tau=float(obj["tau"]),
            spec=spec,
        )


@dataclass(frozen=True)
class SampleTrace:
    """One draw with every intermediate needed for densities and gradients."""

    epsilon: np.ndarray
    y: np.ndarray
    w: Optional[np.ndarray]
    z: tf.SimplexInterior
    log_det_jac: float
    params: IgrParams


class BatchSamples(NamedTuple):
    """Vectorized draws; arrays have shape (size, n) and (size,)."""

    epsilon: np.ndarray
    y: np.ndarray
    w: Optional[np.ndarray]
    z: np.ndarray
    log_det_jac: np.ndarray


def igr_sample(params: IgrParams, rng: np.random.Generator) -> SampleTrace:
    """Draw eps ~ N(0, I), set y = mu + sigma * eps, and push through the map."""
    eps = rng.standard_normal(params.n)
    y = params.mu + params.sigma * eps
    res = tf.forward(params.spec, y, params.tau)
    return SampleTrace(
        epsilon=eps,
        y=y,
        w=res.w,
        z=tf.SimplexInterior(res.z),
        log_det_jac=float(res.log_det_jac),
        params=params,
    )


def igr_sample_batch(params: IgrParams, rng: np.random.Generator, size: int) -> BatchSamples:
    """Vectorized sampling; one rng draw of shape (size, n)."""
    eps = rng.standard_normal((int(size), params.n))
    y = params.mu + params.sigma * eps
    res = tf.forward(params.spec, y, params.tau)
    return BatchSamples(eps, y, res.w, res.z, np.asarray(res.log_det_jac, dtype=float))


def _inverse_masked(spec, Z, tau):
    """Batched inverse returning (Y, valid); invalid rows are outside the image."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m, n = Z.shape
    valid = np.all(np.isfinite(Z), axis=-1) & np.all(Z > 0.0, axis=-1)
    rowsum = Z.sum(axis=-1)
    valid &= rowsum < 1.0
    Y = np.full((m, n), np.nan)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if spec.kind in (tf.SOFTMAX_PP, tf.PLANAR_SOFTMAX_PP, tf.SB_SOFTMAX_PP):
            rem = 1.0 - rowsum[:, None]
            w = tau * (np.log(spec.delta * Z) - np.log(rem))
            if spec.kind == tf.SOFTMAX_PP:
                Y[valid] = w[valid]
                return Y, valid
            if spec.kind == tf.PLANAR_SOFTMAX_PP:
                ok = valid
                if ok.any():
                    Y[ok] = tf.planar_inverse(spec.layers, w[ok])
                return Y, valid
        elif spec.kind == tf.SB_INTERP:
            hot = tf._nearest_vertex(Z)[1]
            w = (Z - (1.0 - tau) * hot) / tau
        else:
            w = Z
        # Stick-breaking stage: w itself must be strictly interior.
        valid &= np.all(w > 0.0, axis=-1) & (w.sum(axis=-1) < 1.0)
        head = np.cumsum(w, axis=-1)
        avail = np.ones_like(w)
        avail[:, 1:] = 1.0 - head[:, :-1]
        u = np.clip(w / avail, tf.SIGMOID_CLIP, 1.0 - tf.SIGMOID_CLIP)
        logit = np.log(u) - np.log1p(-u)
        Y[valid] = logit[valid]
    return Y, valid


def igr_log_density(params: IgrParams, z) -> float:
    """Exact log density at z: Gaussian log pdf of the pre-image minus
    the chain log-Jacobian evaluated there."""
    if isinstance(z, tf.SimplexInterior):
        z = z.coords
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size != params.n:
        raise InvalidInputError("z has the wrong dimension for these parameters")
    val = float(log_density_batch(params, z[None, :])[0])
    if val == -np.inf:
        raise DomainError("z is outside the image of the transform")
    return val


def log_density_batch(params: IgrParams, Z) -> np.ndarray:
    """Vectorized log density; points outside the image get -inf."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y, valid = _inverse_masked(params.spec, Z, params.tau)
    out = np.full(Z.shape[0], -np.inf)
    if valid.any():
        Yv = Y[valid]
        spec = params.spec
        if spec.kind == tf.SOFTMAX_PP:
            ld = tf.softmax_pp_logdet(Yv, params.tau, spec.delta)
        elif spec.kind == tf.PLANAR_SOFTMAX_PP:
            h, ld_planar = tf.planar_forward(spec.layers, Yv)
            ld = ld_planar + tf.softmax_pp_logdet(h, params.tau, spec.delta)
        else:
            ld = tf.sb_chain_logdet(Yv, params.tau, spec)
        out[valid] = params.gaussian().log_pdf(Yv) - ld
    return out


def igr_kl_closed(p: IgrParams, q: IgrParams) -> float:
    """KL(p || q) in closed form.

    Valid only when both distributions share the transform spec and the
    temperature; the Jacobian terms then cancel and the KL reduces to the
    diagonal-Gaussian KL of the underlying noise distributions.
    """
    if p.spec != q.spec:
        raise ContractViolationError("closed-form KL needs identical transform specs")
    if p.tau != q.tau:
        raise ContractViolationError("closed-form KL needs identical temperatures")
    if p.n != q.n:
        raise ContractViolationError("closed-form KL needs matching dimensions")
    return p.gaussian().kl(q.gaussian())


def igr_kl_mc(p: IgrParams, q: IgrParams, n_samples: int, rng: np.random.Generator):
    """Monte Carlo KL(p || q) via density evaluations on draws from p.

    Returns (estimate, standard_error).  Works across different specs and
    temperatures; the estimate is +inf when q's support misses p's draws.
    """
    if p.n != q.n:
        raise ContractViolationError("KL needs matching dimensions")
    batch = igr_sample_batch(p, rng, n_samples)
    logp = log_density_batch(p, batch.z)
    logq = log_density_batch(q, batch.z)
    diff = logp - logq
    if not np.all(np.isfinite(diff)):
        return float("inf"), float("inf")
    est = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(n_samples))
    return est, se


# ---------------------------------------------------------------------------
# Gumbel-Softmax baseline


@dataclass(frozen=True)
class GsParams:
    """Gumbel-Softmax parameters: positive weights alpha and temperature."""

    alpha: np.ndarray
    tau: float

    def __post_init__(self):
        alpha = _check_pos_vec(self.alpha, "alpha")
        if alpha.size < 2:
            raise InvalidInputError("alpha needs at least two categories")
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise InvalidInputError("tau must be finite and > 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def k(self) -> int:
        return self.alpha.size

    def to_json(self) -> dict:
        return {"alpha": self.alpha.tolist(), "tau": self.tau}

    @classmethod
    def from_json(cls, obj: dict) -> "GsParams":
        return cls(alpha=np.asarray(obj["alpha"], float), tau=float(obj["tau"]))


def _gumbel(rng, shape):
    u = np.clip(rng.random(shape), 1e-300, 1.0 - 1e-16)
    return -np.log(-np.log(u))


def gs_sample(params: GsParams, rng: np.random.Generator) -> np.ndarray:
    """One draw: softmax((gumbel + log alpha) / tau), computed in log space."""
    return gs_sample_batch(params, rng, 1)[0]


def gs_sample_batch(params: GsParams, rng: np.random.Generator, size: int) -> np.ndarray:
    eps = _gumbel(rng, (int(size), params.k))
    a = (eps + np.log(params.alpha)) / params.tau
    logz = a - logsumexp(a, axis=-1, keepdims=True)
    return np.exp(logz)


def gs_log_density(params: GsParams, z) -> float:
    """Closed-form density of the Gumbel-Softmax on the simplex.

    log q(z) = log (K-1)! + (K-1) log tau
             + sum_k [log alpha_k - (tau + 1) log z_k]
             - K * logsumexp_k (log alpha_k - tau * log z_k)
    """
    vals = gs_log_density_batch(params, np.atleast_2d(np.asarray(z, dtype=float)))
    return float(vals[0])


def gs_log_density_batch(params: GsParams, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    k = params.k
    if Z.shape[-1] != k:
        raise InvalidInputError("z has the wrong number of categories")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("z must be finite")
    if not np.all(Z > 0.0):
        raise DomainError("z must be strictly positive")
    if np.any(np.abs(Z.sum(axis=-1) - 1.0) > 1e-9):
        raise DomainError("z must sum to 1")
    from scipy.special import gammaln

    log_alpha = np.log(params.alpha)
    log_z = np.log(Z)
    lse = logsumexp(log_alpha - params.tau * log_z, axis=-1)
    return (
        gammaln(k)
        + (k - 1) * np.log(params.tau)
        + (log_alpha - (params.tau + 1.0) * log_z).sum(axis=-1)
        - k * lse
    )
