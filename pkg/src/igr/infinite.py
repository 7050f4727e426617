"""Distributions over countably infinite categories via lazy truncation.

A stick-breaking chain orders the categories, so the cumulative completed
mass of a draw is monotone in the number of materialized coordinates.  Each
draw therefore extends itself lazily, one coordinate at a time in coordinate
order, until the cumulative mass of the transformed sample exceeds rho; the
number of coordinates it needed is its truncation level k_used.  Parameters
materialize on demand at mu = 0, sigma = 1 and keep their high-water mark.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logsumexp

from . import distributions as dist
from . import transforms as tf
from .errors import InvalidInputError, RunawayTruncationError

HARD_CAP = 10_000


class GrowableIgrParams:
    """IGR parameters over an unbounded category index.

    Only spec kinds with a stick-breaking stage are allowed, because the
    stopping rule needs cumulative completed mass to grow monotonically with
    the materialized prefix.
    """

    def __init__(self, tau, rho, spec=None, mu=(), sigma=(), cap=HARD_CAP):
        if spec is None:
            spec = tf.TransformSpec(tf.SB_SOFTMAX_PP)
        if spec.kind not in (tf.SB_SOFTMAX_PP, tf.SB_IDENTITY):
            raise InvalidInputError("infinite support needs a stick-breaking spec")
        if not (np.isfinite(tau) and tau > 0.0):
            raise InvalidInputError("tau must be finite and > 0")
        if not (0.0 < rho < 1.0):
            raise InvalidInputError("rho must lie in (0, 1)")
        self.tau = float(tau)
        self.rho = float(rho)
        self.spec = spec
        self.cap = int(cap)
        self.mu = np.asarray(mu, dtype=float).copy()
        self.sigma = np.asarray(sigma, dtype=float).copy()
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise InvalidInputError("mu and sigma must be matching 1-D vectors")
        if self.mu.size and not (np.all(np.isfinite(self.mu)) and np.all(self.sigma > 0.0)):
            raise InvalidInputError("mu must be finite and sigma positive")

    @property
    def high_water(self) -> int:
        return self.mu.size

    def materialize(self, m: int) -> None:
        """Grow the parameter arrays to length m with default entries."""
        cur = self.mu.size
        if m <= cur:
            return
        self.mu = np.concatenate([self.mu, np.zeros(m - cur)])
        self.sigma = np.concatenate([self.sigma, np.ones(m - cur)])

    def prefix(self, k: int) -> dist.IgrParams:
        """Finite-dimensional view of the first k coordinates."""
        self.materialize(k)
        return dist.IgrParams(self.mu[:k].copy(), self.sigma[:k].copy(), self.tau, self.spec)

    def to_json(self) -> dict:
        return {
            "kind": self.spec.kind,
            "delta": self.spec.delta,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "tau": self.tau,
            "rho": self.rho,
            "high_water": self.high_water,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GrowableIgrParams":
        spec = tf.TransformSpec(kind=obj["kind"], delta=float(obj.get("delta", 1.0)))
        return cls(
            tau=float(obj["tau"]),
            rho=float(obj["rho"]),
            spec=spec,
            mu=np.asarray(obj["mu"], float),
            sigma=np.asarray(obj["sigma"], float),
        )


@dataclass(frozen=True)
class TruncatedTrace:
    """A lazily truncated draw; the trace holds the k_used materialized
    coordinates."""

    k_used: int
    trace: dist.SampleTrace


def gradient_coords(trace: TruncatedTrace) -> range:
    """Coordinates that receive gradient from this draw: 0..k_used-1."""
    return range(trace.k_used)


def sample_truncated(params: GrowableIgrParams, rng: np.random.Generator) -> TruncatedTrace:
    """One lazy draw; consumes exactly one normal variate per materialized
    coordinate, in coordinate order."""
    eps, y, u, w = [], [], [], []
    log_keep = 0.0  # log prod (1 - u_i) so far
    cum = 0.0  # sb-identity cumulative mass, accumulated like np.cumsum
    log_s = -np.inf  # log sum exp(w_j / tau) for the softmax++ stopping rule
    tau = params.tau
    softpp = params.spec.kind == tf.SB_SOFTMAX_PP
    k = 0
    while True:
        if k >= params.cap:
            raise RunawayTruncationError(
                f"needed more than {params.cap} coordinates to reach rho={params.rho}"
            )
        params.materialize(k + 1)
        e = rng.standard_normal()
        yk = params.mu[k] + params.sigma[k] * e
        uk = float(np.clip(expit(yk), tf.SIGMOID_CLIP, 1.0 - tf.SIGMOID_CLIP))
        wk = uk * np.exp(log_keep)
        eps.append(e)
        y.append(yk)
        u.append(uk)
        w.append(wk)
        log_keep += np.log1p(-uk)
        k += 1
        if softpp:
            log_s = np.logaddexp(log_s, wk / tau)
            mass = expit(log_s - np.log(params.spec.delta))
        else:
            cum += wk
            mass = cum
        if mass > params.rho:
            break
    eps = np.asarray(eps)
    y = np.asarray(y)
    w = np.asarray(w)
    if softpp:
        z = tf.softmax_pp(w, tau, params.spec.delta)
    else:
        z = w
    ld = tf.sb_chain_logdet(y, tau, params.spec)
    trace = dist.SampleTrace(
        epsilon=eps,
        y=y,
        w=w,
        z=tf.SimplexInterior(z),
        log_det_jac=float(ld),
        params=params.prefix(k),
    )
    return TruncatedTrace(k_used=k, trace=trace)


class TruncatedBatch(NamedTuple):
    """Vectorized truncated draws, padded to the widest draw.

    mask[i, j] is True when draw i materialized coordinate j; entries of
    epsilon/y/u/w/z outside the mask are zero.
    """

    epsilon: np.ndarray
    y: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    mask: np.ndarray
    k_used: np.ndarray


_CHUNK_COLS = 32


def _chunk_columns(params: GrowableIgrParams, rng, size, consume):
    """Drive lazy truncation for a whole batch, a chunk of columns at a time.

    Per chunk this draws noise for every draw, extends the stick-breaking
    chain, finds each still-active draw's first crossing of rho, and hands
    (E, Y, U, W, keep, col0) to `consume`; keep marks the entries that
    belong to some draw's materialized prefix and the arrays are unmasked.
    Returns the per-draw k_used.  Stream consumption is a fixed function of
    the seed because the chunk width is a constant.
    """
    tau = params.tau
    softpp = params.spec.kind == tf.SB_SOFTMAX_PP
    # mass > rho in the softmax++ kind means expit(log S - log delta) > rho,
    # i.e. log S above a fixed threshold; comparing logs skips a sigmoid.
    log_s_stop = float(np.log(params.rho) - np.log1p(-params.rho) + np.log(params.spec.delta))
    log_keep = np.zeros(size)
    cum = np.zeros(size)
    log_s = np.full(size, -np.inf)
    k_used = np.zeros(size, dtype=int)
    active = np.ones(size, dtype=bool)
    col = 0
    while active.any():
        if col >= params.cap:
            raise RunawayTruncationError(
                f"needed more than {params.cap} coordinates to reach rho={params.rho}"
            )
        c = min(_CHUNK_COLS, params.cap - col)
        params.materialize(col + c)
        E = rng.standard_normal((size, c))
        Y = params.mu[col : col + c] + params.sigma[col : col + c] * E
        U = np.clip(expit(Y), tf.SIGMOID_CLIP, 1.0 - tf.SIGMOID_CLIP)
        L = np.log1p(-U)
        excl = np.concatenate(
            [np.zeros((size, 1)), np.cumsum(L[:, :-1], axis=1)], axis=1
        )
        W = U * np.exp(log_keep[:, None] + excl)
        if softpp:
            A = W / tau
            M = np.maximum(log_s[:, None], A.max(axis=1, keepdims=True))
            T = np.cumsum(np.exp(A - M), axis=1) + np.exp(log_s[:, None] - M)
            log_s_cols = M + np.log(T)
            crossed = log_s_cols > log_s_stop
        else:
            crossed = cum[:, None] + np.cumsum(W, axis=1) > params.rho
        has = crossed.any(axis=1) & active
        first = np.argmax(crossed, axis=1)
        k_used[has] = col + first[has] + 1
        last = np.where(has, first, c - 1)
        keep = active[:, None] & (np.arange(c)[None, :] <= last[:, None])
        consume(E, Y, U, W, keep, col)
        log_keep = log_keep + np.where(active, L.sum(axis=1), 0.0)
        if softpp:
            log_s = np.where(active, log_s_cols[:, -1], log_s)
        else:
            cum = np.where(active, cum + W.sum(axis=1), cum)
        active &= ~has
        col += c
    return k_used


def sample_truncated_batch(
    params: GrowableIgrParams, rng: np.random.Generator, size: int
) -> TruncatedBatch:
    """Vectorized lazy sampling, padded to the widest draw in the batch."""
    size = int(size)
    chunks = []
    k_used = _chunk_columns(
        params,
        rng,
        size,
        lambda E, Y, U, W, keep, col: chunks.append(
            (E * keep, Y * keep, U * keep, W * keep)
        ),
    )
    eps, y, u, w = (np.concatenate(parts, axis=1) for parts in zip(*chunks))
    width = int(k_used.max())
    eps, y, u, w = eps[:, :width], y[:, :width], u[:, :width], w[:, :width]
    mask = np.arange(width) < k_used[:, None]
    if params.spec.kind == tf.SB_SOFTMAX_PP:
        a = np.where(mask, w / params.tau, -np.inf)
        c = np.maximum(a.max(axis=1, keepdims=True), 0.0)
        e_ = np.exp(a - c)
        denom = e_.sum(axis=1, keepdims=True) + params.spec.delta * np.exp(-c)
        z = e_ / denom
    else:
        z = w
    return TruncatedBatch(eps, y, u, w, z, mask, k_used)


def recover_pmf_truncated(
    params: GrowableIgrParams, n_samples: int, rng: np.random.Generator
):
    """Discretized category frequencies of truncated draws.

    Streams over the lazily drawn columns keeping only each draw's running
    stick maximum, so memory stays O(n_samples) however deep the draws go.
    Draws whose discretization lands on the remainder category stand for
    some category beyond their own truncation level; their frequency is
    reported as tail_mass rather than as any concrete category.
    """
    from .recovery import DiscretePmf, TRUNCATED_INFINITE

    n_samples = int(n_samples)
    best_w = np.zeros(n_samples)
    best_k = np.zeros(n_samples, dtype=int)
    log_s = np.full(n_samples, -np.inf)
    cum = np.zeros(n_samples)
    softpp = params.spec.kind == tf.SB_SOFTMAX_PP
    tau = params.tau

    def consume(E, Y, U, W, keep, col):
        nonlocal best_w, best_k, log_s, cum
        Wk = W * keep
        arg = np.argmax(Wk, axis=1)
        top = Wk[np.arange(Wk.shape[0]), arg]
        better = top > best_w
        best_w = np.where(better, top, best_w)
        best_k = np.where(better, col + arg, best_k)
        if softpp:
            a = np.where(keep, W / tau, -np.inf)
            log_s = np.logaddexp(log_s, logsumexp(a, axis=1))
        else:
            cum = cum + Wk.sum(axis=1)

    k_used = _chunk_columns(params, rng, n_samples, consume)
    if softpp:
        # argmax of z is the argmax of w, and the discretization inequality
        # max z > rem / delta reduces to exp(w_max / tau) > 1.
        best = np.exp(best_w / tau - log_s) * expit(log_s - np.log(params.spec.delta))
        rem = expit(np.log(params.spec.delta) - log_s)
    else:
        best = best_w
        rem = 1.0 - cum
    concrete = best > rem / params.spec.delta
    width = int(k_used.max())
    counts = np.bincount(best_k[concrete], minlength=width)
    probs = counts / float(n_samples)
    tail = float(np.count_nonzero(~concrete)) / float(n_samples)
    return DiscretePmf(probs, tail, TRUNCATED_INFINITE)
