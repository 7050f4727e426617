"""Invertible maps from R^(K-1) onto the interior of the probability simplex.

Every map here sends an unconstrained vector y of length n = K - 1 to a
point z with z_k > 0 and sum(z) < 1; the completed probability vector
appends the remainder 1 - sum(z) as category K.  Each map carries an exact
log-determinant of its Jacobian and a hand-derived vector-Jacobian product
(pullback), so densities and reparameterization gradients never rely on
automatic differentiation.

All array functions accept a trailing coordinate axis and broadcast over
leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DegenerateLayerError, DomainError, InvalidInputError

SOFTMAX_PP = "softmaxpp"
SB_SOFTMAX_PP = "sb-softmaxpp"
SB_INTERP = "sb-interp"
PLANAR_SOFTMAX_PP = "planar-softmaxpp"
SB_IDENTITY = "sb-identity"

KINDS = (SOFTMAX_PP, SB_SOFTMAX_PP, SB_INTERP, PLANAR_SOFTMAX_PP, SB_IDENTITY)

# Sigmoid outputs are clipped away from {0, 1} so the stick-breaking stage
# and its inverse stay finite; the boundary carries no mass anyway.
SIGMOID_CLIP = 1e-12

# Softmax++ outputs are nudged to the nearest representable interior point
# when extreme temperatures push a coordinate to 0.0 or the sum to 1.0 in
# float64; the exact output is always interior, only its rounding is not.
_COORD_FLOOR = 1e-300
_SUM_HEADROOM = 4e-16

_LOG_2PI = float(np.log(2.0 * np.pi))


def completed(z: np.ndarray) -> np.ndarray:
    """Append the remainder category: (..., n) -> (..., n + 1)."""
    z = np.asarray(z, dtype=float)
    rem = 1.0 - z.sum(axis=-1, keepdims=True)
    return np.concatenate([z, rem], axis=-1)


def completed_vjp(cotangent: np.ndarray) -> np.ndarray:
    """Pullback of the completion map: g_k - g_K for the free coordinates."""
    g = np.asarray(cotangent, dtype=float)
    return g[..., :-1] - g[..., -1:]


@dataclass(frozen=True)
class SimplexInterior:
    """A point strictly inside the simplex: coords > 0 and sum(coords) < 1."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("simplex point must be a non-empty 1-D vector")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("simplex point must be finite")
        if not np.all(c > 0.0):
            raise InvalidInputError("simplex coordinates must be strictly positive")
        if not c.sum() < 1.0:
            raise InvalidInputError("simplex coordinates must sum to less than 1")
        object.__setattr__(self, "coords", c)

    @property
    def remainder(self) -> float:
        return 1.0 - float(self.coords.sum())

    def completed(self) -> np.ndarray:
        return completed(self.coords)


@dataclass(frozen=True)
class PlanarLayer:
    """One planar bijection f(y) = y + u_hat * tanh(w . y + b).

    The raw direction u is projected to u_hat with w . u_hat > -1, which
    makes f invertible for any raw parameters.
    """

    w: np.ndarray
    u: np.ndarray
    b: float
    u_hat: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if w.ndim != 1 or u.shape != w.shape:
            raise InvalidInputError("planar layer needs matching 1-D w and u")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(u)) and np.isfinite(self.b)):
            raise InvalidInputError("planar layer parameters must be finite")
        wnorm2 = float(w @ w)
        if wnorm2 == 0.0:
            raise DegenerateLayerError("planar layer has w = 0")
        wu = float(w @ u)
        # m(x) = -1 + softplus(x) > -1 guarantees w . u_hat > -1.
        m = -1.0 + np.logaddexp(0.0, wu)
        u_hat = u + (m - wu) * w / wnorm2
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "u_hat", u_hat)

    def __eq__(self, other):
        if not isinstance(other, PlanarLayer):
            return NotImplemented
        return (
            np.array_equal(self.w, other.w)
            and np.array_equal(self.u, other.u)
            and self.b == other.b
        )

    def to_json(self) -> dict:
        return {"w": self.w.tolist(), "u": self.u.tolist(), "b": self.b}

    @classmethod
    def from_json(cls, obj: dict) -> "PlanarLayer":
        return cls(w=np.asarray(obj["w"], float), u=np.asarray(obj["u"], float), b=float(obj["b"]))


@dataclass(frozen=True)
class TransformSpec:
    """Which invertible map to use and its fixed structural parameters."""

    kind: str
    delta: float = 1.0
    layers: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown transform kind: {self.kind!r}")
        if not (np.isfinite(self.delta) and self.delta > 0.0):
            raise InvalidInputError("delta must be finite and > 0")
        layers = tuple(self.layers)
        if self.kind == PLANAR_SOFTMAX_PP:
            if not layers:
                raise InvalidInputError("planar-softmaxpp needs at least one layer")
            if not all(isinstance(l, PlanarLayer) for l in layers):
                raise InvalidInputError("layers must be PlanarLayer instances")
        elif layers:
            raise InvalidInputError(f"{self.kind} takes no planar layers")
        object.__setattr__(self, "layers", layers)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "flow_params": [l.to_json() for l in self.layers] if self.layers else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransformSpec":
        raw = obj.get("flow_params") or ()
        layers = tuple(PlanarLayer.from_json(l) for l in raw)
        return cls(kind=obj["kind"], delta=float(obj.get("delta", 1.0)), layers=layers)


class ForwardResult:
    """Forward pass outputs: z, the stick vector w when one exists, log|det J|."""

    __slots__ = ("z", "w", "log_det_jac")

    def __init__(self, z, w, log_det_jac):
        self.z = z
        self.w = w
        self.log_det_jac = log_det_jac


def _check_vec(y, name="y"):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] == 0:
        raise InvalidInputError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError(f"{name} must be finite")
    return y


def _check_tau(tau):
    if not (np.isfinite(tau) and tau > 0.0):
        raise InvalidInputError("tau must be finite and > 0")
    return float(tau)


# ---------------------------------------------------------------------------
# softmax++:  z_k = exp(y_k / tau) / (sum_j exp(y_j / tau) + delta)


def softmax_pp(y, tau, delta=1.0):
    """Temperature softmax with a constant delta > 0 added to the normalizer.

    The extra delta leaves remainder mass 1 - sum(z) > 0, which is what makes
    the map invertible onto the simplex interior.  Exponents are shifted by
    c = max(max_k y_k / tau, 0) so large arguments cannot overflow.
    """
    y = _check_vec(y)
    tau = _check_tau(tau)
    a = y / tau
    c = np.maximum(a.max(axis=-1, keepdims=True), 0.0)
    e = np.exp(a - c)
    denom = e.sum(axis=-1, keepdims=True) + delta * np.exp(-c)
    z = e / denom
    # Nudge rounded-out values back to the representable interior.
    z = np.maximum(z, _COORD_FLOOR)
    s = z.sum(axis=-1, keepdims=True)
    z = z * np.where(s >= 1.0, (1.0 - _SUM_HEADROOM) / s, 1.0)
    return z


def softmax_pp_inverse(z, tau, delta=1.0):
    """Recover y_k = tau * log(delta * z_k / (1 - sum(z)))."""
    z = np.asarray(z, dtype=float)
    tau = _check_tau(tau)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z must be finite")
    if not (np.all(z > 0.0) and np.all(z.sum(axis=-1) < 1.0)):
        raise DomainError("z must lie strictly inside the simplex")
    rem = 1.0 - z.sum(axis=-1, keepdims=True)
    return tau * (np.log(delta * z) - np.log(rem))


def softmax_pp_logdet(y, tau, delta=1.0):
    """log|det J| = log(delta) + sum_k y_k/tau - n*log(tau) - (n+1)*log(s).

    Here s = sum_j exp(y_j / tau) + delta and n = len(y).  This follows from
    the rank-one structure J = (s*diag(v) - v v^T) / (tau * s^2) with
    v = exp(y / tau), whose determinant is delta * prod(v) / (tau^n * s^(n+1)).
    """
    y = _check_vec(y)
    tau = _check_tau(tau)
    n = y.shape[-1]
    a = y / tau
    c = np.maximum(a.max(axis=-1), 0.0)
    log_s = c + np.log(
        np.exp(a - c[..., None]).sum(axis=-1) + delta * np.exp(-c)
    )
    return np.log(delta) + a.sum(axis=-1) - n * np.log(tau) - (n + 1) * log_s


def softmax_pp_vjp(y, cotangent, tau, delta=1.0):
    """Pullback J^T g = (z * g - z * (z . g)) / tau, with z = softmax_pp(y)."""
    z = softmax_pp(y, tau, delta)
    g = np.asarray(cotangent, dtype=float)
    zg = (z * g).sum(axis=-1, keepdims=True)
    return (z * g - z * zg) / tau


# ---------------------------------------------------------------------------
# Stick-breaking:  w_k = u_k * prod_{i<k} (1 - u_i), u in (0, 1)^n


def stick_break(u):
    """Map unit-cube sticks to simplex-interior coordinates."""
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DomainError("stick fractions must lie in (0, 1)")
    prev = _stick_prefix(u)
    return u * prev


def _stick_prefix(u):
    """prod_{i<k} (1 - u_i) for each k, computed in log space."""
    log_keep = np.log1p(-u)
    csum = np.cumsum(log_keep, axis=-1)
    prev = np.empty_like(u)
    prev[..., 0] = 1.0
    prev[..., 1:] = np.exp(csum[..., :-1])
    return prev


def stick_break_inverse(w):
    """u_k = w_k / (1 - sum_{i<k} w_i); requires w strictly interior."""
    w = np.asarray(w, dtype=float)
    if not (np.all(w > 0.0) and np.all(w.sum(axis=-1) < 1.0)):
        raise DomainError("w must lie strictly inside the simplex")
    head = np.cumsum(w, axis=-1)
    avail = np.empty_like(w)
    avail[..., 0] = 1.0
    avail[..., 1:] = 1.0 - head[..., :-1]
    u = w / avail
    if not np.all(u < 1.0):
        raise DomainError("w is not reachable by stick-breaking")
    return u


def stick_break_logdet(u):
    """Triangular Jacobian: log|det| = sum_k sum_{i<k} log(1 - u_i)."""
    u = np.asarray(u, dtype=float)
    log_keep = np.log1p(-u)
    csum = np.cumsum(log_keep, axis=-1)
    return csum[..., :-1].sum(axis=-1)


def stick_break_vjp(u, cotangent):
    """Pullback through w = stick_break(u).

    (J^T g)_j = g_j * prod_{i<j}(1 - u_i) - (sum_{k>j} g_k w_k) / (1 - u_j).
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(cotangent, dtype=float)
    prev = _stick_prefix(u)
    w = u * prev
    gw = g * w
    tail = np.flip(np.cumsum(np.flip(gw, axis=-1), axis=-1), axis=-1) - gw
    return g * prev - tail / (1.0 - u)


def _sigmoid(y):
    return np.clip(expit(y), SIGMOID_CLIP, 1.0 - SIGMOID_CLIP)


def _sigmoid_logdet(u):
    return np.sum(np.log(u) + np.log1p(-u), axis=-1)


# ---------------------------------------------------------------------------
# Vertex interpolation:  z = tau * w + (1 - tau) * P(w)


def _nearest_vertex(w):
    """Projection of the completed vector onto the nearest vertex.

    Returns the argmax index of the completed vector (ties break to the
    lowest index) and the corresponding one-hot in the n free coordinates;
    when the remainder wins, that one-hot is the zero vector.
    """
    wc = completed(w)
    idx = np.argmax(wc, axis=-1)
    n = w.shape[-1]
    hot = (idx[..., None] == np.arange(n)).astype(float)
    return idx, hot


def vertex_interp(w, tau):
    """Interpolate between a simplex point and its nearest vertex."""
    w = np.asarray(w, dtype=float)
    tau = _check_tau(tau)
    if tau > 1.0:
        raise InvalidInputError("vertex interpolation needs tau in (0, 1]")
    if not (np.all(w > 0.0) and np.all(w.sum(axis=-1) < 1.0)):
        raise DomainError("w must lie strictly inside the simplex")
    _, hot = _nearest_vertex(w)
    return tau * w + (1.0 - tau) * hot


def vertex_interp_inverse(w_out, tau):
    """Invert the interpolation; the interpolated point keeps the same argmax."""
    z = np.asarray(w_out, dtype=float)
    tau = _check_tau(tau)
    if tau > 1.0:
        raise InvalidInputError("vertex interpolation needs tau in (0, 1]")
    _, hot = _nearest_vertex(z)
    w = (z - (1.0 - tau) * hot) / tau
    if not (np.all(w > 0.0) and np.all(w.sum(axis=-1) < 1.0)):
        raise DomainError("point is outside the image of vertex interpolation")
    return w


# ---------------------------------------------------------------------------
# Planar layers


def planar_forward(layers, y):
    """Apply the layers in order; returns (output, summed log|det J|)."""
    y = _check_vec(y)
    logdet = np.zeros(y.shape[:-1])
    for layer in layers:
        a = y @ layer.w + layer.b
        t = np.tanh(a)
        y = y + layer.u_hat * t[..., None]
        uw = float(layer.u_hat @ layer.w)
        grad_term = 1.0 + uw * (1.0 - t * t)
        logdet = logdet + np.log(np.maximum(np.abs(grad_term), 1e-300))
    return y, logdet


def planar_inverse(layers, x, n_iter=50):
    """Invert the layer stack by 1-D bisection per layer, applied in reverse.

    With a = w . y, the scalar equation a + (w . u_hat) tanh(a + b) = w . x
    is strictly monotone, so bisection on a bracket of width
    2 * (|w . u_hat| + 1) around w . x always converges.
    """
    x = _check_vec(x, "x")
    for layer in reversed(layers):
        wx = x @ layer.w
        uw = float(layer.u_hat @ layer.w)
        pad = abs(uw) + 1.0
        lo = wx - pad
        hi = wx + pad
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            val = mid + uw * np.tanh(mid + layer.b) - wx
            lo = np.where(val < 0.0, mid, lo)
            hi = np.where(val < 0.0, hi, mid)
        a = 0.5 * (lo + hi)
        x = x - layer.u_hat * np.tanh(a + layer.b)[..., None]
    return x


def planar_vjp(layers, y, cotangent):
    """Pullback through the layer stack: J^T g = g + (1 - t^2)(u_hat . g) w."""
    y = _check_vec(y)
    inputs = []
    for layer in layers:
        inputs.append(y)
        t = np.tanh(y @ layer.w + layer.b)
        y = y + layer.u_hat * t[..., None]
    g = np.asarray(cotangent, dtype=float)
    for layer, y_in in zip(reversed(layers), reversed(inputs)):
        t = np.tanh(y_in @ layer.w + layer.b)
        ug = g @ layer.u_hat
        g = g + ((1.0 - t * t) * ug)[..., None] * layer.w
    return g


# ---------------------------------------------------------------------------
# Chain dispatch


def _require_sb(spec):
    if spec.kind not in (SB_SOFTMAX_PP, SB_INTERP, SB_IDENTITY):
        raise InvalidInputError(f"{spec.kind} has no stick-breaking stage")


def sb_chain_logdet(y, tau, spec):
    """log|det J| of the full sigmoid -> stick-break -> terminal-stage chain."""
    _require_sb(spec)
    y = _check_vec(y)
    u = _sigmoid(y)
    w = stick_break(u)
    out = _sigmoid_logdet(u) + stick_break_logdet(u)
    if spec.kind == SB_SOFTMAX_PP:
        out = out + softmax_pp_logdet(w, tau, spec.delta)
    elif spec.kind == SB_INTERP:
        tau = _check_tau(tau)
        if tau > 1.0:
            raise InvalidInputError("sb-interp needs tau in (0, 1]")
        out = out + y.shape[-1] * np.log(tau)
    return out


def forward(spec, y, tau) -> ForwardResult:
    """Map y through the chain named by spec; returns z, sticks w, log|det J|."""
    y = _check_vec(y)
    tau = _check_tau(tau)
    if spec.kind == SOFTMAX_PP:
        z = softmax_pp(y, tau, spec.delta)
        return ForwardResult(z, None, softmax_pp_logdet(y, tau, spec.delta))
    if spec.kind == PLANAR_SOFTMAX_PP:
        h, ld = planar_forward(spec.layers, y)
        z = softmax_pp(h, tau, spec.delta)
        return ForwardResult(z, None, ld + softmax_pp_logdet(h, tau, spec.delta))
    u = _sigmoid(y)
    w = stick_break(u)
    ld = _sigmoid_logdet(u) + stick_break_logdet(u)
    if spec.kind == SB_SOFTMAX_PP:
        z = softmax_pp(w, tau, spec.delta)
        return ForwardResult(z, w, ld + softmax_pp_logdet(w, tau, spec.delta))
    if spec.kind == SB_INTERP:
        z = vertex_interp(w, tau)
        return ForwardResult(z, w, ld + y.shape[-1] * np.log(tau))
    return ForwardResult(w, w, ld)


def inverse(spec, z, tau):
    """Recover y with forward(spec, y, tau).z == z; raises DomainError when
    z is not in the image of the chain."""
    z = np.asarray(z, dtype=float)
    tau = _check_tau(tau)
    if spec.kind == SOFTMAX_PP:
        return softmax_pp_inverse(z, tau, spec.delta)
    if spec.kind == PLANAR_SOFTMAX_PP:
        h = softmax_pp_inverse(z, tau, spec.delta)
        return planar_inverse(spec.layers, h)
    if spec.kind == SB_SOFTMAX_PP:
        w = softmax_pp_inverse(z, tau, spec.delta)
    elif spec.kind == SB_INTERP:
        w = vertex_interp_inverse(z, tau)
    else:
        w = z
    u = stick_break_inverse(w)
    if not np.all((u > SIGMOID_CLIP / 2) & (u < 1.0 - SIGMOID_CLIP / 2)):
        raise DomainError("sticks outside the invertible sigmoid range")
    return np.log(u) - np.log1p(-u)


def pullback(spec, y, tau, cotangent):
    """J^T g for the chain forward at y, composed stage by stage in reverse."""
    y = _check_vec(y)
    tau = _check_tau(tau)
    g = np.asarray(cotangent, dtype=float)
    if spec.kind == SOFTMAX_PP:
        return softmax_pp_vjp(y, g, tau, spec.delta)
    if spec.kind == PLANAR_SOFTMAX_PP:
        h, _ = planar_forward(spec.layers, y)
        g = softmax_pp_vjp(h, g, tau, spec.delta)
        return planar_vjp(spec.layers, y, g)
    u = _sigmoid(y)
    w = stick_break(u)
    if spec.kind == SB_SOFTMAX_PP:
        g = softmax_pp_vjp(w, g, tau, spec.delta)
    elif spec.kind == SB_INTERP:
        g = tau * g
    g = stick_break_vjp(u, g)
    return g * u * (1.0 - u)
