"""Target pmfs for the fitting experiments.

Infinite families are truncated at the smallest T whose cdf reaches
1 - 1e-10 and renormalized; pmf values come from log-space recurrences so
no factorials or binomial coefficients are ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .recovery import DiscretePmf

CDF_TOL = 1e-10
_SCAN_CAP = 1_000_000


@dataclass(frozen=True)
class TargetSpec:
    family: str
    params: tuple

    def label(self) -> str:
        return f"{self.family}:" + ",".join(repr(p) for p in self.params)


def parse_target(text: str) -> TargetSpec:
    """Parse 'poisson:50', 'binomial:12,0.3', 'negbinomial:50,0.6', or
    'custom:p0,p1,...'."""
    if not isinstance(text, str) or ":" not in text:
        raise ConfigError(f"target must look like 'family:params', got {text!r}")
    family, _, rest = text.partition(":")
    family = family.strip().lower()
    try:
        params = tuple(float(tok) for tok in rest.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad target parameters in {text!r}") from exc
    if family == "poisson":
        if len(params) != 1 or params[0] <= 0:
            raise ConfigError("poisson needs one parameter lambda > 0")
    elif family == "binomial":
        if len(params) != 2 or params[0] < 1 or not params[0].is_integer() or not 0 < params[1] < 1:
            raise ConfigError("binomial needs integer N >= 1 and p in (0, 1)")
    elif family == "negbinomial":
        if len(params) != 2 or params[0] <= 0 or not 0 < params[1] < 1:
            raise ConfigError("negbinomial needs r > 0 and p in (0, 1)")
    elif family == "custom":
        if len(params) < 2 or any(p < 0 for p in params) or sum(params) <= 0:
            raise ConfigError("custom needs at least two nonnegative weights")
    else:
        raise ConfigError(f"unknown target family {family!r}")
    return TargetSpec(family, params)


def _scan(log_p0, log_ratio, finite_support=None):
    """Walk the recurrence log p_{k+1} = log p_k + log_ratio(k) until the
    cdf clears 1 - CDF_TOL (or the support ends)."""
    probs = []
    log_p = log_p0
    cdf = 0.0
    k = 0
    while True:
        p = float(np.exp(log_p))
        probs.append(p)
        cdf += p
        if finite_support is not None and k == finite_support:
            break
        if finite_support is None and cdf >= 1.0 - CDF_TOL:
            break
        if k >= _SCAN_CAP:
            raise ConfigError("target pmf failed to accumulate mass; check parameters")
        log_p += log_ratio(k)
        k += 1
    return np.asarray(probs)


def build_target(spec: TargetSpec) -> DiscretePmf:
    """Materialize the target as a finite pmf summing to 1."""
    if spec.family == "poisson":
        (lam,) = spec.params
        probs = _scan(-lam, lambda k: np.log(lam) - np.log(k + 1.0))
    elif spec.family == "binomial":
        n, p = spec.params
        n = int(n)
        probs = _scan(
            n * np.log1p(-p),
            lambda k: np.log(n - k) + np.log(p) - np.log(k + 1.0) - np.log1p(-p),
            finite_support=n,
        )
    elif spec.family == "negbinomial":
        r, p = spec.params
        probs = _scan(
            r * np.log(p),
            lambda k: np.log(k + r) + np.log1p(-p) - np.log(k + 1.0),
        )
    elif spec.family == "custom":
        probs = np.asarray(spec.params, dtype=float)
    else:
        raise ConfigError(f"unknown target family {spec.family!r}")
    probs = probs / probs.sum()
    return DiscretePmf(probs)
