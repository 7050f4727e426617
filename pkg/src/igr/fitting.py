"""Fitting relaxations to target pmfs and reporting the results.

A fit minimizes the Monte Carlo moment-matching loss with Adam, recovers
the discretized pmf by Monte Carlo at the end, and reports discrete metrics
against the target.  A sweep runs one fit per temperature and selects the
winner by total variation on the recovered pmf, never by the continuous
loss; ties break toward the lower temperature.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import distributions as dist
from . import estimators as est
from . import infinite as inf
from . import optim
from . import recovery as rec
from . import transforms as tf
from .errors import ConfigError, FitDivergedError
from .targets import build_target, parse_target

MODELS = ("igr-i", "igr-sb", "igr-planar", "gs")

DEFAULT_TAU_GRID = (0.01, 0.03, 0.07, 0.1, 0.25, 0.4, 0.5, 0.67, 0.85, 1.0)

N_RECOVER = 100_000


@dataclass(frozen=True)
class RunConfig:
    """One experiment: which model, which target, and the budget."""

    model: str
    target: str
    k: Optional[int] = None
    rho: float = 0.999
    tau: Optional[float] = None
    tau_grid: Optional[tuple] = None
    steps: int = 1000
    batch: int = 64
    seed: int = 0
    lr: float = 0.01
    delta: float = 1.0
    flow_layers: int = 2
    out: Optional[str] = None

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        parse_target(self.target)
        if self.k is not None and self.k < 2:
            raise ConfigError("k must be at least 2")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if self.tau is not None and not self.tau > 0.0:
            raise ConfigError("tau must be > 0")
        if self.tau_grid is not None and (
            len(self.tau_grid) == 0 or any(t <= 0.0 for t in self.tau_grid)
        ):
            raise ConfigError("tau_grid must be non-empty with positive entries")
        if self.steps < 1 or self.batch < 1:
            raise ConfigError("steps and batch must be >= 1")
        if not self.lr > 0.0:
            raise ConfigError("lr must be > 0")
        if not self.delta > 0.0:
            raise ConfigError("delta must be > 0")
        if self.flow_layers < 1:
            raise ConfigError("flow_layers must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "tau_grid" in obj and obj["tau_grid"] is not None:
            obj = dict(obj, tau_grid=tuple(obj["tau_grid"]))
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class FitReport:
    config: dict
    target: rec.DiscretePmf
    recovered: rec.DiscretePmf
    metrics: dict
    trajectory: list
    wall_seconds: float
    seed: int

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "metrics": self.metrics,
            "recovered": self.recovered.to_json(),
            "target": {"probs": self.target.probs.tolist()},
            "trajectory": list(self.trajectory),
            "wall_seconds": self.wall_seconds,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Discrete metrics


def _aligned(p: rec.DiscretePmf, q: rec.DiscretePmf):
    size = max(p.k, q.k)
    a = np.zeros(size)
    a[: p.k] = p.probs
    b = np.zeros(size)
    b[: q.k] = q.probs
    return a, p.tail_mass, b, q.tail_mass


def tv_distance(p: rec.DiscretePmf, q: rec.DiscretePmf) -> float:
    """Total variation over the shared support, with the two tails compared
    as one lumped bucket."""
    a, at, b, bt = _aligned(p, q)
    return 0.5 * (np.abs(a - b).sum() + abs(at - bt))


def kl_discrete(p: rec.DiscretePmf, q: rec.DiscretePmf, eps: float = 1e-12) -> float:
    """KL(p || q) with additive eps smoothing and renormalization on both
    sides, so empty categories stay finite."""
    a, at, b, bt = _aligned(p, q)
    va = np.append(a, at) + eps
    vb = np.append(b, bt) + eps
    va /= va.sum()
    vb /= vb.sum()
    return float(np.sum(va * (np.log(va) - np.log(vb))))


def l2_distance(p: rec.DiscretePmf, q: rec.DiscretePmf) -> float:
    a, at, b, bt = _aligned(p, q)
    return float(np.sqrt(((a - b) ** 2).sum() + (at - bt) ** 2))


# ---------------------------------------------------------------------------
# Model-specific fitting loops


def _model_target(target: rec.DiscretePmf, k: int):
    """Target restricted to k modeled categories plus the constant loss
    contribution of the unmodeled mass."""
    p = target.probs
    vec = np.zeros(k)
    m = min(k, p.size)
    vec[:m] = p[:m]
    const = float((p[m:] ** 2).sum())
    return vec, const


def _fit_finite_igr(config: RunConfig, target: rec.DiscretePmf, rng, tau: float):
    if config.model == "igr-i":
        k = config.k or target.k
        spec = tf.TransformSpec(tf.SOFTMAX_PP, delta=config.delta)
    else:
        k = config.k or target.k
        n = k - 1
        layers = tuple(
            tf.PlanarLayer(
                w=rng.standard_normal(n),
                u=0.1 * rng.standard_normal(n),
                b=float(rng.standard_normal()),
            )
            for _ in range(config.flow_layers)
        )
        spec = tf.TransformSpec(tf.PLANAR_SOFTMAX_PP, delta=config.delta, layers=layers)
    n = k - 1
    tvec, const = _model_target(target, k)
    mu = 0.1 * rng.standard_normal(n)
    xi = np.zeros(n)
    st_mu = optim.adam_init(n, config.lr)
    st_xi = optim.adam_init(n, config.lr)
    trajectory = []
    for _ in range(config.steps):
        eps = rng.standard_normal((config.batch, n))
        sigma = np.exp(xi)
        loss, gmu, gsig = est.mm_loss_and_grad(mu, sigma, tau, spec, tvec, eps)
        loss += const
        if not np.isfinite(loss):
            raise FitDivergedError("moment-matching loss diverged", trajectory)
        trajectory.append(loss)
        mu, st_mu = optim.adam_step(st_mu, mu, gmu)
        xi, st_xi = optim.adam_step(st_xi, xi, gsig * sigma)
    params = dist.IgrParams(mu, np.exp(xi), tau, spec)
    recovered = rec.recover_pmf_mc(params, N_RECOVER, rng).pmf
    return trajectory, recovered, k


def _fit_gs(config: RunConfig, target: rec.DiscretePmf, rng, tau: float):
    k = config.k or target.k
    tvec, const = _model_target(target, k)
    eta = 0.1 * rng.standard_normal(k)
    state = optim.adam_init(k, config.lr)
    trajectory = []
    for _ in range(config.steps):
        eps = dist._gumbel(rng, (config.batch, k))
        loss, geta = est.gs_loss_and_grad(eta, tau, tvec, eps)
        loss += const
        if not np.isfinite(loss):
            raise FitDivergedError("moment-matching loss diverged", trajectory)
        trajectory.append(loss)
        eta, state = optim.adam_step(state, eta, geta)
    params = dist.GsParams(np.exp(eta), tau)
    recovered = rec.recover_pmf_gs(params, N_RECOVER, rng).pmf
    return trajectory, recovered, k


def _truncated_loss_grad(batch: inf.TruncatedBatch, tau, softpp, tvec, tail_at):
    """Loss and (mu, sigma) gradients for truncated draws.

    Each draw is compared on the partition it resolves: its materialized
    categories against the target prefix, its remainder against the target
    mass from k_used onward.  Zero-padded batches keep the chain pullback
    exact because padded coordinates carry zero z, w, and cotangent.
    """
    z = batch.z
    mask = batch.mask
    rem = 1.0 - z.sum(axis=1)
    diff = (z - tvec[None, : z.shape[1]]) * mask
    drem = rem - tail_at[batch.k_used]
    loss = float((diff * diff).sum(axis=1).mean() + (drem * drem).mean())
    cot = (2.0 * diff - 2.0 * drem[:, None]) * mask
    if softpp:
        zg = (z * cot).sum(axis=1, keepdims=True)
        gw = (z * cot - z * zg) / tau
    else:
        gw = cot
    gu = tf.stick_break_vjp(batch.u, gw)
    gy = gu * batch.u * (1.0 - batch.u)
    return loss, gy.mean(axis=0), (gy * batch.epsilon).mean(axis=0)


def _fit_sb(config: RunConfig, target: rec.DiscretePmf, rng, tau: float):
    spec = tf.TransformSpec(tf.SB_SOFTMAX_PP, delta=config.delta)
    params = inf.GrowableIgrParams(tau, config.rho, spec)
    full = target.probs
    suffix = np.concatenate([np.cumsum(full[::-1])[::-1], [0.0]])
    mu = np.zeros(0)
    xi = np.zeros(0)
    st_mu = optim.adam_init(0, config.lr)
    st_xi = optim.adam_init(0, config.lr)
    trajectory = []
    for _ in range(config.steps):
        params.mu = mu.copy()
        params.sigma = np.exp(xi)
        batch = inf.sample_truncated_batch(params, rng, config.batch)
        width = batch.z.shape[1]
        if width > mu.size:
            mu = np.concatenate([mu, params.mu[mu.size :]])
            xi = np.concatenate([xi, np.log(params.sigma[xi.size :])])
            st_mu = optim.adam_grow(st_mu, mu.size)
            st_xi = optim.adam_grow(st_xi, xi.size)
        tvec = np.zeros(max(width, full.size))
        tvec[: full.size] = full
        tail_at = np.zeros(width + 1)
        upto = min(width + 1, suffix.size)
        tail_at[:upto] = suffix[:upto]
        loss, gmu, gsig = _truncated_loss_grad(batch, tau, True, tvec, tail_at)
        if not np.isfinite(loss):
            raise FitDivergedError("moment-matching loss diverged", trajectory)
        trajectory.append(loss)
        gmu_full = np.zeros(mu.size)
        gmu_full[: gmu.size] = gmu
        gxi_full = np.zeros(xi.size)
        gxi_full[: gsig.size] = gsig * np.exp(xi[: gsig.size])
        mu, st_mu = optim.adam_step(st_mu, mu, gmu_full)
        xi, st_xi = optim.adam_step(st_xi, xi, gxi_full)
    params.mu = mu.copy()
    params.sigma = np.exp(xi)
    recovered = inf.recover_pmf_truncated(params, N_RECOVER, rng)
    return trajectory, recovered, None


def fit(config: RunConfig) -> FitReport:
    """Run one fit end to end; deterministic given the config and seed."""
    config.validate()
    if config.tau_grid is not None:
        raise ConfigError("fit takes a single tau; use sweep for a grid")
    if config.tau is None:
        config = replace(config, tau=1.0)
    start = time.perf_counter()
    spec = parse_target(config.target)
    target = build_target(spec)
    if config.model in ("igr-i", "igr-planar", "gs") and spec.family in ("binomial", "custom"):
        k = config.k or target.k
        if k < target.k:
            raise ConfigError(
                f"finite model needs k >= {target.k} for finite target {config.target!r}"
            )
    rng = np.random.default_rng(config.seed)
    if config.model == "igr-sb":
        trajectory, recovered, k_eff = _fit_sb(config, target, rng, config.tau)
    elif config.model == "gs":
        trajectory, recovered, k_eff = _fit_gs(config, target, rng, config.tau)
    else:
        trajectory, recovered, k_eff = _fit_finite_igr(config, target, rng, config.tau)
    metrics = {
        "tv": tv_distance(target, recovered),
        "kl": kl_discrete(target, recovered),
        "l2": l2_distance(target, recovered),
        "final_loss": trajectory[-1],
    }
    wall = time.perf_counter() - start
    echo = {
        "model": config.model,
        "target": config.target,
        "k": k_eff,
        "rho": config.rho if config.model == "igr-sb" else None,
        "tau": config.tau,
        "steps": config.steps,
        "batch": config.batch,
        "seed": config.seed,
        "lr": config.lr,
        "delta": config.delta,
        "flow_layers": config.flow_layers if config.model == "igr-planar" else None,
    }
    return FitReport(
        config=echo,
        target=target,
        recovered=recovered,
        metrics=metrics,
        trajectory=trajectory,
        wall_seconds=wall,
        seed=config.seed,
    )


def select_best(reports) -> FitReport:
    """Winner by recovered-pmf total variation; exact ties take the lower
    temperature."""
    if not reports:
        raise ConfigError("no reports to select from")
    return min(reports, key=lambda r: (r.metrics["tv"], r.config["tau"]))


def sweep(config: RunConfig):
    """One fit per grid temperature; returns (best, reports, failures).

    Runs are independent and each draws its own stream from config.seed.  A
    run that diverges is recorded in failures and the rest of the grid still
    completes; only an entirely failed grid raises.
    """
    config.validate()
    grid = config.tau_grid or DEFAULT_TAU_GRID
    reports = []
    failures = []
    for tau in grid:
        try:
            reports.append(fit(replace(config, tau=float(tau), tau_grid=None)))
        except (FitDivergedError, RuntimeError) as exc:
            failures.append({"tau": float(tau), "error": str(exc)})
    if not reports:
        raise FitDivergedError(
            f"every temperature in the grid failed: {failures}", []
        )
    return select_best(reports), reports, failures


# ---------------------------------------------------------------------------
# Output files


def _json_text(obj) -> str:
    import json

    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _pmf_csv(report: FitReport) -> str:
    t, tt, r, rt = _aligned(report.target, report.recovered)
    lines = ["category,target_prob,recovered_prob"]
    for i in range(t.size):
        lines.append(f"{i},{float(t[i])!r},{float(r[i])!r}")
    if report.recovered.kind == rec.TRUNCATED_INFINITE:
        lines.append(f"tail,{float(tt)!r},{float(rt)!r}")
    return "\n".join(lines) + "\n"


def emit(result, out_dir) -> dict:
    """Write results.json and pmf.csv under out_dir.

    `result` is either one FitReport or a (best, reports, failures) sweep
    result; sweeps emit every run plus the selection, and the csv belongs to
    the best run.  Returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, FitReport):
        payload = result.to_json()
        best = result
    else:
        best, reports, failures = result
        payload = {
            "best": best.to_json(),
            "runs": [r.to_json() for r in reports],
        }
        if failures:
            payload["failures"] = failures
    results_path = out / "results.json"
    csv_path = out / "pmf.csv"
    results_path.write_text(_json_text(payload))
    csv_path.write_text(_pmf_csv(best))
    return {"results": results_path, "pmf": csv_path}
