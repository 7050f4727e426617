"""Invertible Gaussian reparameterization for discrete distributions.

Differentiable relaxations of categorical variables built from invertible
maps onto the open simplex, with exact densities, discretization back to
categories, lazily truncated countably-infinite support, and low-variance
reparameterization gradients — plus a CLI for fitting the relaxations to
target pmfs.
"""

from .distributions import (
    BatchSamples,
    GaussianDiag,
    GsParams,
    IgrParams,
    SampleTrace,
    gs_log_density,
    gs_sample,
    gs_sample_batch,
    igr_kl_closed,
    igr_kl_mc,
    igr_log_density,
    igr_sample,
    igr_sample_batch,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    DegenerateLayerError,
    DomainError,
    FitDivergedError,
    InvalidInputError,
    RunawayTruncationError,
)
from .estimators import (
    Objective,
    gs_loss_and_grad,
    mm_loss_and_grad,
    moment_match_loss,
    reparam_grad,
    score_grad,
)
from .fitting import (
    DEFAULT_TAU_GRID,
    FitReport,
    RunConfig,
    emit,
    fit,
    kl_discrete,
    l2_distance,
    select_best,
    sweep,
    tv_distance,
)
from .gradcheck import fd_check, fd_jacobian, fd_vjp, pullback_registry, run_pullback_checks
from .infinite import (
    GrowableIgrParams,
    TruncatedTrace,
    gradient_coords,
    recover_pmf_truncated,
    sample_truncated,
    sample_truncated_batch,
)
from .optim import AdamState, adam_grow, adam_init, adam_step
from .recovery import (
    DiscretePmf,
    clamp_params,
    discretize,
    hard_limit,
    recover_pmf_gs,
    recover_pmf_mc,
    recover_pmf_quad,
    straight_through,
)
from .targets import TargetSpec, build_target, parse_target
from .transforms import (
    PlanarLayer,
    SimplexInterior,
    TransformSpec,
    completed,
    forward,
    inverse,
    pullback,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
