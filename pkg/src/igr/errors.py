"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Argument fails a shape, finiteness, or positivity requirement."""


class DomainError(ValueError):
    """Point lies outside the domain or image of the requested map."""


class ContractViolationError(ValueError):
    """Operation invoked outside its stated validity conditions."""


class DegenerateLayerError(ValueError):
    """Planar layer parameters admit no invertibility correction."""


class RunawayTruncationError(RuntimeError):
    """Truncated sampling failed to accumulate the target mass within the cap."""


class FitDivergedError(RuntimeError):
    """Optimization produced a non-finite loss; carries the trajectory so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = list(trajectory) if trajectory is not None else []


class ConfigError(ValueError):
    """Experiment configuration is malformed or inconsistent."""
