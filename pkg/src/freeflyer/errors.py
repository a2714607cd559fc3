"""Exception types shared across the toolkit."""


class FreeflyerError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(FreeflyerError):
    """An operation was called with arguments violating its preconditions."""


class ConfigError(FreeflyerError):
    """A scenario or training configuration failed validation."""


class IntegrationDivergedError(FreeflyerError):
    """Integration produced a non-finite state.

    Carries the step index (when stepping inside an episode) so the caller
    can report where the run blew up.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class SolverStallError(FreeflyerError):
    """An iterative solver failed to reach its residual tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class QpSolverError(FreeflyerError):
    """The MPC QP solve diverged; callers fall back to PD control."""


class GpFitError(FreeflyerError):
    """GP Gram matrix was not positive definite (add jitter or noise)."""


class GpSamplingError(FreeflyerError):
    """Posterior covariance Cholesky failed after jitter escalation."""


class DisturbanceError(FreeflyerError):
    """A user disturbance callback returned a non-finite wrench."""


class CheckpointError(FreeflyerError):
    """A policy checkpoint could not be read or has incompatible shapes."""
