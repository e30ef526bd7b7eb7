"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, parameter range or scenario configuration."""


class PreconditionError(ValueError):
    """An input violates a documented precondition."""


class GenerationError(RuntimeError):
    """A noise generator could not factorize its covariance matrix."""


class FlowSolverError(RuntimeError):
    """The characteristic solver produced a non-finite state."""


class FlowRangeError(ValueError):
    """A point lies outside the image of the truncated spatial domain."""


class ResolutionError(ValueError):
    """A mollifier kernel is not resolved by the spatial grid."""


class DomainTruncationWarning(UserWarning):
    """An integrand is not negligible at the edge of a truncated domain."""
