"""Exception types shared across the package."""


class GridmorError(Exception):
    """Base class for domain errors raised by this package."""


class ValidationError(GridmorError, ValueError):
    """A parameter set, state, or configuration violates an invariant."""


class ParameterFileError(ValidationError):
    """A parameter file is malformed or inconsistent."""


class StabilityError(GridmorError):
    """A matrix that must be Hurwitz has an eigenvalue with Re >= 0."""


class FactorizationError(GridmorError):
    """A required matrix factorization does not exist."""


class RankError(GridmorError):
    """Requested reduced dimension exceeds the numerically available rank."""

    def __init__(self, message, max_rank=None):
        super().__init__(message)
        self.max_rank = max_rank


class ConvergenceError(GridmorError):
    """An iterative refinement failed to reach its tolerance."""


class SimulationFailure(GridmorError):
    """Time integration could not be continued past ``t_failure``."""

    def __init__(self, message, t_failure):
        super().__init__(message)
        self.t_failure = t_failure
