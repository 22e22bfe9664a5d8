"""Exception hierarchy shared across the package."""


class MeanFieldError(Exception):
    """Base class for all package errors."""


class BadParameter(MeanFieldError, ValueError):
    pass


class NoAdmissibleSubset(MeanFieldError):
    pass


class DensityOverflow(MeanFieldError, FloatingPointError):
    """A partition integral of exp(alpha*v) is not finite (under-resolved spike)."""


class BadRadius(MeanFieldError, ValueError):
    pass


class OverlappingBalls(MeanFieldError):
    pass


class Unsupported(MeanFieldError):
    pass


class NoBracket(MeanFieldError):
    pass


class ConfigError(MeanFieldError):
    pass


class SolverFailure(MeanFieldError):
    """Raised by the solvers; the last iterate is kept on ``solution``."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class Diverged(SolverFailure):
    pass


class Stalled(SolverFailure):
    pass


class SingularLinearization(SolverFailure):
    pass
