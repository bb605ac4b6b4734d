"""Exception hierarchy shared by all convexineq modules."""


class ConvexIneqError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ConvexIneqError, ValueError):
    """A mathematical parameter is out of its admissible range."""


class UnsupportedDimensionError(ParameterError):
    """The requested dimension exceeds what this backend supports."""


class DomainViolationError(ConvexIneqError):
    """A function left the domain it was declared to live in."""


class EvaluationError(ConvexIneqError):
    """A numerical evaluator produced non-finite or inconsistent values."""


class PreconditionError(ConvexIneqError):
    """A theorem-level precondition fails, so the check does not apply.

    Carries optional metadata (e.g. the violated threshold) so callers can
    surface the admissible range in diagnostics.
    """

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class StateError(ConvexIneqError):
    """An object is not in the state an operation requires."""


class TuningFailureError(ConvexIneqError):
    """Metropolis step-size adaptation failed to reach a usable acceptance."""


class ConfigError(ConvexIneqError):
    """A run configuration is malformed or incomplete."""
