"""Exception types shared across the package."""


class HistfunError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HistfunError, ValueError):
    """Invalid configuration (bad mesh size, negative weights, bad gamma, ...)."""


class DomainError(HistfunError, ValueError):
    """A point lies outside the triangular domain 0 <= s <= t <= T."""


class DataError(HistfunError, ValueError):
    """Malformed or inconsistent input data (grid mismatch, too few curves, ...)."""


class WeightError(HistfunError, ValueError):
    """Adaptive group weights are undefined (a group norm of the pilot fit is zero).

    Callers should fall back to the simple size-based weights.
    """


class ConvergenceError(HistfunError, RuntimeError):
    """An iterative solver failed to converge within its iteration budget."""

    def __init__(self, message, *, kkt_residual=None, trace=None):
        super().__init__(message)
        self.kkt_residual = kkt_residual
        self.trace = trace


class EstimationError(HistfunError, RuntimeError):
    """A direct linear solve failed (singular system)."""


class TuningError(HistfunError, RuntimeError):
    """Tuning-parameter selection failed."""
