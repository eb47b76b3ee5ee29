"""Exception types shared across the package."""


class QueueqError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(QueueqError, ValueError):
    """An argument is outside its admissible range."""


class InfeasibleCvError(InvalidParameterError):
    """A requested coefficient of variation cannot be realized.

    The message names the constraint that failed (CV floor, negative
    discriminant, mixture weight or component mean out of range).
    """


class NoRootError(QueueqError, RuntimeError):
    """The solver exhausted its search without meeting the mass tolerance."""

    def __init__(self, message: str, min_residual: float | None = None):
        super().__init__(message)
        self.min_residual = min_residual


class KmaxExceededError(QueueqError, RuntimeError):
    """Support growth hit the hard cap before tail mass fell below tolerance."""


class ConfigError(QueueqError, ValueError):
    """A run configuration failed validation; the message names the key."""
