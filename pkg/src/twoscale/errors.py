"""Exception types shared across the package.

The CLI maps these onto exit codes, so keep the hierarchy flat.
"""


class TwoScaleError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(TwoScaleError, ValueError):
    """Bad input: wrong shapes, violated sign conditions, malformed files."""


class ThresholdError(ValidationError):
    """A time-scale ratio was requested at or above the admissible bound."""

    def __init__(self, message, eps=None, threshold=None):
        super().__init__(message)
        self.eps = eps
        self.threshold = threshold


class NumericalError(TwoScaleError, ArithmeticError):
    """A numerical routine failed (non-convergence, overflow, step underflow)."""
