"""Exception and warning types shared across the package."""

from __future__ import annotations


class LangevinError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LangevinError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ToleranceNotMet(LangevinError):
    """Adaptive quadrature could not reach the requested tolerance.

    The best available estimate is attached as ``result`` (a QuadResult).
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class HorizonExceededError(LangevinError):
    """A killed path did not hit the boundary within the internal step cap.

    Signals that the configured base step is too small for the lifetime tail.
    """


class RejectionStallError(LangevinError):
    """A rejection sampler exceeded its proposal budget (envelope bug)."""


class DegenerateSampleError(LangevinError, ValueError):
    """A statistical test received a degenerate sample."""


class SparseBinsError(LangevinError, ValueError):
    """A binned test has bins with too little expected mass.

    ``bins`` lists the offending bin indices.
    """

    def __init__(self, message, bins=()):
        super().__init__(message)
        self.bins = tuple(bins)


class ValidationError(LangevinError, ValueError):
    """An experiment spec or claim id failed validation."""


class StarvationWarning(UserWarning):
    """A conditional ensemble retained too few items for stable estimates."""


class GridTruncationWarning(UserWarning):
    """A mixture over a finite grid carries non-negligible truncation mass."""
