"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; the CLI maps them onto the documented exit codes.
"""

from __future__ import annotations


class RiccatiFlowError(Exception):
    """Base class for all package errors."""


class InvalidIndexError(RiccatiFlowError):
    """Generator or coefficient index out of range, or a degenerate pair."""


class DimensionError(RiccatiFlowError):
    """Shapes of the supplied operands are inconsistent."""


class ValidationError(RiccatiFlowError):
    """An input violates a structural requirement (Hermiticity, constraints...).

    Carries the offending residual when one is available.
    """

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class DomainError(RiccatiFlowError):
    """A time or parameter lies outside the schedule's domain."""


class ConfigError(RiccatiFlowError):
    """Malformed configuration file; message carries location context."""


class ChartBreakdownError(RiccatiFlowError):
    """The coset chart left its validity region during propagation.

    `time` is the detection time; `record` holds the partial trajectory
    accumulated up to the last accepted output point (may be None).
    """

    def __init__(self, message: str, time: float, record=None):
        super().__init__(message)
        self.time = time
        self.record = record


class NearSingularGaugeError(RiccatiFlowError):
    """A gauge factor lost positive-definiteness beyond tolerance."""


class DegenerateChartError(RiccatiFlowError):
    """Stereographic normalization degenerate at the requested point."""


class AntipodeError(RiccatiFlowError):
    """Requested chart inverse at the excluded antipodal point."""


class StepSizeUnderflowError(RiccatiFlowError):
    """Adaptive integrator could not meet tolerances above the minimum step."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class DivergenceError(RiccatiFlowError):
    """Propagated operator norm overflowed (expected for gain media)."""

    def __init__(self, message: str, time: float | None = None, record=None):
        super().__init__(message)
        self.time = time
        self.record = record
