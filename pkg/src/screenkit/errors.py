"""Exception types shared across the package."""


class ScreenkitError(Exception):
    """Base class for package errors."""


class ParameterError(ScreenkitError, ValueError):
    """A model or map parameter violates its invariants."""


class DimensionError(ScreenkitError, ValueError):
    """Mismatched input dimensions."""


class ArgumentError(ScreenkitError, ValueError):
    """An argument is outside its allowed range."""


class UndefinedMetricError(ScreenkitError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class InsufficientDataError(ScreenkitError, ValueError):
    """Not enough usable data points (e.g. fewer than two log-odds bins)."""


class ValidationError(ScreenkitError, ValueError):
    """Structured input fails a consistency check."""


class NumericalError(ScreenkitError, RuntimeError):
    """A numerical routine failed to converge or hit a degenerate case."""


class CalibrationError(ScreenkitError, RuntimeError):
    """Profit calibration is impossible (e.g. empty approval set)."""


class WeakInstrumentError(ScreenkitError, RuntimeError):
    """First-stage coefficient is zero; 2SLS ratio undefined."""


class MomentUndefinedError(ScreenkitError, RuntimeError):
    """A simulated moment is undefined (empty approval or rejection set)."""


class EstimationFailedError(ScreenkitError, RuntimeError):
    """No optimizer start reached an acceptable fit."""
