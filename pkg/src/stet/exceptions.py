"""Exception types shared across the package."""


class StetError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(StetError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class RankError(StetError, ValueError):
    """Operand has the wrong rank (e.g. backward on a non-scalar)."""


class ConfigurationError(StetError, ValueError):
    """Invalid parameter or configuration value."""


class DegenerateSliceError(StetError, ValueError):
    """A softmax slice contains no valid (finite) entry."""


class DegenerateChannelError(StetError, ValueError):
    """A sensor channel is constant and cannot be range-normalized."""


class DegenerateSeriesError(StetError, ValueError):
    """A series has zero variance or zero range where a spread is required."""


class DegenerateMaskError(StetError, ValueError):
    """A mask selects no entries where at least one is required."""


class InsufficientDataError(StetError, ValueError):
    """Not enough data points for the requested statistic."""


class MappingError(StetError, KeyError):
    """A class id has no category assignment."""


class RangeError(StetError, ValueError):
    """Input values fall outside the documented domain."""


class NumericError(StetError, ArithmeticError):
    """Non-finite values were encountered during a numeric procedure."""


class ParseError(StetError, ValueError):
    """A dataset or config file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointMismatchError(StetError, ValueError):
    """A checkpoint's stored configuration differs from the expected one."""
