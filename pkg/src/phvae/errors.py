"""Exception hierarchy. Each top-level class carries the CLI exit code it maps to."""


class PhVaeError(Exception):
    exit_code = 1


class ConfigError(PhVaeError, ValueError):
    exit_code = 2


class DataError(PhVaeError, ValueError):
    exit_code = 3


class NumericalError(PhVaeError, ArithmeticError):
    exit_code = 4


class DimensionError(PhVaeError, ValueError):
    """Operand shapes do not conform."""

    exit_code = 4


class DomainError(NumericalError):
    """Input outside an operation's mathematical domain (e.g. log of a non-positive value)."""


class IdxFormatError(DataError):
    """Unexpected magic number or element type in an IDX file."""


class IdxTruncatedError(DataError):
    """IDX payload shorter than its header promises."""


class DownscaleError(DataError):
    """Requested image size does not evenly divide the source image."""
