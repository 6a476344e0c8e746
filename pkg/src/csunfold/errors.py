"""Exception hierarchy shared by all csunfold modules."""


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class IngestionError(ToolkitError):
    """An input file could not be read or decoded."""


class ConfigurationError(ToolkitError, ValueError):
    """A configuration value or combination of values is invalid."""


class DimensionError(ToolkitError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class SingularityError(ToolkitError, ValueError):
    """A matrix required to be full rank is (numerically) rank deficient."""


class NumericError(ToolkitError, ArithmeticError):
    """A computation produced non-finite values or diverged."""
