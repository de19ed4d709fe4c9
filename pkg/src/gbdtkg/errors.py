"""Exception types shared across the package."""


class GbdtKgError(Exception):
    """Base class for all package errors."""


class SchemaError(GbdtKgError, ValueError):
    """A file header does not match the expected columns."""


class ParseError(GbdtKgError, ValueError):
    """A value in an input file could not be parsed."""


class DataError(GbdtKgError, ValueError):
    """Input data violates a precondition (class counts, uniqueness, ...)."""


class CapacityError(DataError):
    """More samples were requested than exist."""


class ExhaustionError(DataError):
    """No valid candidate is left to draw from."""


class ShapeError(GbdtKgError, ValueError):
    """Array lengths or dimensions disagree."""


class NumericError(GbdtKgError, ArithmeticError):
    """A non-finite value appeared during a computation."""


class ConfigError(GbdtKgError, ValueError):
    """A pipeline configuration is invalid."""
