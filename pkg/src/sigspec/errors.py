"""Exception types shared across the package."""


class SigspecError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(SigspecError, ValueError):
    """A physical or configuration parameter is outside its valid range."""


class ShapeError(SigspecError, ValueError):
    """An array has an incompatible shape or length."""


class DataError(SigspecError):
    """A file, manifest, or record is missing, truncated, or inconsistent."""


class NumericError(SigspecError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""
