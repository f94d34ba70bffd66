"""Exception types raised by the package."""


class ECFError(Exception):
    """Base class for all package errors."""


class ValidationError(ECFError, ValueError):
    """Input data or arguments violate a documented precondition."""


class DegenerateDataError(ECFError, ArithmeticError):
    """The data carry no usable variation for the requested statistic."""
