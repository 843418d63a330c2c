"""Exception hierarchy shared by every module."""


class ThimvError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(ThimvError, ValueError):
    """An input violates a documented precondition or record invariant."""


class NumericalFailure(ThimvError, ArithmeticError):
    """A numerical kernel could not produce a result (singular matrix, no convergence)."""


class MeasurementFailure(ThimvError, RuntimeError):
    """An image-quality measurement is undefined for the given image."""
