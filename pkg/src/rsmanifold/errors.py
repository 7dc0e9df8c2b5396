"""Exception hierarchy shared by all modules."""


class RSManifoldError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(RSManifoldError, ValueError):
    """Array shapes are inconsistent or a matrix lacks required structure."""


class DomainError(RSManifoldError, ValueError):
    """An argument is outside the domain the operation accepts."""


class DataError(RSManifoldError):
    """Input files are malformed, truncated or otherwise unreadable."""


class NumericalError(RSManifoldError, ArithmeticError):
    """A computation hit a numerical degeneracy."""


class NotPositiveDefiniteError(NumericalError):
    pass


class DegenerateInputError(NumericalError):
    """The input carries no usable signal (zero tensor, identical samples...)."""
