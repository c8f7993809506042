"""Exception types raised across the package."""


class DomaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DomaError, ValueError):
    """Shapes, dimensions or values that violate an operation's preconditions."""


class DivergenceError(DomaError, ArithmeticError):
    """ABGD produced a non-finite loss or parameter.

    The partial trace up to the failure is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class InitializationError(DomaError):
    """Every spectral-initialization candidate diverged."""


class InfeasibleSpecError(DomaError):
    """Ground-truth rejection sampling gave up."""


class SearchTooLargeError(DomaError):
    """Exhaustive permutation search would exceed the enumeration budget."""
