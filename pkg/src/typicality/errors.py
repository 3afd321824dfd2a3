"""Exception hierarchy.

Everything numeric derives from :class:`NumericError` so the command line can
map it to a single exit status; bad input derives from :class:`UsageError`.
"""


class TypicalityError(Exception):
    pass


class UsageError(TypicalityError, ValueError):
    pass


class DimensionError(UsageError):
    pass


class CapacityError(UsageError):
    """Requested Hilbert space does not fit under the configured memory cap."""


class NumericError(TypicalityError, ArithmeticError):
    pass


class DomainError(NumericError, ValueError):
    """Argument outside the domain where the quantity is defined."""


class DegenerateGroundError(DomainError):
    pass


class RegimeError(DomainError):
    """Approximation evaluated outside its physical regime."""


class ConsistencyFault(NumericError):
    """A quantity that must be non-negative by construction came out negative."""


class InitializationError(NumericError):
    pass


class BoundError(NumericError):
    """Rejection-sampling envelope was exceeded."""


class FitError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass


class SingularityError(NumericError):
    pass
