"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit code 1),
numerical failures from :class:`NumericalFailure` (CLI exit code 2).
"""


class FdlError(Exception):
    """Base class for all package errors."""


class ValidationError(FdlError, ValueError):
    pass


class NumericalFailure(FdlError, ArithmeticError):
    pass


# self-affine patterns and curves
class SumMismatch(ValidationError):
    pass


class RangeViolation(ValidationError):
    pass


class ParityImpossible(ValidationError):
    pass


class BaseOrder(ValidationError):
    pass


class Overflow(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


# singular integrals
class AlphaOutOfRange(ValidationError):
    pass


class ZeroIncrement(ValidationError):
    pass


class ExponentMismatch(ValidationError):
    pass


class DegenerateNorm(NumericalFailure):
    pass


class NonConvergence(NumericalFailure):
    pass


# propagator
class NotAdmissible(ValidationError):
    pass


class TauZero(ValidationError):
    pass


class NotContained(ValidationError):
    pass


# solver
class NaNDetected(NumericalFailure):
    """Raised when a run produces non-finite values.

    ``partial`` carries whatever the run produced before the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class Divergence(NumericalFailure):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
