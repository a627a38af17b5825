"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, wrong shapes,
unsupported combinations) and ``NumericalError`` (the input was well formed
but the computation could not proceed). The CLI maps them to exit codes 2
and 3 respectively.
"""


class PaiError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PaiError, ValueError):
    """Input failed validation."""


class NumericalError(PaiError, ArithmeticError):
    """A numerical procedure failed on valid input."""


class DimensionError(ValidationError):
    pass


class UnsupportedLayerError(ValidationError):
    pass


class UnsupportedKernelError(ValidationError):
    pass


class TooFewPointsError(ValidationError):
    pass


class UnderdeterminedError(ValidationError):
    pass


class SearchTooLargeError(ValidationError):
    pass


class StateError(ValidationError):
    pass


class NotInvertibleError(NumericalError):
    pass


class IllConditionedError(NotInvertibleError):
    pass


class RankDeficientError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class NoFeasibleModelError(NumericalError):
    pass


class DegenerateDataError(NumericalError):
    pass
