"""Exception hierarchy.

Input problems derive from :class:`PLMInputError` and numerical problems
from :class:`PLMNumericalError`; the CLI maps them to exit codes 2 and 3.
"""


class PLMError(Exception):
    """Base class for every error raised by this package."""


class PLMInputError(PLMError, ValueError):
    """Invalid user input or configuration."""


class PLMNumericalError(PLMError, ArithmeticError):
    """A numerical or model-identifiability failure."""


class InvalidPartitionError(PLMInputError):
    pass


class OutOfDomainError(PLMInputError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DimensionError(PLMInputError):
    pass


class ConfigurationError(PLMInputError):
    pass


class PenaltyDomainError(PLMInputError):
    pass


class SolverFailureError(PLMNumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DivergenceError(PLMNumericalError):
    pass


class DegenerateColumnError(PLMNumericalError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class GCVUndefinedError(PLMNumericalError):
    pass
