"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for validation failures, 3 for numeric-contract failures, 4 for resource caps.
"""


class RnChainError(Exception):
    exit_code = 2


class ValidationError(RnChainError):
    exit_code = 2


class NumericContractError(RnChainError):
    exit_code = 3


class ResourceCapError(RnChainError):
    exit_code = 4


class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class InvalidStrategy(ValidationError):
    pass


class SumMismatch(ValidationError):
    pass


class NotOns(ValidationError):
    """Raised when a sequential strategy fails the operational no-signalling check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotState(ValidationError):
    pass


class NotHermitian(NumericContractError):
    pass


class NotCP(NumericContractError):
    pass


class NotUnitary(NumericContractError):
    pass


class NotContraction(NumericContractError):
    pass


class NotDominated(NumericContractError):
    pass


class RangeViolation(NumericContractError):
    pass


class NotInCommutant(NumericContractError):
    pass


class NotCommuting(NumericContractError):
    pass


class TooLarge(ResourceCapError):
    pass
