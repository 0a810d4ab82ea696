"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map it without a lookup
table: 2 for configuration/usage problems, 3 for capacity limits, 4 for
numerical failures.
"""


class QPressError(Exception):
    exit_code = 1


class UsageError(QPressError, ValueError):
    exit_code = 2


class FormatError(UsageError):
    """Malformed potential table or document."""


class LengthError(UsageError):
    """Word too short for the requested Birkhoff sum."""


class CapacityError(QPressError):
    exit_code = 3


class NumericError(QPressError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RangeError(NumericError):
    """Exponent range exceeded when building a transfer matrix."""


class ResolutionError(NumericError):
    """Maximum search grid too coarse to bracket a stationary point."""


class FlatMaximumError(NumericError):
    """No negative even derivative found up to the supported order."""
