"""Exception types raised across the package."""


class PoseChainError(Exception):
    """Base class for all package errors."""


class NonUnitAxis(PoseChainError, ValueError):
    pass


class GimbalLock(PoseChainError, ValueError):
    pass


class DegenerateDirection(PoseChainError, ValueError):
    pass


class InconsistentChain(PoseChainError, ValueError):
    pass


class ZeroLengthLink(PoseChainError, ValueError):
    pass


class InvalidLength(PoseChainError, ValueError):
    pass


class OutOfBounds(PoseChainError, ValueError):
    def __init__(self, index, value, lo, hi):
        self.index = index
        self.value = value
        super().__init__(
            f"parameter {index} = {value!r} outside bound [{lo!r}, {hi!r}]")


class DegenerateTarget(PoseChainError, ValueError):
    pass


class SequenceTooShort(PoseChainError, ValueError):
    pass


class NonFiniteObjective(PoseChainError, FloatingPointError):
    pass


class InfeasibleSchedule(PoseChainError, ValueError):
    pass


class LengthMismatch(PoseChainError, ValueError):
    pass


class ValidationError(PoseChainError, ValueError):
    """A file failed schema validation; ``location`` points at the offender."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
