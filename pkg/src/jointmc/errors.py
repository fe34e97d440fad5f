"""Exception types raised across the package."""


class JointMCError(Exception):
    """Base class for all package errors."""


class InvalidParameter(JointMCError, ValueError):
    pass


class GridMismatch(JointMCError, ValueError):
    pass


class DegenerateInput(JointMCError, ValueError):
    pass


class InvariantViolation(JointMCError):
    pass


class StepDiverged(JointMCError):
    """A time step produced non-finite values.

    ``pixel`` holds the (row, col) index of the first offending pixel so the
    caller can report it before retrying with a smaller step.
    """

    def __init__(self, message, pixel=None):
        super().__init__(message)
        self.pixel = pixel


class InversionFailed(JointMCError):
    pass


class LinearSolveFailed(JointMCError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
