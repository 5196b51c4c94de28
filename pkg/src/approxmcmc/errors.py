"""Exception hierarchy shared by all modules."""


class ApproxMCMCError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 2


class ParameterError(ApproxMCMCError, ValueError):
    exit_code = 1


class ConfigError(ParameterError):
    pass


class UnsupportedModelError(ApproxMCMCError):
    exit_code = 1


class NumericOverflowError(ApproxMCMCError, FloatingPointError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class InfeasibleError(ApproxMCMCError):
    pass


class MultiplicityError(ApproxMCMCError):
    def __init__(self, message, classes=()):
        super().__init__(message)
        self.classes = [list(c) for c in classes]


class NotMixedError(ApproxMCMCError):
    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


class BudgetExceededError(ApproxMCMCError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class FitError(ParameterError):
    pass
