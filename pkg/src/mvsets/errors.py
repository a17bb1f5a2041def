"""Exception types shared across the package."""


class MVSetsError(Exception):
    """Base class for all package errors."""


class GridError(MVSetsError, ValueError):
    pass


class CoefficientError(MVSetsError, ValueError):
    pass


class AssemblyError(MVSetsError, RuntimeError):
    pass


class DomainMarginError(MVSetsError, ValueError):
    """A radius or probe point does not fit inside the computational window."""


class PreconditionError(MVSetsError, ValueError):
    pass


class ConvergenceError(MVSetsError, RuntimeError):
    """An iterative solver ran out of budget.

    ``residual`` carries the last measured residual (a float, or a report
    object for the obstacle solver).
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(MVSetsError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
