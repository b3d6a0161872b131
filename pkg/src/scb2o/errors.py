"""Exception hierarchy shared by every module."""


class SCB2OError(Exception):
    """Base class for all library errors."""


class DomainError(SCB2OError, ValueError):
    """An input lies outside the domain of an operation."""


class ConfigError(SCB2OError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class SolverError(SCB2OError, RuntimeError):
    """The soft-quantile root finder did not converge."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(SCB2OError, FloatingPointError):
    """A particle update produced a non-finite value."""

    def __init__(self, message, index=None, step=None):
        super().__init__(message)
        self.index = index
        self.step = step


class InvariantError(SCB2OError, AssertionError):
    """A certified inequality was violated; indicates a bug."""


class ConstraintError(SCB2OError, ValueError):
    """No admissible auxiliary constant exists for the requested setting."""
