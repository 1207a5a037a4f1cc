"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class NumericalConditioningError(ArithmeticError):
    """Raised when a covariance matrix cannot be factorized even after jitter escalation."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class NotStabilizableError(ArithmeticError):
    pass


class ConfigError(ValueError):
    """Config file failed schema validation; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class RunAborted(NumericalConditioningError):
    """Numerical failure inside an optimization run; ``log`` holds the iterations completed so far."""

    def __init__(self, message, log=None, jitter=None):
        super().__init__(message, jitter=jitter)
        self.log = log
