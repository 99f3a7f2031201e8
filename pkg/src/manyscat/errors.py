"""Exception types shared across the package."""


class ScatterError(Exception):
    """Base class for all errors raised by manyscat."""


class DomainError(ScatterError, ValueError):
    """An input lies outside the domain of an operation (e.g. coincident points)."""


class ValidationError(ScatterError, ValueError):
    """A configuration or physical invariant was violated."""


class NumericalError(ScatterError, RuntimeError):
    """A solver failed: singular system, non-convergence, ill-conditioning."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class InfeasibleDesignError(ScatterError, ValueError):
    """A target material parameter cannot be realised with conducting inclusions."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending if offending is not None else []
