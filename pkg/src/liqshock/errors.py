"""Exception hierarchy shared by every module."""


class LiqShockError(Exception):
    """Base class for all package errors."""


class ValidationError(LiqShockError, ValueError):
    """Invalid user input. ``field`` names the offending parameter path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(LiqShockError, ValueError):
    pass


class DegenerateSpectrum(LiqShockError):
    pass


class IllposedFactors(LiqShockError):
    pass


class SolverError(LiqShockError):
    pass


class SolverOverflow(SolverError, OverflowError):
    pass


class NonFinite(SolverError):
    pass


class SingularMatrix(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class MonotonicityViolation(SolverError):
    def __init__(self, message, worst=0.0):
        super().__init__(message)
        self.worst = worst


class AuditFailure(LiqShockError):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload
