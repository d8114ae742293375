"""Exception hierarchy shared by the solver, services and CLI."""


class StefanControlError(Exception):
    """Base class for all package errors."""


class ExpressionSyntaxError(StefanControlError):
    """Malformed coefficient expression."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(StefanControlError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier '{name}' at offset {position}")
        self.name = name
        self.position = position


class ExpressionDomainError(StefanControlError):
    """Division by zero, sqrt or log of a negative number, or a non-finite result."""


class ProblemConfigError(StefanControlError):
    """Invalid problem data or problem file."""


class InfeasibleGeometryError(StefanControlError):
    """The control set cannot be reached, e.g. s0 outside [delta, l]."""


class StepSolveError(StefanControlError):
    """Tridiagonal solve failed at time step k."""

    def __init__(self, k: int, reason: str):
        super().__init__(f"step {k}: {reason}")
        self.k = k
        self.reason = reason


class ReportWriteError(StefanControlError):
    def __init__(self, path, reason: str):
        super().__init__(f"cannot write {path}: {reason}")
        self.path = path
