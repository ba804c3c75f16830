"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class MonoshapeError(Exception):
    """Base class for all package errors."""


class InputError(MonoshapeError, ValueError):
    """An argument or tensor violates a documented precondition."""


class NumericalError(MonoshapeError, ArithmeticError):
    """A numerical routine failed (singular system, divergence, NaN)."""


class SingularSystemError(NumericalError):
    """SPD factorization failed; `pivot` is the offending pivot index."""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(NumericalError):
    """Iterative solve did not converge; `residual` is the last residual norm."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class OptimizerAbort(NumericalError):
    """Optimizer update aborted; `parameter` names the offending tensor."""

    def __init__(self, message: str, parameter: str):
        super().__init__(message)
        self.parameter = parameter


class DegenerateViewError(MonoshapeError):
    """The camera frustum does not contain any part of the robot."""


class DataError(MonoshapeError):
    """Dataset is missing, corrupt, or inconsistent with its manifest."""

    def __init__(self, message: str, files: list[str] | None = None):
        super().__init__(message)
        self.files = files or []
