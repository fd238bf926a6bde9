from typing import Optional


class ModelExtError(Exception):
    """Base class for every error raised by modelext."""

    exit_code = 1


class InputError(ModelExtError, ValueError):
    """Invalid arguments, violated preconditions or unreadable files."""

    exit_code = 2


class GridFormatError(InputError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(ModelExtError, ArithmeticError):
    """A computation could not be completed in floating point."""

    exit_code = 3


class SingularPivotError(NumericalError):
    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(f"{message} (index {index})")


class PropagationOverflowError(NumericalError):
    def __init__(self, message: str, where: float):
        self.where = where
        super().__init__(f"{message} (at {where})")


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message}: residual {residual:.3e} after {iterations} iterations")
