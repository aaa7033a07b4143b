import typing as tp

import numpy as np


class Exit(Exception):
    """Error carrying the process exit code the CLI reports for it."""

    code = 1

    def __init__(self, message: str, code: int | None = None) -> None:
        self.message = message
        if code is not None:
            self.code = code
        super().__init__(message)


class InputError(Exit):
    """Invalid arguments, data or configuration"""

    code = 2


class DimensionError(InputError):
    pass


class DegenerateDataError(InputError):
    pass


class IOFailure(Exit):
    code = 3


class NumericalError(Exit):
    code = 4


class SingularMatrixError(NumericalError):
    def __init__(self, message: str, column: int) -> None:
        self.column = column
        super().__init__(message)


class InstabilityError(NumericalError):
    def __init__(self, message: str, time: float) -> None:
        self.time = time
        super().__init__(message)


class NonConvergenceError(NumericalError):
    def __init__(self, message: str, state: np.ndarray) -> None:
        self.state = state
        super().__init__(message)


def exit_if(condition: tp.Any, message: str, code: int = 1) -> None:
    """Helper method to exit if condition is truthy"""
    if condition:
        raise Exit(message, code)


def input_error_if(condition: tp.Any, message: str) -> None:
    if condition:
        raise InputError(message)


def check_dimension(actual: int, expected: int, what: str) -> None:
    if actual != expected:
        raise DimensionError(f"{what}: expected dimension {expected}, got {actual}")


def as_finite_array(values: tp.Any, what: str, ndim: int) -> np.ndarray:
    """Convert to a float array of the given rank, rejecting NaN/inf entries."""
    array = np.asarray(values, dtype=float)
    if array.ndim != ndim:
        raise DimensionError(f"{what}: expected {ndim}-d array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InputError(f"{what}: entries must be finite")
    return array
