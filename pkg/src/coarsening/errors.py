"""Exception hierarchy shared by all solvers and the command line."""

from __future__ import annotations


class CoarseningError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class InvalidParameterError(CoarseningError, ValueError):
    exit_code = 3


class InvalidDataError(CoarseningError, ValueError):
    exit_code = 3


class ConstraintViolationError(CoarseningError):
    """A model constraint was lost during a run; ``time`` is when."""

    exit_code = 4

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NumericError(CoarseningError, ArithmeticError):
    exit_code = 4


class ConfigError(CoarseningError):
    exit_code = 2
