"""Exception hierarchy. Every error knows the exit code the CLI reports for it."""
from __future__ import annotations


class EcoInferError(RuntimeError):
    exit_code = 1


class UsageError(EcoInferError):
    exit_code = 2


class BasisSpecError(EcoInferError):
    exit_code = 3


class InputFileError(EcoInferError):
    exit_code = 4


class MissingCovariateError(EcoInferError):
    exit_code = 5


class DataValidationError(EcoInferError):
    exit_code = 6


class EstimationError(EcoInferError):
    exit_code = 7


class CollinearityError(EstimationError):
    def __init__(self, message: str, columns: list[str] | None = None) -> None:
        super().__init__(message)
        self.columns = columns or []


class ConvergenceError(EstimationError):
    pass


class ConfigurationError(EcoInferError):
    exit_code = 8
