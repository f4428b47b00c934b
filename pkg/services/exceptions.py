from typing import Optional, List, Any

from models.errors import ErrorCode


class CVRiskError(Exception):
    """Base error. Carries an HTTP status and a CLI exit code."""

    status_code = 500
    exit_code = 1
    default_code = "CVRISK_ERROR"

    def __init__(
        self,
        message: str,
        details: Optional[List[dict]] = None,
        error_code: Optional[str] = None,
        status_code: Optional[int] = None,
    ):
        self.message = message
        self.error_code = error_code or self.default_code
        self.details = details or []
        if status_code is not None:
            self.status_code = status_code
        super().__init__(message)


class InvalidArgumentError(CVRiskError, ValueError):
    status_code = 422
    exit_code = 2
    default_code = ErrorCode.invalid_argument.value


class ConfigError(CVRiskError):
    status_code = 422
    exit_code = 2
    default_code = ErrorCode.config_error.value


class ParseError(CVRiskError):
    status_code = 400
    exit_code = 2
    default_code = ErrorCode.parse_error.value

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        details = []
        if line is not None or column is not None:
            details.append({"line": line, "column": column})
        super().__init__(message, details=details)


class UnsupportedError(CVRiskError):
    status_code = 400
    exit_code = 2
    default_code = ErrorCode.unsupported.value


class NumericalFailureError(CVRiskError):
    status_code = 500
    exit_code = 3
    default_code = ErrorCode.numerical_failure.value


class SolverFailureError(NumericalFailureError):
    default_code = ErrorCode.solver_failure.value

    def __init__(self, message: str, last_iterate: Any = None, residual: Optional[float] = None):
        self.last_iterate = last_iterate
        self.residual = residual
        super().__init__(message, details=[{"residual": residual}])


class DegenerateLimitError(NumericalFailureError):
    default_code = ErrorCode.degenerate_limit.value


class DegenerateFitError(CVRiskError):
    status_code = 422
    exit_code = 3
    default_code = ErrorCode.degenerate_fit.value

    def __init__(self, message: str, fold: Optional[int] = None, swap_index: Optional[int] = None):
        self.fold = fold
        self.swap_index = swap_index
        details = []
        if fold is not None:
            details.append({"fold": fold})
        if swap_index is not None:
            details.append({"swap_index": swap_index})
        super().__init__(message, details=details)

    def at_fold(self, fold: int) -> "DegenerateFitError":
        return DegenerateFitError(f"fold {fold}: {self.message}", fold=fold, swap_index=self.swap_index)

    def at_swap(self, swap_index: int) -> "DegenerateFitError":
        return DegenerateFitError(f"swap {swap_index}: {self.message}", fold=self.fold, swap_index=swap_index)


class ExperimentFailureError(CVRiskError):
    status_code = 500
    exit_code = 3
    default_code = ErrorCode.experiment_failure.value
