from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class ErrorCode(str, Enum):
    invalid_argument = "INVALID_ARGUMENT"
    config_error = "CONFIG_ERROR"
    parse_error = "PARSE_ERROR"
    unsupported = "UNSUPPORTED"
    numerical_failure = "NUMERICAL_FAILURE"
    solver_failure = "SOLVER_FAILURE"
    degenerate_limit = "DEGENERATE_LIMIT"
    degenerate_fit = "DEGENERATE_FIT"
    experiment_failure = "EXPERIMENT_FAILURE"


class ErrorDetail(BaseModel):
    """One offending request field, as reported by request validation."""

    field: Optional[str] = None
    message: str
    code: Optional[str] = None


class ErrorResponse(BaseModel):
    error: str = Field(..., description="ErrorCode value, or a generic label for unexpected failures")
    message: str
    details: List[Dict[str, Any]] = Field(default_factory=list, description="Locations such as line/column or fold")
    status_code: int

    @classmethod
    def from_error(cls, exc: Any) -> "ErrorResponse":
        """Envelope for a CVRiskError; details keep their keys (line, column, fold, swap_index, residual)."""
        return cls(error=exc.error_code, message=exc.message, details=exc.details, status_code=exc.status_code)


class ValidationErrorResponse(BaseModel):
    error: str = "Validation Error"
    message: str
    details: List[ErrorDetail]
    status_code: int = 422
