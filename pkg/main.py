from fastapi import FastAPI, File, UploadFile, Query, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
import uvicorn
from typing import List
import io
import logging

from config import configure_logging, get_settings
from models.asymptotics import (
    CalibrationResult,
    LdaAsymptoticsResponse,
    LdaProblem,
    RidgeAsymptoticsResponse,
    RidgeProblem,
)
from models.errors import ErrorResponse, ValidationErrorResponse, ErrorDetail
from models.experiment import AnalysisSummary, ModelSpec
from models.reports import IntervalCenter
from services.asymptotics_service import (
    calibrate_ridge_config,
    default_calibration_grid,
    lda_asymptotics,
    ridge_problem_asymptotics,
    speedup_factor,
)
from services.exceptions import CVRiskError, InvalidArgumentError, ParseError
from services.experiment_service import analyze_csv

settings = get_settings()
configure_logging(settings)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Cross-Validated Risk API",
    description="Cross-validated risk estimates, variance-based confidence intervals and limit variances",
    version="1.0.0"
)

# Global exception handlers
@app.exception_handler(CVRiskError)
async def cvrisk_error_handler(request: Request, exc: CVRiskError):
    logger.error(f"{type(exc).__name__}: {exc.message}")
    return JSONResponse(
        status_code=exc.status_code,
        content=ErrorResponse.from_error(exc).model_dump()
    )

@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    errors = []
    for error in exc.errors():
        errors.append(ErrorDetail(
            field=".".join(str(loc) for loc in error["loc"]),
            message=error["msg"],
            code=error["type"]
        ).model_dump())

    response = ValidationErrorResponse(
        message="Invalid request parameters",
        details=errors
    )

    logger.warning(f"Validation Error: {response.model_dump()}")
    return JSONResponse(
        status_code=422,
        content=response.model_dump()
    )

@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    logger.error(f"Unexpected error: {str(exc)}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content=ErrorResponse(
            error="Internal Server Error",
            message="An unexpected error occurred",
            status_code=500
        ).model_dump()
    )

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

@app.get("/")
async def root():
    return {"message": "Cross-Validated Risk API"}

@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.post("/analyze", response_model=AnalysisSummary)
async def analyze(
    file: UploadFile = File(..., description="CSV with header x1..xd and optional y"),
    K: int = Query(5, ge=2, description="Fold count"),
    model: str = Query("mean", description="mean, lda or ridge(<lambda>)"),
    alpha: float = Query(0.05, gt=0, lt=1, description="Miscoverage level"),
    center: IntervalCenter = Query(IntervalCenter.cv, description="Interval center"),
):
    if file.size and file.size > settings.max_upload_bytes:
        raise InvalidArgumentError(
            f"CSV too large. Maximum size is {settings.max_upload_bytes} bytes.",
            status_code=413,
        )
    contents = await file.read()
    if not contents:
        raise ParseError("empty CSV input", line=1)
    if len(contents) > settings.max_upload_bytes:
        raise InvalidArgumentError(
            f"CSV too large. Maximum size is {settings.max_upload_bytes} bytes.",
            status_code=413,
        )
    try:
        text = contents.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise ParseError(f"CSV is not valid UTF-8 at byte {e.start}")

    try:
        spec = ModelSpec.parse(model)
    except ValueError:
        raise InvalidArgumentError(f"Unknown model '{model}': expected mean, lda or ridge(<lambda>)")

    logger.info(f"Analyzing {file.filename} ({len(contents)} bytes) with K={K}, model={model}")
    _, _, summary = await run_in_threadpool(
        analyze_csv, io.StringIO(text), K, spec, alpha, center, None, settings.threads
    )
    return summary


@app.post("/asymptotics/ridge", response_model=RidgeAsymptoticsResponse)
async def ridge_limits(problem: RidgeProblem):
    q = ridge_problem_asymptotics(problem)
    factor = speedup_factor(problem.K, q)
    return RidgeAsymptoticsResponse(
        sigma1_sq=q.sigma1_sq,
        sigma2_sq=q.sigma2_sq,
        rho=q.rho,
        sigma_cv_sq=q.sigma_cv_sq,
        sigma_split_sq=q.sigma_split_sq,
        n_var_split=q.n_var_split(problem.K),
        n_var_cv=q.n_var_cv(problem.K),
        speedup=factor.variance_ratio,
        rate_factor=factor.rate_factor,
    )


@app.get("/asymptotics/ridge/calibration", response_model=List[CalibrationResult])
async def ridge_calibration(top: int = Query(5, ge=1, le=100, description="Number of candidates returned")):
    """Default penalty and fold-count grid ranked by distance to the reference limit variances."""
    return calibrate_ridge_config(default_calibration_grid())[:top]


@app.post("/asymptotics/lda", response_model=LdaAsymptoticsResponse)
async def lda_limits(problem: LdaProblem):
    limits = await run_in_threadpool(lda_asymptotics, problem.class1, problem.class0, problem.tolerance)
    split, cv = limits.variance_pair
    notes = ["classes relabelled so that class 1 has the larger mean"] if limits.swapped else None
    if cv <= 0:
        raise CVRiskError("sigma^2 + 2 rho vanishes; no Gaussian limit for the cv risk", status_code=422)
    return LdaAsymptoticsResponse(
        mu=limits.mu,
        Delta=limits.Delta,
        q=limits.q,
        sigma_sq=limits.sigma_sq,
        rho=limits.rho,
        n_var_split=split,
        n_var_cv=cv,
        speedup=split / cv,
        swapped=limits.swapped,
        notes=notes,
    )


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
