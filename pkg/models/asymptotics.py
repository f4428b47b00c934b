from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from models.data import DistributionSpec, GammaDistribution, GaussianLinearSpec
from models.experiment import reference_design


class RidgeProblem(BaseModel):
    """Gaussian-linear law plus the ridge penalty and fold count it is cross-validated with."""

    model_config = ConfigDict(populate_by_name=True)

    generator: GaussianLinearSpec = Field(default_factory=reference_design)
    lambda_: float = Field(1.0, alias="lambda", ge=0, description="Penalty on the normalized objective")
    K: int = Field(2, ge=2, description="Fold count")
    gaussian_design: bool = Field(True, description="Use the Gaussian-design closed forms")


class LdaProblem(BaseModel):
    class1: DistributionSpec = Field(default_factory=lambda: GammaDistribution(shape=10.0, scale=0.15))
    class0: DistributionSpec = Field(default_factory=lambda: GammaDistribution(shape=1.0, scale=1.0))
    tolerance: float = Field(1e-8, gt=0, description="Absolute quadrature tolerance")


class CalibrationTarget(BaseModel):
    n_var_split: float = Field(7.140, description="Target limit of n Var(split risk)")
    n_var_cv: float = Field(2.124, description="Target limit of n Var(cv risk)")


class CalibrationResult(BaseModel):
    problem: RidgeProblem
    n_var_split: float
    n_var_cv: float
    speedup: float
    score: float = Field(..., description="Largest absolute deviation from the targets")


class RidgeAsymptoticsResponse(BaseModel):
    sigma1_sq: float
    sigma2_sq: float
    rho: float
    sigma_cv_sq: float
    sigma_split_sq: float
    n_var_split: float
    n_var_cv: float
    speedup: float
    rate_factor: float


class LdaAsymptoticsResponse(BaseModel):
    mu: float
    Delta: float
    q: float
    sigma_sq: float
    rho: float
    n_var_split: float
    n_var_cv: float
    speedup: float
    swapped: bool
    notes: Optional[List[str]] = None
