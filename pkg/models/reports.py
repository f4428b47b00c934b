import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.data import FoldPartition
from models.hypothesis import Hypothesis


class RiskReport(BaseModel):
    """Cross-validated and split risk, with everything needed to avoid refitting downstream."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cv_risk: float = Field(..., description="Mean of all n held-out losses")
    split_risk: float = Field(..., description="Mean loss on fold 0 under its complement hypothesis")
    per_fold_losses: List[np.ndarray] = Field(..., description="Held-out losses, one array per fold")
    hypotheses: List[Hypothesis] = Field(..., description="Fold hypotheses, fit on each complement")
    partition: FoldPartition

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def n(self) -> int:
        return self.partition.n

    def losses_by_index(self) -> np.ndarray:
        out = np.empty(self.n)
        for j, block in enumerate(self.partition.blocks()):
            out[block] = self.per_fold_losses[j]
        return out


class TargetKind(str, Enum):
    hypothesis = "hypothesis"
    ensemble_average = "ensemble-average"
    expected = "expected"


class TargetRisk(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    kind: TargetKind
    standard_error: Optional[float] = Field(None, description="Monte Carlo SE, if estimated")

    @model_validator(mode="after")
    def _finite(self):
        if not math.isfinite(self.value):
            raise ValueError("target risk must be finite")
        return self


class VarianceMethod(str, Enum):
    generic_refit = "generic-refit"
    ridge_woodbury = "ridge-woodbury"


class IntervalCenter(str, Enum):
    cv = "cv"
    half_cv = "half_cv"


class VarianceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma1_hat: float = Field(..., ge=0, description="Average within-fold variance of held-out losses")
    s2_cv_hat: float = Field(..., ge=0, description="Swap-one half-sample variance estimate")
    method: VarianceMethod
    center: IntervalCenter = IntervalCenter.cv
    point: float = Field(..., description="Risk estimate the interval is centred on")
    ci_lower: float
    ci_upper: float
    alpha: float = Field(..., gt=0, lt=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.ci_lower > self.ci_upper:
            raise ValueError("ci_lower must not exceed ci_upper")
        return self


class AsymptoticQuantities(BaseModel):
    """sigma1^2, sigma2^2, rho and the derived cv / split variances."""

    model_config = ConfigDict(frozen=True)

    sigma1_sq: float = Field(..., ge=0)
    sigma2_sq: float = Field(..., ge=0)
    rho: float

    @property
    def sigma_cv_sq(self) -> float:
        return self.sigma1_sq + self.sigma2_sq + 2.0 * self.rho

    @property
    def sigma_split_sq(self) -> float:
        return self.sigma1_sq + self.sigma2_sq

    def n_var_split(self, K: int) -> float:
        """Limit of n*Var(split risk) when the held-out fold has n/K points."""
        return K * self.sigma1_sq + self.sigma2_sq * K / (K - 1)

    def n_var_cv(self, K: int) -> float:
        return self.sigma_cv_sq

    def speedup(self, K: int) -> "SpeedupFactor":
        from services.asymptotics_service import speedup_factor

        return speedup_factor(K, self)


class SpeedupFactor(BaseModel):
    model_config = ConfigDict(frozen=True)

    variance_ratio: float = Field(..., description="K * sigma_split^2 / sigma_cv^2")
    rate_factor: float = Field(..., description="Square root of the variance ratio")


class LdaAsymptotics(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float = Field(..., description="Midpoint of the population class means")
    Delta: float = Field(..., description="Class-1 minus class-0 density at the midpoint")
    q: float = Field(..., gt=0, lt=1, description="Limiting misclassification rate")
    sigma_sq: float = Field(..., ge=0)
    rho: float
    swapped: bool = Field(False, description="Whether the classes were relabelled so that mu1 > mu0")

    @property
    def sigma_cv_sq(self) -> float:
        return self.sigma_sq + 2.0 * self.rho

    @property
    def variance_pair(self) -> Tuple[float, float]:
        """(n Var split, n Var cv) for K = 2."""
        return 2.0 * self.sigma_sq, self.sigma_cv_sq

    @property
    def speedup(self) -> float:
        split, cv = self.variance_pair
        return split / cv


class RhoEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    standard_error: float = Field(0.0, ge=0, description="Zero for closed-form results")
    method: str = Field(..., description="closed-form or monte-carlo")
