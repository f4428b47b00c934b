import csv
import hashlib
import io
import json
from enum import Enum
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Annotated

from models.data import GammaDistribution, GaussianLinearSpec, DistributionSpec


class OutputFormat(str, Enum):
    csv = "csv"
    md = "md"


class LimitLawKind(str, Enum):
    nn = "nn"
    noiseless = "noiseless"


def reference_design() -> GaussianLinearSpec:
    """p = 3 Toeplitz design (1, 0.5, 0.25), unit noise, equal coefficients of norm one."""
    p = 3
    return GaussianLinearSpec.toeplitz([1.0, 0.5, 0.25], [p ** -0.5] * p, noise_var=1.0)


class ExperimentConfigBase(BaseModel):
    """Fields shared by every experiment. Only result-affecting fields enter the config hash."""

    model_config = ConfigDict(populate_by_name=True)

    master_seed: Optional[int] = Field(None, ge=0, lt=2**64, description="Master seed; falls back to CVRISK_MASTER_SEED")
    replicates: int = Field(..., ge=2, description="Monte Carlo replicates per sample size")
    threads: Optional[int] = Field(None, ge=1, description="Worker threads; does not affect results")
    out: Optional[str] = Field(None, description="Output path; stdout when absent")
    format: Optional[OutputFormat] = Field(None, description="Table format")

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json", by_alias=True, exclude={"threads", "out", "format"})
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class RidgeCoverageConfig(ExperimentConfigBase):
    experiment: Literal["ridge-coverage"] = "ridge-coverage"
    generator: GaussianLinearSpec = Field(default_factory=reference_design, description="Data-generating law")
    lambda_: float = Field(0.1, alias="lambda", ge=0, description="Ridge penalty on the normalized objective")
    K: int = Field(2, ge=2, description="Fold count on the half sample")
    n_grid: List[int] = Field([20, 40, 100, 200, 400, 800], description="Sample sizes")
    levels: List[float] = Field([0.80, 0.90, 0.95], description="Confidence levels 1 - alpha")
    replicates: int = Field(5000, ge=2)
    target_replicates: int = Field(100_000, ge=2, description="Replicates in the auxiliary target-risk pass")
    max_failure_rate: float = Field(0.01, ge=0, le=1)

    @field_validator("levels")
    @classmethod
    def _levels(cls, v):
        if any(not 0 < lv < 1 for lv in v):
            raise ValueError("confidence levels must lie in (0, 1)")
        return v

    @field_validator("n_grid")
    @classmethod
    def _grid(cls, v):
        if not v or any(n < 4 for n in v):
            raise ValueError("n_grid needs sample sizes of at least 4")
        return v


class RidgeSpeedupConfig(ExperimentConfigBase):
    experiment: Literal["ridge-speedup"] = "ridge-speedup"
    generator: GaussianLinearSpec = Field(default_factory=reference_design)
    lambda_: float = Field(1.0, alias="lambda", ge=0)
    K: int = Field(2, ge=2)
    n_grid: List[int] = Field([50, 100, 200, 500, 1000])
    replicates: int = Field(10_000, ge=2)
    max_failure_rate: float = Field(0.01, ge=0, le=1)


class LdaSpeedupConfig(ExperimentConfigBase):
    experiment: Literal["lda-speedup"] = "lda-speedup"
    class1: DistributionSpec = Field(
        default_factory=lambda: GammaDistribution(shape=1.0, scale=10.0),
        description="Law of Z given Y = 1",
    )
    class0: DistributionSpec = Field(
        default_factory=lambda: GammaDistribution(shape=1.0, scale=1.0),
        description="Law of Z given Y = 0",
    )
    n_grid: List[int] = Field([40, 80, 160, 320, 640, 1280, 2560, 5120])
    replicates: int = Field(10_000, ge=2)
    max_redraw_rate: float = Field(0.001, ge=0, le=1, description="Tolerated share of single-class redraws")


class LimitLawConfig(ExperimentConfigBase):
    experiment: Literal["limit-law"] = "limit-law"
    which: LimitLawKind = Field(LimitLawKind.nn)
    n: int = Field(10_000, ge=4, description="Finite sample size")
    K: int = Field(2, ge=2, description="Fold count (noiseless only; 1-NN is 2-fold)")
    replicates: int = Field(10_000, ge=2)
    limit_draws: int = Field(100_000, ge=2, description="Draws from each limit sampler")
    baseline_runs: int = Field(5, ge=1, description="Sampler self-distance runs behind the threshold")

    @model_validator(mode="after")
    def _shape(self):
        if self.which == LimitLawKind.nn and self.n % 2:
            raise ValueError("the 1-NN experiment needs an even n")
        if self.which == LimitLawKind.noiseless and self.n < 2 * self.K:
            raise ValueError("the noiseless experiment needs n >= 2K")
        return self


ExperimentConfig = Annotated[
    Union[RidgeCoverageConfig, RidgeSpeedupConfig, LdaSpeedupConfig, LimitLawConfig],
    Field(discriminator="experiment"),
]


class ResultRow(BaseModel):
    n: Optional[int] = Field(None, description="Sample size; None for limiting rows")
    statistic: str
    estimate: float
    standard_error: Optional[float] = None


class ResultTable(BaseModel):
    experiment: str
    rows: List[ResultRow] = Field(default_factory=list)
    config_hash: str
    master_seed: int
    runtime_seconds: float = 0.0
    metadata: Dict[str, Union[str, int, float]] = Field(default_factory=dict)

    def add(self, statistic: str, estimate: float, standard_error: Optional[float] = None, n: Optional[int] = None):
        self.rows.append(ResultRow(n=n, statistic=statistic, estimate=estimate, standard_error=standard_error))

    def get(self, statistic: str, n: Optional[int] = None) -> ResultRow:
        for row in self.rows:
            if row.statistic == statistic and row.n == n:
                return row
        raise KeyError(f"no row {statistic!r} at n={n}")

    def header_lines(self) -> List[str]:
        lines = [
            f"experiment={self.experiment}",
            f"config_hash={self.config_hash}",
            f"master_seed={self.master_seed}",
            f"runtime_seconds={self.runtime_seconds:.3f}",
        ]
        lines += [f"{k}={v}" for k, v in sorted(self.metadata.items())]
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "statistic", "estimate", "standard_error"])
        for row in self.rows:
            writer.writerow([
                "inf" if row.n is None else row.n,
                row.statistic,
                repr(row.estimate),
                "" if row.standard_error is None else repr(row.standard_error),
            ])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [f"<!-- {line} -->" for line in self.header_lines()]
        lines.append("| n | statistic | estimate | SE |")
        lines.append("|---:|:---|---:|---:|")
        for row in self.rows:
            se = "" if row.standard_error is None else f"{row.standard_error:.4f}"
            n = "∞" if row.n is None else str(row.n)
            lines.append(f"| {n} | {row.statistic} | {row.estimate:.4f} | {se} |")
        return "\n".join(lines) + "\n"

    def render(self, fmt: OutputFormat) -> str:
        return self.to_csv() if fmt == OutputFormat.csv else self.to_markdown()


class ModelKind(str, Enum):
    ridge = "ridge"
    mean = "mean"
    lda = "lda"


class ModelSpec(BaseModel):
    kind: ModelKind = Field(..., description="Model fitted on each training complement")
    lambda_: float = Field(0.1, alias="lambda", ge=0, description="Ridge penalty (ridge only)")

    model_config = ConfigDict(populate_by_name=True)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Accepts 'mean', 'lda', 'ridge' or 'ridge(0.5)'."""
        text = text.strip().lower()
        if text.startswith("ridge(") and text.endswith(")"):
            return cls(kind=ModelKind.ridge, lambda_=float(text[6:-1]))
        return cls(kind=ModelKind(text))


class AnalysisSummary(BaseModel):
    n: int
    K: int
    model: str
    cv_risk: float
    split_risk: float
    sigma1_hat: float
    s2_cv_hat: float
    method: str
    alpha: float
    ci_lower: float
    ci_upper: float
    dropped_rows: int = Field(0, description="Rows dropped to make the half-sample split even")

    def to_csv(self) -> str:
        buf = io.StringIO()
        data = self.model_dump()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(data))
        writer.writerow([repr(v) if isinstance(v, float) else v for v in data.values()])
        return buf.getvalue()

    def to_text(self) -> str:
        data = self.model_dump()
        width = max(len(k) for k in data)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in data.items()) + "\n"
