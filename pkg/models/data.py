from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from typing_extensions import Annotated


class ResponseKind(str, Enum):
    real = "real"
    label = "label"
    none = "none"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class Dataset(BaseModel):
    """Ordered i.i.d. observations: a feature matrix plus an optional response column."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray = Field(..., description="n x d feature matrix")
    response: Optional[np.ndarray] = Field(None, description="length-n responses or {0,1} labels")
    kind: ResponseKind = Field(ResponseKind.none, description="Response kind shared by all rows")

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, values):
        if isinstance(values, dict):
            feats = np.asarray(values.get("features"), dtype=float)
            if feats.ndim == 1:
                feats = feats.reshape(-1, 1)
            values = dict(values)
            values["features"] = _frozen_array(feats)
            if values.get("response") is not None:
                kind = ResponseKind(values.get("kind", ResponseKind.real))
                values["response"] = _frozen_array(values["response"], dtype=float)
                values["kind"] = kind
            else:
                values["kind"] = ResponseKind.none
        return values

    @model_validator(mode="after")
    def _check(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("a dataset needs at least one row")
        if self.response is not None:
            if self.response.shape != (n,):
                raise ValueError("response length must match the number of rows")
            if self.kind == ResponseKind.none:
                raise ValueError("response given but kind is 'none'")
            if self.kind == ResponseKind.label and not np.all(np.isin(self.response, (0.0, 1.0))):
                raise ValueError("labels must lie in {0, 1}")
        elif self.kind != ResponseKind.none:
            raise ValueError(f"kind '{self.kind.value}' requires a response column")
        return self

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            features=self.features[idx],
            response=None if self.response is None else self.response[idx],
            kind=self.kind,
        )

    def replace_row(self, i: int, source: "Dataset", j: int) -> "Dataset":
        """Copy of this dataset with row i replaced by row j of `source`."""
        feats = self.features.copy()
        feats[i] = source.features[j]
        resp = None
        if self.response is not None:
            resp = self.response.copy()
            resp[i] = source.response[j]
        return Dataset(features=feats, response=resp, kind=self.kind)

    def labels(self) -> np.ndarray:
        if self.kind != ResponseKind.label:
            raise ValueError("dataset carries no class labels")
        return self.response.astype(np.int64)


class FoldPartition(BaseModel):
    """Assignment of row indices 0..n-1 to K blocks whose sizes differ by at most one."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int = Field(..., ge=2)
    K: int = Field(..., ge=2)
    order: np.ndarray = Field(..., description="Row indices laid out block after block")
    sizes: Tuple[int, ...] = Field(..., description="Block sizes, largest first")

    @model_validator(mode="after")
    def _check(self):
        if self.K > self.n:
            raise ValueError("K cannot exceed n")
        if len(self.sizes) != self.K or sum(self.sizes) != self.n:
            raise ValueError("block sizes must cover n in K blocks")
        if max(self.sizes) - min(self.sizes) > 1:
            raise ValueError("block sizes may differ by at most one")
        if not np.array_equal(np.sort(self.order), np.arange(self.n)):
            raise ValueError("order must be a permutation of 0..n-1")
        return self

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.sizes)))

    @property
    def assignment(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.intp)
        out[self.order] = np.repeat(np.arange(self.K), self.sizes)
        return out

    def block(self, j: int) -> np.ndarray:
        lo, hi = self.offsets[j], self.offsets[j + 1]
        return self.order[lo:hi]

    def complement(self, j: int) -> np.ndarray:
        lo, hi = self.offsets[j], self.offsets[j + 1]
        return np.sort(np.concatenate((self.order[:lo], self.order[hi:])))

    def blocks(self) -> List[np.ndarray]:
        return [self.block(j) for j in range(self.K)]


class SeedSpec(BaseModel):
    """Counter-based stream identity: (master_seed, tag, stream_id, attempt)."""

    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(..., ge=0, lt=2**64)
    stream_id: int = Field(0, ge=0)
    tag: int = Field(0, ge=0, description="Separates experiment cells, e.g. the sample size")
    attempt: int = Field(0, ge=0, description="Redraw counter for rejected replicates")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.tag, self.stream_id, self.attempt))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, stream_id: int, tag: Optional[int] = None) -> "SeedSpec":
        return SeedSpec(
            master_seed=self.master_seed,
            stream_id=stream_id,
            tag=self.tag if tag is None else tag,
        )

    def retry(self) -> "SeedSpec":
        return self.model_copy(update={"attempt": self.attempt + 1})


# --- distributions ---------------------------------------------------------

class GammaDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Literal["gamma"] = "gamma"
    shape: float = Field(..., gt=0, description="Shape parameter a")
    scale: float = Field(..., gt=0, description="Scale parameter b (mean a*b)")

    def frozen(self):
        return stats.gamma(self.shape, scale=self.scale)

    @property
    def support_low(self) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size=size)

    def truncated_mean_below(self, x: float) -> float:
        """E[X 1(X <= x)] via the incomplete-gamma identity a*b*F_{a+1}(x)."""
        return self.shape * self.scale * stats.gamma.cdf(x, self.shape + 1.0, scale=self.scale)


class NormalDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Literal["normal"] = "normal"
    mean: float = 0.0
    std: float = Field(1.0, gt=0)

    def frozen(self):
        return stats.norm(self.mean, self.std)

    @property
    def support_low(self) -> float:
        return self.mean - 8.0 * self.std

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=size)

    def truncated_mean_below(self, x: float) -> float:
        z = (x - self.mean) / self.std
        return self.mean * stats.norm.cdf(z) - self.std * stats.norm.pdf(z)


DistributionSpec = Annotated[Union[GammaDistribution, NormalDistribution], Field(discriminator="family")]


# --- generators ------------------------------------------------------------

class GaussianLinearSpec(BaseModel):
    """Z ~ N(0, S_X), Y | Z ~ N(Z'theta_opt, noise_var)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian-linear"] = "gaussian-linear"
    covariance: List[List[float]] = Field(..., description="Design covariance S_X")
    theta_opt: List[float] = Field(..., description="Population least-squares coefficients")
    noise_var: float = Field(1.0, ge=0, description="Noise variance sigma^2")

    @model_validator(mode="after")
    def _shapes(self):
        d = len(self.theta_opt)
        if len(self.covariance) != d or any(len(row) != d for row in self.covariance):
            raise ValueError("covariance must be d x d with d = len(theta_opt)")
        return self

    @property
    def cov(self) -> np.ndarray:
        return np.asarray(self.covariance, dtype=float)

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_opt, dtype=float)

    @classmethod
    def toeplitz(cls, first_row: List[float], theta_opt: List[float], noise_var: float = 1.0):
        from scipy.linalg import toeplitz

        return cls(covariance=toeplitz(first_row).tolist(), theta_opt=theta_opt, noise_var=noise_var)


class TwoClassMixtureSpec(BaseModel):
    """Y ~ Bernoulli(1/2); Z | Y=1 ~ class1, Z | Y=0 ~ class0."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["two-class-mixture"] = "two-class-mixture"
    class1: DistributionSpec
    class0: DistributionSpec


class UniformThresholdSpec(BaseModel):
    """Z ~ U[0,1], Y = 1(Z <= threshold)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform-threshold"] = "uniform-threshold"
    threshold: float = Field(0.5, ge=0, le=1)


class SymmetricBernoulliSpec(BaseModel):
    """X uniform on {-1, +1}; no response."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["symmetric-bernoulli"] = "symmetric-bernoulli"


class GaussianLocationSpec(BaseModel):
    """X ~ N(mean, var); no response."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian-location"] = "gaussian-location"
    mean: float = 0.0
    var: float = Field(1.0, gt=0)


GeneratorSpec = Annotated[
    Union[
        GaussianLinearSpec,
        TwoClassMixtureSpec,
        UniformThresholdSpec,
        SymmetricBernoulliSpec,
        GaussianLocationSpec,
    ],
    Field(discriminator="kind"),
]
