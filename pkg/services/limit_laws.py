"""Non-Gaussian limit laws of the cross-validated risk, finite-n simulators and distribution distances."""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from models.data import (
    Dataset,
    GaussianLocationSpec,
    SeedSpec,
    SymmetricBernoulliSpec,
    UniformThresholdSpec,
)
from services.exceptions import InvalidArgumentError
from services.fitters import MeanFitter, NearestNeighborFitter
from services.folds import make_partition
from services.replicates import parallel_map
from services.risk_service import cv_risk, expected_risk
from services.sampling import sample_dataset

logger = logging.getLogger(__name__)


class EmpiricalDistribution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray = Field(..., description="Sorted sample values")

    @model_validator(mode="before")
    @classmethod
    def _sort(cls, values):
        if isinstance(values, dict) and "samples" in values:
            arr = np.sort(np.asarray(values["samples"], dtype=float).ravel())
            arr.setflags(write=False)
            values = {**values, "samples": arr}
        return values

    @model_validator(mode="after")
    def _non_empty(self):
        if self.samples.size < 1:
            raise ValueError("an empirical distribution needs at least one sample")
        return self

    @classmethod
    def of(cls, values) -> "EmpiricalDistribution":
        return cls(samples=values)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def mean(self) -> float:
        return float(self.samples.mean())


def _as_samples(d: Union[EmpiricalDistribution, np.ndarray]) -> np.ndarray:
    if isinstance(d, EmpiricalDistribution):
        return d.samples
    arr = np.asarray(d, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidArgumentError("distance between empty samples is undefined")
    return arr


def ks_distance(a, b) -> float:
    """Sup-norm distance between the two empirical CDFs."""
    return float(stats.ks_2samp(_as_samples(a), _as_samples(b)).statistic)


def wasserstein1(a, b) -> float:
    """Exact empirical W1; unequal sample counts are handled without resampling."""
    return float(stats.wasserstein_distance(_as_samples(a), _as_samples(b)))


def _draws(seed: SeedSpec, size: Optional[int], sampler):
    rng = seed.generator()
    out = sampler(rng, 1 if size is None else size)
    return float(out[0]) if size is None else out


def _signs(rng: np.random.Generator, size) -> np.ndarray:
    return 2.0 * rng.integers(0, 2, size=size) - 1.0


def _poisson_tail(rng: np.random.Generator, rate: np.ndarray) -> np.ndarray:
    """1(rate >= 0) * (1 + Poisson(rate))."""
    hit = rate >= 0
    return np.where(hit, 1.0 + rng.poisson(np.where(hit, rate, 0.0)), 0.0)


# --- 2-fold 1-NN on a threshold label ----------------------------------------

def nn_limit_draws(rng: np.random.Generator, size: int) -> np.ndarray:
    """Law displayed for sqrt(n) times the 2-fold 1-NN cv risk, taken term by term."""
    N = rng.exponential(0.5, size=(2, size))
    U = rng.exponential(1.0, size=(2, size))
    s = _signs(rng, (2, size))
    rd1 = s[0] * N[0] + s[1] * U[1]
    rd2 = s[1] * N[1] + s[0] * U[0]
    rs1 = rd1 - 2.0 * s[1] * N[1]
    rs2 = rd2 - 2.0 * s[0] * N[0]
    different = s[0] * s[1] == -1
    r1 = np.where(different, rd1, rs1)
    r2 = np.where(different, rd2, rs2)
    return _poisson_tail(rng, r1) + _poisson_tail(rng, r2)


def nn_exact_limit_draws(rng: np.random.Generator, size: int) -> np.ndarray:
    """Error count of 2-fold 1-NN from the local Poisson picture around the threshold.

    Per fold a: N_a is half the gap between its two points nearest the threshold and s_a
    the side the decision midpoint falls on; V_a is the smaller of the two gaps. Fold b
    misclassifies the held-out points of fold a lying between the threshold and b's
    midpoint.
    """
    N = rng.exponential(0.5, size=(2, size))
    V = rng.exponential(0.5, size=(2, size))
    s = _signs(rng, (2, size))
    same = s[0] == s[1]
    # held-out fold 0 judged by fold 1, and the reverse
    r01 = N[1] - (V[0] + 2.0 * N[0] * same)
    r10 = N[0] - (V[1] + 2.0 * N[1] * same)
    return _poisson_tail(rng, r01) + _poisson_tail(rng, r10)


def nn_split_limit_draws(rng: np.random.Generator, size: int) -> np.ndarray:
    """Poisson(N) with N exponential of mean 1/2: errors on the held-out fold."""
    return rng.poisson(rng.exponential(0.5, size=size)).astype(float)


def sample_nn_limit(seed: SeedSpec, size: Optional[int] = None):
    return _draws(seed, size, nn_limit_draws)


def sample_nn_exact_limit(seed: SeedSpec, size: Optional[int] = None):
    return _draws(seed, size, nn_exact_limit_draws)


def sample_nn_split_limit(seed: SeedSpec, size: Optional[int] = None):
    return _draws(seed, size, nn_split_limit_draws)


def simulate_nn_cv(n: int, seed: SeedSpec) -> Tuple[float, float]:
    """(sqrt(n) R_cv, sqrt(n) R_split) for 2-fold 1-NN with loss sqrt(n) * 1(error).

    Both are integers: sqrt(n) R_cv counts all misclassified points and sqrt(n) R_split
    is twice the errors on fold 0.
    """
    if n < 4 or n % 2:
        raise InvalidArgumentError(f"n must be even and at least 4, got {n}")
    data = sample_dataset(UniformThresholdSpec(threshold=0.5), n, seed)
    report = cv_risk(data, make_partition(n, 2), NearestNeighborFitter(eval_scale=n))
    root = math.sqrt(n)
    return float(np.rint(root * report.cv_risk)), float(np.rint(root * report.split_risk))


# --- noiseless mean estimation -----------------------------------------------

def noiseless_limit_draws(rng: np.random.Generator, size: int, K: int) -> np.ndarray:
    """(1/4K) sum_i (Y_i - mean of the other Y_j)^2, Y standard normal."""
    Y = rng.standard_normal((size, K))
    others = (Y.sum(axis=1, keepdims=True) - Y) / (K - 1)
    return ((Y - others) ** 2).sum(axis=1) / (4.0 * K)


def noiseless_exact_limit_draws(rng: np.random.Generator, size: int, K: int) -> np.ndarray:
    """sum_j (M_j^2 - 2 Y_j M_j) with M_j the mean of the other Y: the limit of n(R_cv - 1)."""
    Y = rng.standard_normal((size, K))
    M = (Y.sum(axis=1, keepdims=True) - Y) / (K - 1)
    return (M ** 2 - 2.0 * Y * M).sum(axis=1)


def _check_K(K: int):
    if K < 2:
        raise InvalidArgumentError(f"K must be at least 2, got {K}")


def sample_noiseless_limit(K: int, seed: SeedSpec, size: Optional[int] = None):
    _check_K(K)
    return _draws(seed, size, lambda rng, m: noiseless_limit_draws(rng, m, K))


def sample_noiseless_exact_limit(K: int, seed: SeedSpec, size: Optional[int] = None):
    _check_K(K)
    return _draws(seed, size, lambda rng, m: noiseless_exact_limit_draws(rng, m, K))


def noiseless_statistic(data: Dataset, K: int) -> float:
    """n (R_cv - 1) for the mean estimator under square loss."""
    report = cv_risk(data, make_partition(data.n, K), MeanFitter())
    return data.n * (report.cv_risk - 1.0)


def simulate_noiseless_cv(n: int, K: int, seed: SeedSpec) -> float:
    _check_K(K)
    if n < 2 * K:
        raise InvalidArgumentError(f"n must be at least 2K, got n={n}, K={K}")
    if n % K:
        logger.warning(f"n={n} is not a multiple of K={K}; fold sizes differ by one")
    return noiseless_statistic(sample_dataset(SymmetricBernoulliSpec(), n, seed), K)


# --- CLT check ---------------------------------------------------------------

def normal_reference(sigma_sq: float, size: int = 100_000) -> np.ndarray:
    """Deterministic quantile grid of N(0, sigma^2)."""
    grid = (np.arange(size) + 0.5) / size
    return math.sqrt(sigma_sq) * stats.norm.ppf(grid)


def clt_distance(n: int, K: int, replicates: int, seed: SeedSpec, threads: int = 1) -> float:
    """W1 between sqrt(n)(R_cv - expected risk) and its Gaussian limit, mean estimation on N(0, 1).

    Training and evaluation losses coincide, so the limit variance is Var((X - mu)^2) = 2.
    """
    gen = GaussianLocationSpec(mean=0.0, var=1.0)
    fitter = MeanFitter()
    target = expected_risk(gen, fitter, n, K, replicates=2, seed=seed).value
    partition = make_partition(n, K)

    def one(r: int) -> float:
        data = sample_dataset(gen, n, seed.child(r))
        return math.sqrt(n) * (cv_risk(data, partition, fitter).cv_risk - target)

    values = np.asarray(parallel_map(one, range(replicates), threads))
    distance = wasserstein1(values, normal_reference(2.0))
    logger.info(f"CLT check at n={n}, K={K}: W1 = {distance:.4f} over {replicates} replicates")
    return distance
