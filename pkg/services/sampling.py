import logging

import numpy as np

from models.data import (
    Dataset,
    GaussianLinearSpec,
    GaussianLocationSpec,
    ResponseKind,
    SeedSpec,
    SymmetricBernoulliSpec,
    TwoClassMixtureSpec,
    UniformThresholdSpec,
)
from services.exceptions import InvalidArgumentError, UnsupportedError

logger = logging.getLogger(__name__)


def design_factor(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of a design covariance; rejects matrices that are not SPD."""
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T):
        raise InvalidArgumentError("design covariance must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError("design covariance is not positive definite")


def sample_dataset(gen, n: int, seed: SeedSpec) -> Dataset:
    """Draw n i.i.d. rows from `gen`. Bit-reproducible given `seed`."""
    if n < 2:
        raise InvalidArgumentError(f"n must be at least 2, got {n}")
    rng = seed.generator()
    return draw_from(gen, n, rng)


def draw_from(gen, n: int, rng: np.random.Generator) -> Dataset:
    if isinstance(gen, GaussianLinearSpec):
        chol = design_factor(gen.cov)
        z = rng.standard_normal((n, len(gen.theta_opt))) @ chol.T
        y = z @ gen.theta
        if gen.noise_var > 0:
            y = y + rng.normal(0.0, np.sqrt(gen.noise_var), size=n)
        return Dataset(features=z, response=y, kind=ResponseKind.real)

    if isinstance(gen, TwoClassMixtureSpec):
        labels = rng.integers(0, 2, size=n)
        n1 = int(labels.sum())
        z = np.empty(n)
        z[labels == 1] = gen.class1.sample(rng, n1)
        z[labels == 0] = gen.class0.sample(rng, n - n1)
        return Dataset(features=z, response=labels, kind=ResponseKind.label)

    if isinstance(gen, UniformThresholdSpec):
        z = rng.random(n)
        return Dataset(features=z, response=(z <= gen.threshold).astype(float), kind=ResponseKind.label)

    if isinstance(gen, SymmetricBernoulliSpec):
        return Dataset(features=2.0 * rng.integers(0, 2, size=n) - 1.0)

    if isinstance(gen, GaussianLocationSpec):
        return Dataset(features=rng.normal(gen.mean, np.sqrt(gen.var), size=n))

    raise UnsupportedError(f"unknown generator {type(gen).__name__}")
