import numpy as np
import pytest

from models.data import Dataset, ResponseKind, SeedSpec
from models.experiment import reference_design
from models.hypothesis import MeanHypothesis
from services.fitters import Fitter
from services.sampling import sample_dataset


class ConstantFitter(Fitter):
    """Ignores its training rows; every held-out loss is `value`."""

    training_loss = "none"

    def __init__(self, value: float):
        self.value = float(value)

    def fit(self, data):
        return MeanHypothesis(theta=0.0)

    def losses(self, h, data):
        return np.full(data.n, self.value)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seed():
    return SeedSpec(master_seed=2024)


@pytest.fixture
def ridge_data(seed):
    """40 rows from the three-feature Toeplitz design."""
    return sample_dataset(reference_design(), 40, seed)


@pytest.fixture
def labelled_data(rng):
    z = np.concatenate([rng.normal(0.0, 1.0, 20), rng.normal(3.0, 1.0, 20)])
    labels = np.repeat([0.0, 1.0], 20)
    perm = rng.permutation(40)
    return Dataset(features=z[perm], response=labels[perm], kind=ResponseKind.label)


@pytest.fixture
def random_ridge_instance():
    def make(gen_rng, n=30, d=3):
        Z = gen_rng.standard_normal((n, d))
        y = Z @ gen_rng.standard_normal(d) + gen_rng.standard_normal(n)
        return Dataset(features=Z, response=y, kind=ResponseKind.real)

    return make


@pytest.fixture
def constant_fitter():
    return ConstantFitter
