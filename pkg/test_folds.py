import numpy as np
import pytest
from pydantic import ValidationError

from models.data import (
    Dataset,
    GammaDistribution,
    GaussianLinearSpec,
    SeedSpec,
    SymmetricBernoulliSpec,
    TwoClassMixtureSpec,
    UniformThresholdSpec,
)
from models.experiment import reference_design
from services.exceptions import InvalidArgumentError
from services.folds import block_of, make_partition
from services.sampling import sample_dataset


@pytest.mark.parametrize(
    "n, K, sizes",
    [(6, 3, (2, 2, 2)), (7, 3, (3, 2, 2)), (10, 4, (3, 3, 2, 2))],
)
def test_block_sizes(n, K, sizes):
    assert make_partition(n, K).sizes == sizes


def test_block_of():
    assert block_of(0, make_partition(6, 3)) == 0
    assert block_of(5, make_partition(6, 3)) == 2
    assert block_of(2, make_partition(7, 3)) == 0
    assert block_of(3, make_partition(7, 3)) == 1


def test_blocks_are_contiguous():
    p = make_partition(10, 4)
    assert p.block(0).tolist() == [0, 1, 2]
    assert p.block(3).tolist() == [8, 9]
    assert p.complement(1).tolist() == [0, 1, 2, 6, 7, 8, 9]


@pytest.mark.parametrize("n, K", [(5, 1), (3, 4), (2, 0)])
def test_invalid_fold_count(n, K):
    with pytest.raises(InvalidArgumentError):
        make_partition(n, K)


def test_block_of_out_of_range():
    p = make_partition(6, 3)
    with pytest.raises(InvalidArgumentError):
        block_of(6, p)
    with pytest.raises(InvalidArgumentError):
        block_of(-1, p)


def test_partition_covers_every_index():
    for n in range(2, 40):
        for K in range(2, n + 1):
            p = make_partition(n, K)
            joined = np.concatenate(p.blocks())
            assert sorted(joined.tolist()) == list(range(n))
            assert max(p.sizes) - min(p.sizes) <= 1
            for i in range(n):
                assert i in p.block(block_of(i, p))


def test_shuffled_partition_is_reproducible():
    a = make_partition(50, 5, SeedSpec(master_seed=3))
    b = make_partition(50, 5, SeedSpec(master_seed=3))
    assert np.array_equal(a.order, b.order)
    assert not np.array_equal(a.order, np.arange(50))
    assert sorted(a.order.tolist()) == list(range(50))


def test_noiseless_gaussian_linear(seed):
    gen = GaussianLinearSpec(covariance=[[1.0, 0.0], [0.0, 2.0]], theta_opt=[1.0, -0.5], noise_var=0.0)
    data = sample_dataset(gen, 5, seed)
    assert np.array_equal(data.response, data.features @ np.array([1.0, -0.5]))


def test_symmetric_bernoulli_mean(seed):
    n = 10_000
    data = sample_dataset(SymmetricBernoulliSpec(), n, seed)
    assert set(np.unique(data.features).tolist()) <= {-1.0, 1.0}
    assert abs(data.features.mean()) < 4.0 / np.sqrt(n)


def test_gamma_class_mean(seed):
    x = GammaDistribution(shape=1.0, scale=1.0).sample(seed.generator(), 100_000)
    assert abs(x.mean() - 1.0) < 0.02


def test_sampling_is_bit_reproducible():
    gen = TwoClassMixtureSpec(
        class1=GammaDistribution(shape=10.0, scale=0.15),
        class0=GammaDistribution(shape=1.0, scale=1.0),
    )
    a = sample_dataset(gen, 200, SeedSpec(master_seed=11, stream_id=4))
    b = sample_dataset(gen, 200, SeedSpec(master_seed=11, stream_id=4))
    c = sample_dataset(gen, 200, SeedSpec(master_seed=11, stream_id=5))
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.response, b.response)
    assert not np.array_equal(a.features, c.features)


def test_retry_gives_a_fresh_stream(seed):
    a = sample_dataset(reference_design(), 20, seed)
    b = sample_dataset(reference_design(), 20, seed.retry())
    assert not np.array_equal(a.features, b.features)


def test_threshold_labels(seed):
    data = sample_dataset(UniformThresholdSpec(threshold=0.5), 100, seed)
    assert np.array_equal(data.labels(), (data.features[:, 0] <= 0.5).astype(int))


def test_non_spd_design_rejected(seed):
    gen = GaussianLinearSpec(covariance=[[1.0, 2.0], [2.0, 1.0]], theta_opt=[0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        sample_dataset(gen, 10, seed)


def test_invalid_gamma_parameters():
    with pytest.raises(ValidationError):
        GammaDistribution(shape=-1.0, scale=1.0)


def test_dataset_holds_a_single_row():
    # single-row folds and training sets occur under leave-one-out
    row = Dataset(features=[[1.0, 2.0]], response=[0.5], kind="real")
    assert (row.n, row.d) == (1, 2)
    with pytest.raises(ValidationError):
        Dataset(features=np.empty((0, 1)))


def test_generators_need_two_rows():
    with pytest.raises(InvalidArgumentError):
        sample_dataset(SymmetricBernoulliSpec(), 1, SeedSpec(master_seed=0))


def test_dataset_is_read_only():
    data = Dataset(features=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        data.features[0, 0] = 5.0
