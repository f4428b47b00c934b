import math

import numpy as np
import pytest
from scipy import stats

from models.data import (
    Dataset,
    GaussianLinearSpec,
    GaussianLocationSpec,
    NormalDistribution,
    ResponseKind,
    SeedSpec,
    TwoClassMixtureSpec,
    UniformThresholdSpec,
)
from models.experiment import reference_design
from models.hypothesis import LdaHypothesis, LinearHypothesis, LossKind, MeanHypothesis, NearestNeighborHypothesis
from models.reports import TargetKind
from services.exceptions import DegenerateFitError, UnsupportedError
from services.fitters import LdaFitter, MeanFitter, RidgeFitter
from services.folds import make_partition
from services.risk_service import (
    MonteCarlo,
    cv_risk,
    ensemble_average_risk,
    expected_risk,
    split_risk,
    true_risk,
)
from services.sampling import sample_dataset


def test_constant_loss(constant_fitter):
    data = Dataset(features=np.arange(10.0))
    report = cv_risk(data, make_partition(10, 3), constant_fitter(7.0))
    assert report.cv_risk == 7.0
    assert split_risk(data, make_partition(10, 3), constant_fitter(7.0)) == 7.0


def test_hand_computed_mean_example():
    data = Dataset(features=[0.0, 0.0, 1.0, 1.0])
    p = make_partition(4, 2)
    report = cv_risk(data, p, MeanFitter())
    assert [h.theta for h in report.hypotheses] == [1.0, 0.0]
    assert report.cv_risk == 1.0
    assert report.split_risk == 1.0
    assert split_risk(data, p, MeanFitter()) == 1.0


def test_fold_losses_sum_to_n_times_cv(ridge_data):
    report = cv_risk(ridge_data, make_partition(ridge_data.n, 3), RidgeFitter(0.5))
    total = math.fsum(np.concatenate(report.per_fold_losses))
    assert math.isclose(report.cv_risk * ridge_data.n, total, rel_tol=1e-15)
    assert report.losses_by_index().shape == (ridge_data.n,)


def test_parallel_folds_are_deterministic():
    data = sample_dataset(reference_design(), 50, SeedSpec(master_seed=5))
    p = make_partition(50, 5)
    a = cv_risk(data, p, RidgeFitter(1.0), threads=1)
    b = cv_risk(data, p, RidgeFitter(1.0), threads=4)
    assert a.cv_risk == b.cv_risk
    assert all(np.array_equal(x, y) for x, y in zip(a.per_fold_losses, b.per_fold_losses))


def test_two_fold_swap_invariance(rng):
    x = rng.standard_normal(20)
    swapped = np.concatenate([x[10:], x[:10]])
    p = make_partition(20, 2)
    a = cv_risk(Dataset(features=x), p, MeanFitter()).cv_risk
    b = cv_risk(Dataset(features=swapped), p, MeanFitter()).cv_risk
    assert math.isclose(a, b, rel_tol=1e-14)


def test_data_ignoring_fitter_with_leave_one_out(constant_fitter):
    data = Dataset(features=np.arange(6.0))
    report = cv_risk(data, make_partition(6, 6), constant_fitter(2.5))
    assert report.cv_risk == report.split_risk == 2.5


def test_leave_one_out_mean_estimation():
    # held-out x_i against the mean of the other three: residuals -2, -2/3, 2/3, 2
    data = Dataset(features=[0.0, 1.0, 2.0, 3.0])
    report = cv_risk(data, make_partition(4, 4), MeanFitter())
    assert [len(f) for f in report.per_fold_losses] == [1, 1, 1, 1]
    assert math.isclose(report.cv_risk, 20.0 / 9.0)
    assert math.isclose(report.split_risk, 4.0)


def test_degenerate_fold_reports_its_id():
    data = Dataset(features=[0.0, 1.0, 2.0, 3.0], response=[0, 0, 1, 1], kind=ResponseKind.label)
    with pytest.raises(DegenerateFitError) as info:
        cv_risk(data, make_partition(4, 2), LdaFitter())
    assert info.value.fold == 0


def test_true_risk_at_the_optimum():
    gen = reference_design()
    risk = true_risk(LinearHypothesis(theta=gen.theta), gen)
    assert risk.kind == TargetKind.hypothesis
    assert math.isclose(risk.value, gen.noise_var)


def test_true_risk_gaussian_linear_excess():
    gen = GaussianLinearSpec(covariance=[[2.0, 0.0], [0.0, 1.0]], theta_opt=[1.0, 1.0], noise_var=0.5)
    risk = true_risk(LinearHypothesis(theta=np.array([0.0, 1.0])), gen)
    assert math.isclose(risk.value, 2.5)


def test_lda_risk_matches_normal_formula():
    gen = TwoClassMixtureSpec(class1=NormalDistribution(mean=2.0), class0=NormalDistribution(mean=0.0))
    h = LdaHypothesis(mu1=2.0, mu0=0.0)
    exact = true_risk(h, gen).value
    assert math.isclose(exact, stats.norm.cdf(-1.0), rel_tol=1e-12)
    mc = true_risk(h, gen, MonteCarlo(m=1_000_000, seed=SeedSpec(master_seed=9)))
    assert abs(mc.value - exact) < 4 * mc.standard_error


def test_monte_carlo_single_draw():
    gen = UniformThresholdSpec(threshold=1.0)
    h = NearestNeighborHypothesis(points=np.array([[0.5]]), labels=np.array([1]))
    risk = true_risk(h, gen, MonteCarlo(m=1, seed=SeedSpec(master_seed=1)))
    assert risk.value == 0.0
    assert risk.standard_error is None


def test_nearest_neighbor_closed_form_risk():
    h = NearestNeighborHypothesis(points=np.array([[0.2], [0.6]]), labels=np.array([1, 0]))
    # the decision boundary sits at 0.4, the true threshold at 0.5
    assert math.isclose(true_risk(h, UniformThresholdSpec(threshold=0.5)).value, 0.1)


def test_unsupported_closed_form():
    with pytest.raises(UnsupportedError):
        true_risk(MeanHypothesis(theta=0.0), reference_design())
    with pytest.raises(UnsupportedError):
        true_risk(LinearHypothesis(theta=np.zeros(3)), reference_design(), loss=LossKind.zero_one)


def test_ensemble_average_of_identical_hypotheses():
    data = Dataset(features=[1.0, 1.0, 1.0, 1.0])
    gen = GaussianLocationSpec(mean=0.0, var=1.0)
    report = cv_risk(data, make_partition(4, 2), MeanFitter())
    avg = ensemble_average_risk(report, gen)
    assert avg.kind == TargetKind.ensemble_average
    assert avg.value == true_risk(report.hypotheses[0], gen).value == 2.0


def test_ensemble_average_tracks_expected_risk():
    gen = GaussianLocationSpec(mean=0.0, var=1.0)
    n, K = 20, 2
    p = make_partition(n, K)
    exact = expected_risk(gen, MeanFitter(), n, K, replicates=2, seed=SeedSpec(master_seed=0))
    assert exact.standard_error == 0.0
    assert math.isclose(exact.value, 1.0 + 1.0 / 10)

    values = [
        ensemble_average_risk(cv_risk(sample_dataset(gen, n, SeedSpec(master_seed=3, stream_id=r)), p, MeanFitter()), gen).value
        for r in range(4000)
    ]
    se = np.std(values, ddof=1) / np.sqrt(len(values))
    assert abs(np.mean(values) - exact.value) < 4 * se


def test_expected_risk_by_monte_carlo():
    gen = reference_design()
    a = expected_risk(gen, RidgeFitter(1.0), 40, 2, replicates=200, seed=SeedSpec(master_seed=4))
    b = expected_risk(gen, RidgeFitter(1.0), 40, 2, replicates=200, seed=SeedSpec(master_seed=4), threads=3)
    assert a.value == b.value
    assert a.value > gen.noise_var
    assert a.standard_error > 0
