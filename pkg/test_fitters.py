import numpy as np
import pytest

from models.data import Dataset, ResponseKind
from models.hypothesis import LdaHypothesis, LinearHypothesis, LossKind, MeanHypothesis, NearestNeighborHypothesis
from services.exceptions import DegenerateFitError, InvalidArgumentError, NumericalFailureError, SolverFailureError
from services.fitters import (
    LdaFitter,
    MeanFitter,
    RidgeFitter,
    RidgeLoss,
    SolverConfig,
    SquaredDeviationLoss,
    evaluate_loss,
    fit_lda,
    fit_m_estimator,
    fit_ridge,
)


def test_mean_m_estimator():
    h = fit_m_estimator(SquaredDeviationLoss(), Dataset(features=[1.0, 2.0, 3.0]))
    assert isinstance(h, MeanHypothesis)
    assert np.isclose(h.theta, 2.0)


def test_mean_m_estimator_constant_data():
    h = fit_m_estimator(SquaredDeviationLoss(), Dataset(features=[4.5] * 6))
    assert np.isclose(h.theta, 4.5)


def test_ridge_newton_matches_closed_form(rng, random_ridge_instance):
    for _ in range(10):
        data = random_ridge_instance(rng, n=20, d=3)
        newton = fit_m_estimator(RidgeLoss(0.1), data)
        exact = fit_ridge(data.features, data.response, 0.1)
        assert np.allclose(newton.theta, exact.theta, atol=1e-8, rtol=0)


def test_newton_objective_decreases(rng, random_ridge_instance):
    data = random_ridge_instance(rng, n=25, d=4)
    seen = []
    fit_m_estimator(RidgeLoss(0.3), data, callback=lambda it, theta, value, gnorm: seen.append(value))
    assert len(seen) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(seen, seen[1:]))


def test_newton_reports_non_convergence(rng, random_ridge_instance):
    data = random_ridge_instance(rng, n=25, d=4)
    cfg = SolverConfig(max_iterations=1, gradient_tolerance=1e-300)
    with pytest.raises(SolverFailureError) as info:
        fit_m_estimator(RidgeLoss(0.3), data, cfg)
    assert info.value.last_iterate is not None
    assert info.value.residual is not None


def test_ridge_heavy_penalty_shrinks(rng):
    Z = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    h = fit_ridge(Z, y, 1e9)
    assert np.linalg.norm(h.theta) <= np.linalg.norm(Z.T @ y / 30) / 1e9 + 1e-15


def test_ridge_interpolates_without_penalty(rng):
    Z = rng.standard_normal((3, 3))
    theta0 = np.array([1.0, -2.0, 0.5])
    h = fit_ridge(Z, Z @ theta0, 0.0)
    assert np.allclose(h.theta, theta0, atol=1e-10)


def test_ridge_normal_equations(rng):
    Z = rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    lam = 0.7
    h = fit_ridge(Z, y, lam)
    residual = (Z.T @ Z / 50 + lam * np.eye(3)) @ h.theta - Z.T @ y / 50
    assert np.max(np.abs(residual)) <= 1e-10


def test_ridge_singular_without_penalty():
    Z = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(NumericalFailureError):
        fit_ridge(Z, np.array([1.0, 2.0, 3.0]), 0.0)


def test_ridge_negative_penalty():
    with pytest.raises(InvalidArgumentError):
        RidgeFitter(-0.1)


def _labelled(z, labels):
    return Dataset(features=z, response=labels, kind=ResponseKind.label)


def test_lda_class_means():
    h = fit_lda(_labelled([0.0, 2.0, 4.0, 6.0], [1, 1, 0, 0]))
    assert (h.mu1, h.mu0) == (1.0, 5.0)


def test_lda_decision_rule():
    h = LdaHypothesis(mu1=1.0, mu0=5.0)
    assert h.predict(np.array([2.9]))[0] == 1
    # a tie goes to class 0
    assert h.predict(np.array([3.0]))[0] == 0


def test_lda_missing_class():
    with pytest.raises(DegenerateFitError):
        fit_lda(_labelled([0.0, 1.0, 2.0], [1, 1, 1]))


def test_square_loss():
    h = LinearHypothesis(theta=np.array([1.0, 0.0]))
    assert evaluate_loss(LossKind.square, h, (np.array([2.0, 5.0]), 3.0)) == 1.0


def test_zero_one_loss_on_correct_label():
    h = LdaHypothesis(mu1=1.0, mu0=5.0)
    assert evaluate_loss(LossKind.zero_one, h, (np.array([0.5]), 1.0)) == 0.0
    assert evaluate_loss(LossKind.zero_one, h, (np.array([0.5]), 0.0)) == 1.0


def test_rescaled_square_loss():
    assert evaluate_loss(LossKind.rescaled_square, MeanHypothesis(theta=0.0), (np.array([1.0]), None), n=4) == 2.0


def test_rescaled_nn_loss():
    h = NearestNeighborHypothesis(points=np.array([[0.2], [0.8]]), labels=np.array([1, 0]))
    assert evaluate_loss(LossKind.rescaled_nn, h, (np.array([0.7]), 1.0), n=9) == 3.0


def test_loss_kind_mismatch():
    with pytest.raises(InvalidArgumentError):
        evaluate_loss(LossKind.zero_one, MeanHypothesis(theta=0.0), (np.array([1.0]), None))
    with pytest.raises(InvalidArgumentError):
        evaluate_loss(LossKind.rescaled_square, MeanHypothesis(theta=0.0), (np.array([1.0]), None))


def test_nearest_neighbor_ties_go_to_lowest_index():
    h = NearestNeighborHypothesis(points=np.array([[0.75], [0.25]]), labels=np.array([0, 1]))
    assert h.neighbor_index(np.array([[0.5]]))[0] == 0
    h = NearestNeighborHypothesis(points=np.array([[0.5], [0.5], [0.9]]), labels=np.array([1, 0, 0]))
    assert h.neighbor_index(np.array([[0.5]]))[0] == 0


def test_nearest_neighbor_multivariate():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    h = NearestNeighborHypothesis(points=pts, labels=np.array([0, 1, 1]))
    assert h.neighbor_index(np.array([[0.9, 0.1], [0.6, 0.5], [0.1, 0.8]])).tolist() == [1, 1, 2]


def test_nearest_neighbor_multivariate_tie_goes_to_lowest_index():
    # (0.5, 0.5) is equally far from all three corners
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    h = NearestNeighborHypothesis(points=pts, labels=np.array([0, 1, 1]))
    assert h.neighbor_index(np.array([[0.5, 0.5]])).tolist() == [0]
    assert h.predict(np.array([[0.5, 0.5]])).tolist() == [0]
    h = NearestNeighborHypothesis(points=pts[[1, 0, 2]], labels=np.array([1, 0, 1]))
    assert h.predict(np.array([[0.5, 0.5]])).tolist() == [1]


def test_nearest_neighbor_realizes_min_distance(rng):
    pts = rng.random((50, 1))
    h = NearestNeighborHypothesis(points=pts, labels=(pts[:, 0] <= 0.5).astype(int))
    q = rng.random((200, 1))
    idx = h.neighbor_index(q)
    best = np.min(np.abs(q - pts[:, 0][None, :]), axis=1)
    assert np.allclose(np.abs(q[:, 0] - pts[idx, 0]), best)


def test_fitters_are_permutation_invariant(rng, random_ridge_instance, labelled_data):
    data = random_ridge_instance(rng, n=30, d=3)
    perm = rng.permutation(30)
    a = RidgeFitter(0.5).fit(data)
    b = RidgeFitter(0.5).fit(data.subset(perm))
    assert np.allclose(a.theta, b.theta, atol=1e-12, rtol=0)

    mean_data = Dataset(features=rng.standard_normal(31))
    perm = rng.permutation(31)
    assert MeanFitter().fit(mean_data).theta == MeanFitter().fit(mean_data.subset(perm)).theta

    perm = rng.permutation(labelled_data.n)
    assert LdaFitter().fit(labelled_data) == LdaFitter().fit(labelled_data.subset(perm))
