import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from models.data import Dataset, ResponseKind
from models.hypothesis import (
    Hypothesis,
    LdaHypothesis,
    LinearHypothesis,
    LossKind,
    MeanHypothesis,
    NearestNeighborHypothesis,
)
from services.exceptions import (
    DegenerateFitError,
    InvalidArgumentError,
    NumericalFailureError,
    SolverFailureError,
)

logger = logging.getLogger(__name__)

Observation = Tuple[np.ndarray, Optional[float]]


class SolverConfig(BaseModel):
    max_iterations: int = Field(100, ge=1, description="Newton iteration cap")
    gradient_tolerance: float = Field(1e-10, gt=0, description="Stop once the empirical gradient norm is below this")
    armijo: float = Field(1e-4, gt=0, lt=1, description="Sufficient-decrease constant")
    shrink: float = Field(0.5, gt=0, lt=1, description="Backtracking step multiplier")
    min_step: float = Field(1e-12, gt=0, description="Smallest step before backtracking gives up")

    @classmethod
    def from_settings(cls, settings) -> "SolverConfig":
        return cls(max_iterations=settings.solver_max_iterations, gradient_tolerance=settings.solver_tolerance)


# --- training losses -------------------------------------------------------

class ConvexLoss(ABC):
    """Strictly convex, twice differentiable empirical objective (1/m) sum Psi(X_i, theta)."""

    name: str

    @abstractmethod
    def dimension(self, data: Dataset) -> int:
        ...

    @abstractmethod
    def objective(self, theta: np.ndarray, data: Dataset) -> float:
        ...

    @abstractmethod
    def gradient(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        ...

    @abstractmethod
    def hessian(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        ...

    def per_point_gradient(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        """m x d matrix of d/dtheta Psi(X_i, theta); used for Monte Carlo influence terms."""
        raise NotImplementedError

    def to_hypothesis(self, theta: np.ndarray) -> Hypothesis:
        return LinearHypothesis(theta=np.asarray(theta, dtype=float))


class SquaredDeviationLoss(ConvexLoss):
    """Psi(x, theta) = (x - theta)^2 on the first feature column."""

    name = "squared-deviation"

    def dimension(self, data):
        return 1

    def objective(self, theta, data):
        return float(np.mean((data.features[:, 0] - theta[0]) ** 2))

    def gradient(self, theta, data):
        return np.array([-2.0 * np.mean(data.features[:, 0] - theta[0])])

    def hessian(self, theta, data):
        return np.array([[2.0]])

    def per_point_gradient(self, theta, data):
        return (-2.0 * (data.features[:, 0] - theta[0]))[:, None]

    def to_hypothesis(self, theta):
        return MeanHypothesis(theta=float(theta[0]))


class RidgeLoss(ConvexLoss):
    """Psi(x, theta) = (y - z'theta)^2 + lambda |theta|^2."""

    name = "ridge"

    def __init__(self, lambda_: float):
        if lambda_ < 0:
            raise InvalidArgumentError(f"lambda must be non-negative, got {lambda_}")
        self.lambda_ = lambda_

    def dimension(self, data):
        return data.d

    def _residual(self, theta, data):
        return data.response - data.features @ theta

    def objective(self, theta, data):
        r = self._residual(theta, data)
        return float(np.mean(r ** 2) + self.lambda_ * theta @ theta)

    def gradient(self, theta, data):
        r = self._residual(theta, data)
        return -2.0 * data.features.T @ r / data.n + 2.0 * self.lambda_ * theta

    def hessian(self, theta, data):
        z = data.features
        return 2.0 * (z.T @ z / data.n + self.lambda_ * np.eye(data.d))

    def per_point_gradient(self, theta, data):
        r = self._residual(theta, data)
        return -2.0 * data.features * r[:, None] + 2.0 * self.lambda_ * theta[None, :]


def fit_m_estimator(
    psi: ConvexLoss,
    data: Dataset,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[int, np.ndarray, float, float], None]] = None,
) -> Hypothesis:
    """Damped Newton with Armijo backtracking.

    `callback(iteration, theta, objective, gradient_norm)` fires after every accepted step.
    """
    cfg = cfg or SolverConfig()
    theta = np.zeros(psi.dimension(data))
    value = psi.objective(theta, data)
    grad = psi.gradient(theta, data)
    gnorm = float(np.linalg.norm(grad))
    if callback is not None:
        callback(0, theta, value, gnorm)

    for it in range(1, cfg.max_iterations + 1):
        if gnorm <= cfg.gradient_tolerance:
            return psi.to_hypothesis(theta)
        try:
            step = scipy.linalg.solve(psi.hessian(theta, data), -grad, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SolverFailureError(f"Hessian solve failed: {e}", last_iterate=theta, residual=gnorm)

        slope = float(grad @ step)
        t = 1.0
        while True:
            candidate = theta + t * step
            cand_value = psi.objective(candidate, data)
            if cand_value <= value + cfg.armijo * t * slope:
                break
            t *= cfg.shrink
            if t < cfg.min_step:
                raise SolverFailureError(
                    f"line search stalled after {it} iterations", last_iterate=theta, residual=gnorm
                )

        theta, value = candidate, cand_value
        grad = psi.gradient(theta, data)
        gnorm = float(np.linalg.norm(grad))
        if callback is not None:
            callback(it, theta, value, gnorm)

    if gnorm <= cfg.gradient_tolerance:
        return psi.to_hypothesis(theta)
    raise SolverFailureError(
        f"Newton did not converge in {cfg.max_iterations} iterations (|grad|={gnorm:.3e})",
        last_iterate=theta,
        residual=gnorm,
    )


def fit_ridge(Z: np.ndarray, y: np.ndarray, lambda_: float) -> LinearHypothesis:
    """theta = ((1/m) Z'Z + lambda I)^-1 (1/m) Z'y by an SPD solve."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float)
    if lambda_ < 0:
        raise InvalidArgumentError(f"lambda must be non-negative, got {lambda_}")
    m, d = Z.shape
    A = Z.T @ Z / m + lambda_ * np.eye(d)
    b = Z.T @ y / m
    if lambda_ == 0 and np.linalg.cond(A) > 1e12:
        raise NumericalFailureError("singular normal equations with lambda = 0")
    try:
        theta = scipy.linalg.solve(A, b, assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"ridge solve failed: {e}")
    return LinearHypothesis(theta=theta)


def fit_lda(data: Dataset) -> LdaHypothesis:
    """Within-class sample means of the univariate feature."""
    labels = data.labels()
    z = data.features[:, 0]
    z1, z0 = z[labels == 1], z[labels == 0]
    if len(z1) == 0 or len(z0) == 0:
        raise DegenerateFitError(f"LDA needs both classes, got {len(z1)} of class 1 and {len(z0)} of class 0")
    return LdaHypothesis(mu1=math.fsum(z1) / len(z1), mu0=math.fsum(z0) / len(z0))


def fit_nearest_neighbor(data: Dataset) -> NearestNeighborHypothesis:
    return NearestNeighborHypothesis(points=data.features, labels=data.labels())


# --- evaluation losses -----------------------------------------------------

def _rescale(kind: LossKind, n: Optional[int]) -> float:
    if kind in (LossKind.rescaled_nn, LossKind.rescaled_square):
        if n is None or n < 1:
            raise InvalidArgumentError(f"loss '{kind.value}' needs the sample size n")
        return math.sqrt(n)
    return 1.0


def losses(kind: LossKind, h: Hypothesis, data: Dataset, n: Optional[int] = None) -> np.ndarray:
    """Vectorized evaluation loss over every row of `data`."""
    kind = LossKind(kind)
    scale = _rescale(kind, n)

    if kind in (LossKind.square, LossKind.rescaled_square):
        if isinstance(h, MeanHypothesis):
            return scale * (data.features[:, 0] - h.theta) ** 2
        if isinstance(h, LinearHypothesis) and kind == LossKind.square:
            if data.response is None:
                raise InvalidArgumentError("square loss on a linear hypothesis needs responses")
            return (data.response - data.features @ h.theta) ** 2
        raise InvalidArgumentError(f"loss '{kind.value}' does not apply to {type(h).__name__}")

    if isinstance(h, (LdaHypothesis, NearestNeighborHypothesis)):
        if data.kind != ResponseKind.label:
            raise InvalidArgumentError("classification losses need labelled data")
        if kind == LossKind.rescaled_nn and not isinstance(h, NearestNeighborHypothesis):
            raise InvalidArgumentError("rescaled-nn loss applies to nearest-neighbour hypotheses only")
        wrong = h.predict(data.features) != data.labels()
        return scale * wrong.astype(float)
    raise InvalidArgumentError(f"loss '{kind.value}' does not apply to {type(h).__name__}")


def evaluate_loss(kind: LossKind, h: Hypothesis, obs: Observation, n: Optional[int] = None) -> float:
    x, y = obs
    x = np.atleast_1d(np.asarray(x, dtype=float))
    kind = LossKind(kind)
    if y is None:
        row = Dataset(features=x[None, :])
    else:
        label = kind in (LossKind.zero_one, LossKind.rescaled_nn)
        row = Dataset(
            features=x[None, :],
            response=[y],
            kind=ResponseKind.label if label else ResponseKind.real,
        )
    return float(losses(kind, h, row, n)[0])


# --- fitters ---------------------------------------------------------------

class Fitter(ABC):
    """Pairs a training procedure with the loss its hypotheses are evaluated under."""

    training_loss: str
    eval_loss: LossKind = LossKind.square
    eval_scale: Optional[int] = None

    @abstractmethod
    def fit(self, data: Dataset) -> Hypothesis:
        ...

    def losses(self, h: Hypothesis, data: Dataset) -> np.ndarray:
        return losses(self.eval_loss, h, data, self.eval_scale)

    def loss(self, h: Hypothesis, obs: Observation) -> float:
        return evaluate_loss(self.eval_loss, h, obs, self.eval_scale)

    def describe(self) -> str:
        return self.training_loss


class MeanFitter(Fitter):
    training_loss = "squared-deviation"

    def __init__(self, eval_loss: LossKind = LossKind.square, eval_scale: Optional[int] = None):
        self.eval_loss = LossKind(eval_loss)
        self.eval_scale = eval_scale

    def fit(self, data: Dataset) -> MeanHypothesis:
        x = data.features[:, 0]
        return MeanHypothesis(theta=math.fsum(x) / len(x))

    def describe(self):
        return "mean"


class RidgeFitter(Fitter):
    training_loss = "ridge"
    eval_loss = LossKind.square

    def __init__(self, lambda_: float):
        if lambda_ < 0:
            raise InvalidArgumentError(f"lambda must be non-negative, got {lambda_}")
        self.lambda_ = lambda_

    def fit(self, data: Dataset) -> LinearHypothesis:
        return fit_ridge(data.features, data.response, self.lambda_)

    def describe(self):
        return f"ridge({self.lambda_:g})"


class MEstimatorFitter(Fitter):
    def __init__(self, psi: ConvexLoss, cfg: Optional[SolverConfig] = None, eval_loss: LossKind = LossKind.square):
        self.psi = psi
        self.cfg = cfg or SolverConfig()
        self.training_loss = psi.name
        self.eval_loss = LossKind(eval_loss)

    def fit(self, data: Dataset) -> Hypothesis:
        return fit_m_estimator(self.psi, data, self.cfg)


class LdaFitter(Fitter):
    training_loss = "class-means"
    eval_loss = LossKind.zero_one

    def fit(self, data: Dataset) -> LdaHypothesis:
        return fit_lda(data)

    def describe(self):
        return "lda"


class NearestNeighborFitter(Fitter):
    training_loss = "none"

    def __init__(self, eval_scale: Optional[int] = None):
        self.eval_loss = LossKind.rescaled_nn if eval_scale else LossKind.zero_one
        self.eval_scale = eval_scale

    def fit(self, data: Dataset) -> NearestNeighborHypothesis:
        return fit_nearest_neighbor(data)

    def describe(self):
        return "1-nn"

