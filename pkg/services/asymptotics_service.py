import logging
from typing import Iterable, List, Optional, Union

import numpy as np
import scipy.linalg
from scipy import integrate

from models.asymptotics import CalibrationResult, CalibrationTarget, RidgeProblem
from models.data import (
    GaussianLinearSpec,
    GaussianLocationSpec,
    SymmetricBernoulliSpec,
    NormalDistribution,
)
from models.experiment import reference_design
from models.hypothesis import LossKind
from models.reports import AsymptoticQuantities, LdaAsymptotics, RhoEstimate, SpeedupFactor
from services.exceptions import (
    DegenerateLimitError,
    InvalidArgumentError,
    NumericalFailureError,
    UnsupportedError,
)
from services.fitters import ConvexLoss, RidgeLoss, SquaredDeviationLoss, fit_m_estimator
from services.risk_service import MonteCarlo
from services.sampling import design_factor, draw_from

logger = logging.getLogger(__name__)


# --- ridge -----------------------------------------------------------------

def ridge_population_theta(S_X: np.ndarray, theta_opt: np.ndarray, lambda_: float) -> np.ndarray:
    d = len(theta_opt)
    return scipy.linalg.solve(S_X + lambda_ * np.eye(d), S_X @ theta_opt, assume_a="pos")


def ridge_asymptotics(
    S_X,
    sigma_noise_sq: float,
    theta_opt,
    lambda_: float,
    gaussian_design: bool = True,
    design_sample: Optional[np.ndarray] = None,
) -> AsymptoticQuantities:
    """sigma1^2, sigma2^2 and rho for ridge under squared-error evaluation.

    Non-Gaussian designs need `design_sample`, rows of X drawn from the design law, from
    which the fourth-moment terms are estimated. The noise is taken Gaussian.
    """
    S = np.asarray(S_X, dtype=float)
    theta_opt = np.asarray(theta_opt, dtype=float)
    design_factor(S)
    if lambda_ < 0:
        raise InvalidArgumentError(f"lambda must be non-negative, got {lambda_}")
    if sigma_noise_sq < 0:
        raise InvalidArgumentError("noise variance must be non-negative")
    d = len(theta_opt)

    theta_star = ridge_population_theta(S, theta_opt, lambda_)
    delta = theta_star - theta_opt
    G_R = 2.0 * S @ delta
    H = 2.0 * (S + lambda_ * np.eye(d))
    v = scipy.linalg.solve(H, G_R, assume_a="pos")  # (S + lambda I)^-1 S delta
    S_delta = S @ delta
    excess = float(delta @ S_delta)
    a = excess + sigma_noise_sq

    if gaussian_design:
        sigma1_sq = 2.0 * a ** 2
        Sigma = 4.0 * (a * S + np.outer(S_delta, S_delta))
        rho = -4.0 * a * float(v @ S_delta)
    else:
        if design_sample is None:
            raise InvalidArgumentError("non-Gaussian designs need a design sample")
        X = np.atleast_2d(np.asarray(design_sample, dtype=float))
        w = X @ delta
        w2 = w ** 2
        # Cov(x w, w^2) and E[x x' w^2] drive rho and Sigma
        cov_xw_w2 = (X * (w * w2)[:, None]).mean(axis=0) - (X * w[:, None]).mean(axis=0) * w2.mean()
        Exxw2 = (X * w2[:, None]).T @ X / X.shape[0]
        Ew2, Ew4 = w2.mean(), (w2 ** 2).mean()
        Er2 = Ew2 + sigma_noise_sq
        Er4 = Ew4 + 6.0 * sigma_noise_sq * Ew2 + 3.0 * sigma_noise_sq ** 2
        sigma1_sq = Er4 - Er2 ** 2
        Sigma = 4.0 * (sigma_noise_sq * S + Exxw2 - np.outer(S_delta, S_delta))
        rho = -2.0 * float(v @ (cov_xw_w2 + 2.0 * sigma_noise_sq * S_delta))

    sigma2_sq = float(v @ Sigma @ v)
    return AsymptoticQuantities(sigma1_sq=max(sigma1_sq, 0.0), sigma2_sq=max(sigma2_sq, 0.0), rho=rho)


def ridge_problem_asymptotics(problem: RidgeProblem, design_sample: Optional[np.ndarray] = None) -> AsymptoticQuantities:
    gen = problem.generator
    return ridge_asymptotics(
        gen.cov, gen.noise_var, gen.theta, problem.lambda_, problem.gaussian_design, design_sample
    )


def ridge_reference_config() -> RidgeProblem:
    """Configuration whose limit is n Var split = 7.140, n Var cv = 2.124, speed-up 3.362."""
    return RidgeProblem(generator=reference_design(), lambda_=1.0, K=2)


def calibrate_ridge_config(
    candidates: Iterable[RidgeProblem],
    target: Optional[CalibrationTarget] = None,
) -> List[CalibrationResult]:
    """Score candidate configurations against target limit variances, best first."""
    target = target or CalibrationTarget()
    results = []
    for problem in candidates:
        q = ridge_problem_asymptotics(problem)
        split, cv = q.n_var_split(problem.K), q.n_var_cv(problem.K)
        score = max(abs(split - target.n_var_split), abs(cv - target.n_var_cv))
        results.append(
            CalibrationResult(problem=problem, n_var_split=split, n_var_cv=cv, speedup=split / cv, score=score)
        )
    results.sort(key=lambda r: r.score)
    if results:
        logger.info(f"Best calibration candidate scores {results[0].score:.4g} over {len(results)} candidates")
    return results


def default_calibration_grid() -> List[RidgeProblem]:
    """Reference Toeplitz design crossed with a small grid of penalties and fold counts."""
    return [
        RidgeProblem(generator=reference_design(), lambda_=lam, K=K)
        for lam in (0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0)
        for K in (2, 5, 10)
    ]


# --- speed-up --------------------------------------------------------------

def speedup_factor(K: int, q: AsymptoticQuantities) -> SpeedupFactor:
    """K * sigma_split^2 / sigma_cv^2, and its square root."""
    if q.sigma_split_sq <= 0:
        raise InvalidArgumentError("sigma1^2 + sigma2^2 must be positive")
    if q.sigma_cv_sq <= 0:
        raise DegenerateLimitError("sigma_cv^2 vanishes: the cross-validated risk has a non-Gaussian limit")
    ratio = K * q.sigma_split_sq / q.sigma_cv_sq
    return SpeedupFactor(variance_ratio=ratio, rate_factor=float(np.sqrt(ratio)))


# --- rho for parametric M-estimators -----------------------------------------

def _population_theta(psi: ConvexLoss, gen, mc: MonteCarlo) -> np.ndarray:
    if isinstance(psi, RidgeLoss) and isinstance(gen, GaussianLinearSpec):
        return ridge_population_theta(gen.cov, gen.theta, psi.lambda_)
    if isinstance(psi, SquaredDeviationLoss) and isinstance(gen, GaussianLocationSpec):
        return np.array([gen.mean])
    if isinstance(psi, SquaredDeviationLoss) and isinstance(gen, SymmetricBernoulliSpec):
        return np.array([0.0])
    sample = draw_from(gen, mc.m, mc.seed.retry().generator())
    h = fit_m_estimator(psi, sample)
    return np.atleast_1d(np.asarray(getattr(h, "theta"), dtype=float))


def _square_loss_terms(theta: np.ndarray, data) -> tuple:
    """Per-point square loss and its theta-gradient."""
    if data.response is None:
        r = data.features[:, 0] - theta[0]
        return r ** 2, (-2.0 * r)[:, None]
    r = data.response - data.features @ theta
    return r ** 2, -2.0 * data.features * r[:, None]


def rho_parametric(
    psi: ConvexLoss,
    L: LossKind,
    gen,
    method: Union[str, MonteCarlo] = "closed-form",
) -> RhoEstimate:
    """rho = -Cov(dR(theta*)' H^-1 dPsi(X, theta*), L(X, theta*))."""
    L = LossKind(L)
    if L != LossKind.square:
        raise UnsupportedError("rho is implemented for square evaluation loss")

    if not isinstance(method, MonteCarlo):
        if method != "closed-form":
            raise InvalidArgumentError(f"unknown method {method!r}")
        if isinstance(psi, SquaredDeviationLoss):
            # training and evaluation losses coincide, so dR(theta*) = 0
            return RhoEstimate(value=0.0, method="closed-form")
        if isinstance(psi, RidgeLoss) and isinstance(gen, GaussianLinearSpec):
            q = ridge_asymptotics(gen.cov, gen.noise_var, gen.theta, psi.lambda_)
            return RhoEstimate(value=q.rho, method="closed-form")
        raise UnsupportedError(f"no closed-form rho for {psi.name} under '{gen.kind}'")

    theta_star = _population_theta(psi, gen, method)
    sample = draw_from(gen, method.m, method.seed.generator())
    loss, loss_grad = _square_loss_terms(theta_star, sample)
    G_R = loss_grad.mean(axis=0)
    H = psi.hessian(theta_star, sample)
    if isinstance(psi, RidgeLoss) and isinstance(gen, GaussianLinearSpec):
        # population moments are known exactly here
        G_R = 2.0 * gen.cov @ (theta_star - gen.theta)
        H = 2.0 * (gen.cov + psi.lambda_ * np.eye(len(theta_star)))
    try:
        direction = scipy.linalg.solve(H, G_R, assume_a="pos")
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"population Hessian is singular: {e}")

    influence = psi.per_point_gradient(theta_star, sample) @ direction
    u = influence - influence.mean()
    w = loss - loss.mean()
    prod = u * w
    cov = prod.sum() / (len(prod) - 1)
    se = prod.std(ddof=1) / np.sqrt(len(prod))
    return RhoEstimate(value=float(-cov), standard_error=float(se), method="monte-carlo")


# --- LDA -------------------------------------------------------------------

def _truncated_mean(dist, lo: float, hi: float, tolerance: float) -> float:
    if hi <= lo:
        return 0.0
    frozen = dist.frozen()
    value, err = integrate.quad(lambda x: x * frozen.pdf(x), lo, hi, epsabs=tolerance, epsrel=0.0, limit=200)
    if err > 10 * tolerance:
        raise NumericalFailureError(f"quadrature reached {err:.2e}, above tolerance {tolerance:.1e}")
    return float(value)


def _lower(dist) -> float:
    return dist.support_low if not isinstance(dist, NormalDistribution) else float(dist.frozen().ppf(1e-12))


def lda_asymptotics(F1, F2, tolerance: float = 1e-8, method: str = "quadrature") -> LdaAsymptotics:
    """sigma^2 and rho of 2-fold LDA under 0-1 loss.

    `method="closed-form"` uses the incomplete-gamma identity for the truncated
    means instead of quadrature (Gamma and Normal classes only).
    """
    g1, g2 = F1.frozen(), F2.frozen()
    mu1, mu2 = float(g1.mean()), float(g2.mean())
    swapped = False
    if mu1 < mu2:
        F1, F2, g1, g2, mu1, mu2 = F2, F1, g2, g1, mu2, mu1
        swapped = True
    if mu1 == mu2:
        raise InvalidArgumentError("class means coincide; the classifier is undefined")

    mu = 0.5 * (mu1 + mu2)
    Delta = float(g1.pdf(mu) - g2.pdf(mu))
    q = 0.5 * (float(g1.cdf(mu)) - float(g2.cdf(mu)) + 1.0)

    if method == "closed-form":
        below1 = F1.truncated_mean_below(mu)
        above2 = mu2 - F2.truncated_mean_below(mu)
    elif method == "quadrature":
        below1 = _truncated_mean(F1, _lower(F1), mu, tolerance)
        upper = float(g2.ppf(1.0 - 1e-12))
        above2 = _truncated_mean(F2, mu, max(upper, mu), tolerance)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    sigma_sq = Delta ** 2 / 8.0 * (float(g1.var()) + float(g2.var()) + 0.5 * (mu1 - mu2) ** 2) + q * (1.0 - q)
    rho = Delta / 4.0 * (above2 + below1 - 2.0 * q * mu)
    logger.info(f"LDA limit: mu={mu:.6f}, Delta={Delta:.6f}, q={q:.6f}, sigma^2={sigma_sq:.6f}, rho={rho:.6f}")
    return LdaAsymptotics(mu=mu, Delta=Delta, q=q, sigma_sq=sigma_sq, rho=rho, swapped=swapped)
