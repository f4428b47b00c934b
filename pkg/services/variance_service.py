import logging
import math
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict
from scipy import stats

from models.data import Dataset
from models.hypothesis import LinearHypothesis
from models.reports import IntervalCenter, RiskReport, VarianceMethod, VarianceReport
from services.exceptions import DegenerateFitError, InvalidArgumentError, NumericalFailureError
from services.fitters import Fitter, RidgeFitter
from services.folds import make_partition
from services.replicates import parallel_map
from services.risk_service import cv_risk

logger = logging.getLogger(__name__)

# |denominator| below this makes the two-row update unreliable
SWAP_DENOMINATOR_FLOOR = 1e-10


def sigma1_cross(report: RiskReport) -> float:
    """Average over folds of the unbiased within-fold variance of held-out losses."""
    variances = []
    for j, fold_losses in enumerate(report.per_fold_losses):
        if len(fold_losses) < 2:
            raise InvalidArgumentError(f"fold {j} holds a single point; within-fold variance is undefined")
        variances.append(float(np.var(fold_losses, ddof=1)))
    return math.fsum(variances) / len(variances)


def split_halves(data: Dataset) -> Tuple[Dataset, Dataset, int]:
    """First half, paired reserve half, and the number of dropped rows (0 or 1)."""
    m = data.n // 2
    dropped = data.n - 2 * m
    if dropped:
        logger.warning(f"Odd sample size {data.n}: dropping the last row for the half-sample split")
    if m < 2:
        raise InvalidArgumentError(f"need at least 4 rows for the swap-one estimator, got {data.n}")
    return data.subset(np.arange(m)), data.subset(np.arange(m, 2 * m)), dropped


class SwapResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    differences: np.ndarray
    half_cv_risk: float
    half_n: int
    dropped_rows: int

    @property
    def s2_cv(self) -> float:
        # a swap with an independent row carries twice the per-coordinate variance
        return float(0.5 * self.half_n * np.sum(self.differences ** 2))


def swap_differences_generic(data: Dataset, K_half: int, fitter: Fitter, threads: int = 1) -> SwapResult:
    half, reserve, dropped = split_halves(data)
    m = half.n
    partition = make_partition(m, K_half)
    base = cv_risk(half, partition, fitter)
    assignment = partition.assignment
    blocks = partition.blocks()

    def one(i: int) -> float:
        b = int(assignment[i])
        swapped = half.replace_row(i, reserve, i)
        pos = int(np.flatnonzero(blocks[b] == i)[0])
        change = float(fitter.losses(base.hypotheses[b], swapped.subset([i]))[0]) - base.per_fold_losses[b][pos]
        for j in range(partition.K):
            if j == b:
                continue
            try:
                h = fitter.fit(swapped.subset(partition.complement(j)))
            except DegenerateFitError as e:
                raise e.at_fold(j).at_swap(i)
            new = fitter.losses(h, swapped.subset(blocks[j]))
            change += math.fsum(new - base.per_fold_losses[j])
        return change / m

    diffs = np.asarray(parallel_map(one, range(m), threads))
    return SwapResult(differences=diffs, half_cv_risk=base.cv_risk, half_n=m, dropped_rows=dropped)


def s2_cv_generic(data: Dataset, K_half: int, fitter: Fitter, threads: int = 1) -> float:
    """Swap-one half-sample variance estimate, refitting only the folds whose training set changes."""
    return swap_differences_generic(data, K_half, fitter, threads).s2_cv


# --- ridge two-row update --------------------------------------------------

class RidgeSwapState(BaseModel):
    """Unnormalized system S = Z'Z + m*lambda*I and its solution, for O(d^2) swaps."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Z: np.ndarray
    y: np.ndarray
    lambda_: float
    S_inv: np.ndarray
    theta: np.ndarray

    @classmethod
    def build(cls, Z: np.ndarray, y: np.ndarray, lambda_: float) -> "RidgeSwapState":
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        y = np.asarray(y, dtype=float)
        m, d = Z.shape
        S = Z.T @ Z + m * lambda_ * np.eye(d)
        try:
            S_inv = scipy.linalg.inv(S)
        except np.linalg.LinAlgError as e:
            raise NumericalFailureError(f"ridge system is singular: {e}")
        S_inv = 0.5 * (S_inv + S_inv.T)
        return cls(Z=Z, y=y, lambda_=lambda_, S_inv=S_inv, theta=S_inv @ (Z.T @ y))


def ridge_swap_many(
    state: RidgeSwapState,
    indices: np.ndarray,
    new_Z: np.ndarray,
    new_y: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficient changes after replacing row indices[k] with (new_Z[k], new_y[k]), one swap at a time.

    Returns (delta, ok): delta[k] = theta_after_swap_k - theta, and ok[k] False where the
    two-row update denominator vanished (delta is NaN there).
    """
    idx = np.asarray(indices, dtype=np.intp)
    X = state.Z[idx]
    y = state.y[idx]
    Xp = np.atleast_2d(np.asarray(new_Z, dtype=float))
    yp = np.asarray(new_y, dtype=float)

    A = X @ state.S_inv
    Ap = Xp @ state.S_inv
    h = np.einsum("kd,kd->k", X, A)
    hp = np.einsum("kd,kd->k", X, Ap)
    hpp = np.einsum("kd,kd->k", Xp, Ap)
    den = (1.0 - h) * (1.0 + hpp) + hp ** 2
    ok = np.abs(den) > SWAP_DENOMINATOR_FLOOR
    det = np.where(ok, -den, np.nan)

    # t = S^-1 b_new, kept relative to theta
    shift = -y[:, None] * A + yp[:, None] * Ap
    t = state.theta[None, :] + shift
    u1 = np.einsum("kd,kd->k", X, t)
    u2 = np.einsum("kd,kd->k", Xp, t)
    c1 = ((1.0 + hpp) * u1 - hp * u2) / det
    c2 = (-hp * u1 + (h - 1.0) * u2) / det
    delta = shift - (A * c1[:, None] + Ap * c2[:, None])
    return delta, ok


def ridge_swap_one_theta(state: RidgeSwapState, i: int, replacement: Tuple[np.ndarray, float]) -> LinearHypothesis:
    """theta after replacing training row i with `replacement`; equals a refit up to round-off."""
    if not 0 <= i < state.Z.shape[0]:
        raise InvalidArgumentError(f"row {i} outside the training set")
    x, y = replacement
    delta, ok = ridge_swap_many(state, [i], np.atleast_2d(x), [y])
    if not ok[0]:
        raise NumericalFailureError(f"two-row update denominator vanished at row {i}; refit instead")
    return LinearHypothesis(theta=state.theta + delta[0])


def sherman_morrison_update(S_inv: np.ndarray, u: np.ndarray, v: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """(S + sign * u v')^-1 from S^-1."""
    Su = S_inv @ u
    vS = v @ S_inv
    denom = 1.0 + sign * float(v @ Su)
    if abs(denom) < SWAP_DENOMINATOR_FLOOR:
        raise NumericalFailureError("rank-one update makes the matrix singular")
    return S_inv - sign * np.outer(Su, vS) / denom


def swap_differences_ridge(data: Dataset, K_half: int, lambda_: float) -> SwapResult:
    half, reserve, dropped = split_halves(data)
    m = half.n
    partition = make_partition(m, K_half)
    assignment = partition.assignment
    Z, y = half.features, half.response
    Zr, yr = reserve.features, reserve.response

    change = np.zeros(m)
    total = 0.0
    for j in range(partition.K):
        train = partition.complement(j)
        block = partition.block(j)
        state = RidgeSwapState.build(Z[train], y[train], lambda_)
        theta = state.theta

        # own-fold change: the held-out row itself is replaced
        old = (y[block] - Z[block] @ theta) ** 2
        total += math.fsum(old)
        change[block] += (yr[block] - Zr[block] @ theta) ** 2 - old

        # every training row of fold j is some i whose swap moves theta_j
        Zb, yb = Z[block], y[block]
        G = Zb.T @ Zb
        grad = 2.0 * (G @ theta - Zb.T @ yb)
        delta, ok = ridge_swap_many(state, np.arange(len(train)), Zr[train], yr[train])
        for k in np.flatnonzero(~ok):
            logger.warning(f"Swap {train[k]} in fold {j}: two-row update unstable, refitting")
            Zk = Z[train].copy()
            yk = y[train].copy()
            Zk[k], yk[k] = Zr[train[k]], yr[train[k]]
            delta[k] = RidgeSwapState.build(Zk, yk, lambda_).theta - theta
        change[train] += delta @ grad + np.einsum("kd,de,ke->k", delta, G, delta)

    return SwapResult(differences=change / m, half_cv_risk=total / m, half_n=m, dropped_rows=dropped)


def s2_cv_ridge_fast(data: Dataset, K_half: int, lambda_: float) -> float:
    """Same value as s2_cv_generic with a ridge fitter, without refitting per swap."""
    if lambda_ < 0:
        raise InvalidArgumentError(f"lambda must be non-negative, got {lambda_}")
    return swap_differences_ridge(data, K_half, lambda_).s2_cv


# --- intervals -------------------------------------------------------------

def normal_quantile(alpha: float) -> float:
    """Upper alpha/2 quantile of the standard normal."""
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    return float(stats.norm.ppf(1.0 - alpha / 2.0))


def confidence_interval(point: float, s2: float, n: int, alpha: float) -> Tuple[float, float]:
    if s2 < 0:
        raise InvalidArgumentError(f"variance estimate must be non-negative, got {s2}")
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    half = math.sqrt(s2 / n) * normal_quantile(alpha)
    return point - half, point + half


def variance_report(
    data: Dataset,
    K: int,
    fitter: Fitter,
    alpha: float = 0.05,
    center: IntervalCenter = IntervalCenter.cv,
    report: Optional[RiskReport] = None,
    threads: int = 1,
) -> Tuple[VarianceReport, RiskReport, int]:
    """Risk report, both variance estimates and the interval. Returns (variance, risk, dropped_rows)."""
    if report is None:
        report = cv_risk(data, make_partition(data.n, K), fitter, threads)
    if isinstance(fitter, RidgeFitter):
        swap = swap_differences_ridge(data, K, fitter.lambda_)
        method = VarianceMethod.ridge_woodbury
    else:
        swap = swap_differences_generic(data, K, fitter, threads)
        method = VarianceMethod.generic_refit
    s2 = swap.s2_cv
    if center == IntervalCenter.cv:
        point, n_eff = report.cv_risk, data.n
    else:
        point, n_eff = swap.half_cv_risk, swap.half_n
    lower, upper = confidence_interval(point, s2, n_eff, alpha)
    variance = VarianceReport(
        sigma1_hat=sigma1_cross(report),
        s2_cv_hat=s2,
        method=method,
        center=center,
        point=point,
        ci_lower=lower,
        ci_upper=upper,
        alpha=alpha,
    )
    return variance, report, swap.dropped_rows
