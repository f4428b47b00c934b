import logging
import math
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from models.data import (
    Dataset,
    FoldPartition,
    GaussianLinearSpec,
    GaussianLocationSpec,
    SeedSpec,
    SymmetricBernoulliSpec,
    TwoClassMixtureSpec,
    UniformThresholdSpec,
)
from models.hypothesis import (
    Hypothesis,
    LdaHypothesis,
    LinearHypothesis,
    LossKind,
    MeanHypothesis,
    NearestNeighborHypothesis,
)
from models.reports import RiskReport, TargetKind, TargetRisk
from services.exceptions import DegenerateFitError, InvalidArgumentError, UnsupportedError
from services.fitters import Fitter, MeanFitter, losses
from services.folds import make_partition
from services.replicates import mean_and_se, parallel_map
from services.sampling import draw_from, sample_dataset

logger = logging.getLogger(__name__)


class MonteCarlo(BaseModel):
    m: int = Field(..., ge=1, description="Fresh draws")
    seed: SeedSpec


def _fit_fold(data: Dataset, partition: FoldPartition, fitter: Fitter, j: int):
    try:
        h = fitter.fit(data.subset(partition.complement(j)))
    except DegenerateFitError as e:
        raise e.at_fold(j)
    return h, fitter.losses(h, data.subset(partition.block(j)))


def cv_risk(data: Dataset, partition: FoldPartition, fitter: Fitter, threads: int = 1) -> RiskReport:
    """Fit on each fold complement, evaluate on the fold, average all n held-out losses."""
    if partition.n != data.n:
        raise InvalidArgumentError(f"partition covers {partition.n} rows, dataset has {data.n}")
    fits = parallel_map(lambda j: _fit_fold(data, partition, fitter, j), range(partition.K), threads)
    hypotheses = [h for h, _ in fits]
    per_fold = [np.asarray(l, dtype=float) for _, l in fits]
    all_losses = np.concatenate(per_fold)
    return RiskReport(
        cv_risk=math.fsum(all_losses) / data.n,
        split_risk=math.fsum(per_fold[0]) / len(per_fold[0]),
        per_fold_losses=per_fold,
        hypotheses=hypotheses,
        partition=partition,
    )


def split_risk(data: Dataset, partition: FoldPartition, fitter: Fitter) -> float:
    """Mean loss over fold 0 of the hypothesis fit on its complement."""
    _, fold_losses = _fit_fold(data, partition, fitter, 0)
    return math.fsum(fold_losses) / len(fold_losses)


def default_loss(h: Hypothesis) -> LossKind:
    if isinstance(h, (LdaHypothesis, NearestNeighborHypothesis)):
        return LossKind.zero_one
    return LossKind.square


def _lda_error(h: LdaHypothesis, gen: TwoClassMixtureSpec) -> float:
    mid = 0.5 * (h.mu1 + h.mu0)
    F1, F0 = gen.class1.frozen().cdf(mid), gen.class0.frozen().cdf(mid)
    if h.mu1 > h.mu0:
        # predicts 1 on (mid, inf)
        return 0.5 * (F1 + 1.0 - F0)
    if h.mu1 < h.mu0:
        return 0.5 * (1.0 - F1 + F0)
    return 0.5


def _nn_error(h: NearestNeighborHypothesis, gen: UniformThresholdSpec) -> float:
    if h.points.shape[1] != 1:
        raise UnsupportedError("closed-form 1-NN risk is univariate only")
    x = h.points[:, 0]
    order = np.lexsort((np.arange(len(x)), x))
    xs, ls = x[order], h.labels[order]
    # keep the lowest index among duplicate values
    keep = np.concatenate(([True], np.diff(xs) > 0))
    xs, ls = xs[keep], ls[keep]
    bounds = np.concatenate(([0.0], np.clip(0.5 * (xs[1:] + xs[:-1]), 0.0, 1.0), [1.0]))
    lo, hi = bounds[:-1], bounds[1:]
    t = gen.threshold
    below = np.clip(np.minimum(hi, t) - lo, 0.0, None)  # true label 1
    above = np.clip(hi - np.maximum(lo, t), 0.0, None)  # true label 0
    return float(np.sum(np.where(ls == 1, above, below)))


def closed_form_risk(h: Hypothesis, gen) -> float:
    if isinstance(h, LinearHypothesis) and isinstance(gen, GaussianLinearSpec):
        delta = h.theta - gen.theta
        return float(delta @ gen.cov @ delta + gen.noise_var)
    if isinstance(h, LdaHypothesis) and isinstance(gen, TwoClassMixtureSpec):
        return float(_lda_error(h, gen))
    if isinstance(h, MeanHypothesis) and isinstance(gen, GaussianLocationSpec):
        return gen.var + (gen.mean - h.theta) ** 2
    if isinstance(h, MeanHypothesis) and isinstance(gen, SymmetricBernoulliSpec):
        return 1.0 + h.theta ** 2
    if isinstance(h, NearestNeighborHypothesis) and isinstance(gen, UniformThresholdSpec):
        return _nn_error(h, gen)
    raise UnsupportedError(f"no closed-form risk for {type(h).__name__} under '{gen.kind}'")


def true_risk(
    h: Hypothesis,
    gen,
    method: Union[str, MonteCarlo] = "closed-form",
    loss: Optional[LossKind] = None,
) -> TargetRisk:
    """Expected loss of a fixed hypothesis on a fresh observation."""
    if isinstance(method, MonteCarlo):
        fresh = draw_from(gen, max(method.m, 2), method.seed.generator())
        values = losses(loss or default_loss(h), h, fresh)[: method.m]
        value, se = mean_and_se(values)
        return TargetRisk(value=value, kind=TargetKind.hypothesis, standard_error=None if method.m < 2 else se)
    if method != "closed-form":
        raise InvalidArgumentError(f"unknown risk method {method!r}")
    if loss is not None and loss != default_loss(h):
        raise UnsupportedError(f"closed-form risk is only available for loss '{default_loss(h).value}'")
    return TargetRisk(value=closed_form_risk(h, gen), kind=TargetKind.hypothesis)


def ensemble_average_risk(report: RiskReport, gen) -> TargetRisk:
    """Mean true risk of the K fold hypotheses."""
    values = [closed_form_risk(h, gen) for h in report.hypotheses]
    return TargetRisk(value=math.fsum(values) / len(values), kind=TargetKind.ensemble_average)


def _mean_fitter_expected(gen, partition: FoldPartition) -> Optional[float]:
    if isinstance(gen, GaussianLocationSpec):
        var = gen.var
    elif isinstance(gen, SymmetricBernoulliSpec):
        var = 1.0
    else:
        return None
    train_sizes = [partition.n - s for s in partition.sizes]
    return float(np.mean([var + var / m for m in train_sizes]))


def expected_risk(
    gen,
    fitter: Fitter,
    n: int,
    K: int,
    replicates: int,
    seed: SeedSpec,
    threads: int = 1,
) -> TargetRisk:
    """Expectation of the ensemble-average risk over datasets of size n."""
    partition = make_partition(n, K)
    if isinstance(fitter, MeanFitter) and fitter.eval_loss == LossKind.square:
        exact = _mean_fitter_expected(gen, partition)
        if exact is not None:
            return TargetRisk(value=exact, kind=TargetKind.expected, standard_error=0.0)

    def one(r: int) -> float:
        data = sample_dataset(gen, n, seed.child(r))
        hyps = [fitter.fit(data.subset(partition.complement(j))) for j in range(K)]
        return math.fsum(closed_form_risk(h, gen) for h in hyps) / K

    values = parallel_map(one, range(replicates), threads)
    value, se = mean_and_se(values)
    logger.info(f"Expected risk at n={n}, K={K}: {value:.6f} (SE {se:.2e}, {replicates} replicates)")
    return TargetRisk(value=value, kind=TargetKind.expected, standard_error=se)
