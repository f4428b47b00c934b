import logging
import time
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np

from models.data import (
    Dataset,
    GaussianLinearSpec,
    ResponseKind,
    SeedSpec,
    TwoClassMixtureSpec,
)
from models.experiment import (
    AnalysisSummary,
    LdaSpeedupConfig,
    LimitLawConfig,
    LimitLawKind,
    ModelKind,
    ModelSpec,
    ResultTable,
    RidgeCoverageConfig,
    RidgeSpeedupConfig,
)
from models.reports import IntervalCenter, RiskReport, VarianceReport
from services.asymptotics_service import lda_asymptotics, ridge_asymptotics
from services.csv_io import read_csv
from services.exceptions import (
    DegenerateFitError,
    ExperimentFailureError,
    InvalidArgumentError,
    NumericalFailureError,
    ParseError,
)
from services.fitters import Fitter, LdaFitter, MeanFitter, RidgeFitter
from services.folds import make_partition
from services.limit_laws import (
    ks_distance,
    nn_exact_limit_draws,
    nn_limit_draws,
    nn_split_limit_draws,
    noiseless_exact_limit_draws,
    noiseless_limit_draws,
    simulate_nn_cv,
    simulate_noiseless_cv,
    wasserstein1,
)
from services.replicates import mean_and_se, n_var_and_se, parallel_map, ratio_se
from services.risk_service import cv_risk, expected_risk
from services.sampling import sample_dataset
from services.variance_service import confidence_interval, s2_cv_ridge_fast, variance_report

logger = logging.getLogger(__name__)

# seed tags: the sample size for replicate streams, offset for auxiliary passes
AUX_TAG_OFFSET = 1 << 40
LIMIT_TAG_OFFSET = 2 << 40


def _replicate_seed(master_seed: int, n: int, r: int) -> SeedSpec:
    return SeedSpec(master_seed=master_seed, tag=n, stream_id=r)


def _run_guarded(
    func: Callable[[int], object],
    replicates: int,
    threads: int,
    max_failure_rate: float,
    label: str,
) -> List[object]:
    """Run replicates, dropping those that raise numerical or degenerate-fit errors."""

    def guarded(r: int):
        try:
            return func(r)
        except (NumericalFailureError, DegenerateFitError) as e:
            logger.warning(f"{label}: replicate {r} failed: {e.message}")
            return None

    results = parallel_map(guarded, range(replicates), threads)
    failures = sum(res is None for res in results)
    if failures > max_failure_rate * replicates:
        raise ExperimentFailureError(
            f"{label}: {failures} of {replicates} replicates failed",
            details=[{"failures": failures, "replicates": replicates}],
        )
    return [res for res in results if res is not None]


def _new_table(cfg, master_seed: int) -> ResultTable:
    return ResultTable(
        experiment=cfg.experiment,
        config_hash=cfg.config_hash(),
        master_seed=master_seed,
        metadata={"replicates": cfg.replicates},
    )


# --- ridge coverage ----------------------------------------------------------

@lru_cache(maxsize=64)
def _cached_target(gen_json: str, lambda_: float, K: int, n: int, replicates: int, master_seed: int, threads: int):
    gen = GaussianLinearSpec.model_validate_json(gen_json)
    seed = SeedSpec(master_seed=master_seed, tag=AUX_TAG_OFFSET + n)
    return expected_risk(gen, RidgeFitter(lambda_), n, K, replicates, seed, threads)


def coverage_target(cfg: RidgeCoverageConfig, n: int, master_seed: int, threads: int = 1):
    """Expected risk of ridge trained on n - n/K rows, estimated once per (config, n)."""
    return _cached_target(
        cfg.generator.model_dump_json(), cfg.lambda_, cfg.K, n, cfg.target_replicates, master_seed, threads
    )


def run_ridge_coverage(cfg: RidgeCoverageConfig, master_seed: int, threads: int = 1) -> ResultTable:
    cfg = cfg.model_copy(update={"master_seed": master_seed})
    start = time.perf_counter()
    table = _new_table(cfg, master_seed)
    table.metadata.update({"K": cfg.K, "lambda": cfg.lambda_})
    fitter = RidgeFitter(cfg.lambda_)

    for n in cfg.n_grid:
        logger.info(f"ridge-coverage: n={n}, {cfg.replicates} replicates")
        target = coverage_target(cfg, n, master_seed, threads).value
        partition = make_partition(n, cfg.K)

        def one(r: int, n=n, partition=partition, target=target):
            data = sample_dataset(cfg.generator, n, _replicate_seed(master_seed, n, r))
            point = cv_risk(data, partition, fitter).cv_risk
            s2 = s2_cv_ridge_fast(data, cfg.K, cfg.lambda_)
            covered = []
            for level in cfg.levels:
                lo, hi = confidence_interval(point, s2, n, 1.0 - level)
                covered.append(lo <= target <= hi)
            return covered

        hits = np.asarray(_run_guarded(one, cfg.replicates, threads, cfg.max_failure_rate, f"n={n}"), dtype=float)
        table.add("target_risk", target, n=n)
        for k, level in enumerate(cfg.levels):
            p, se = mean_and_se(hits[:, k])
            table.add(f"coverage_{round(level * 100)}", p, se, n=n)

    table.runtime_seconds = time.perf_counter() - start
    return table


# --- speed-up tables ---------------------------------------------------------

def _speedup_rows(table: ResultTable, n: int, cv: np.ndarray, split: np.ndarray):
    v_split, se_split = n_var_and_se(split, n)
    v_cv, se_cv = n_var_and_se(cv, n)
    ratio, se_ratio = ratio_se(split, cv)
    table.add("n_var_split", v_split, se_split, n=n)
    table.add("n_var_cv", v_cv, se_cv, n=n)
    table.add("speedup", ratio, se_ratio, n=n)


def run_ridge_speedup(cfg: RidgeSpeedupConfig, master_seed: int, threads: int = 1) -> ResultTable:
    cfg = cfg.model_copy(update={"master_seed": master_seed})
    start = time.perf_counter()
    table = _new_table(cfg, master_seed)
    table.metadata.update({"K": cfg.K, "lambda": cfg.lambda_})
    fitter = RidgeFitter(cfg.lambda_)

    for n in cfg.n_grid:
        logger.info(f"ridge-speedup: n={n}, {cfg.replicates} replicates")
        partition = make_partition(n, cfg.K)

        def one(r: int, n=n, partition=partition):
            data = sample_dataset(cfg.generator, n, _replicate_seed(master_seed, n, r))
            report = cv_risk(data, partition, fitter)
            return report.cv_risk, report.split_risk

        pairs = np.asarray(_run_guarded(one, cfg.replicates, threads, cfg.max_failure_rate, f"n={n}"))
        _speedup_rows(table, n, pairs[:, 0], pairs[:, 1])

    gen = cfg.generator
    limit = ridge_asymptotics(gen.cov, gen.noise_var, gen.theta, cfg.lambda_)
    split, cv = limit.n_var_split(cfg.K), limit.n_var_cv(cfg.K)
    table.add("n_var_split", split)
    table.add("n_var_cv", cv)
    table.add("speedup", split / cv)
    table.runtime_seconds = time.perf_counter() - start
    return table


def run_lda_speedup(cfg: LdaSpeedupConfig, master_seed: int, threads: int = 1) -> ResultTable:
    cfg = cfg.model_copy(update={"master_seed": master_seed})
    start = time.perf_counter()
    table = _new_table(cfg, master_seed)
    gen = TwoClassMixtureSpec(class1=cfg.class1, class0=cfg.class0)
    fitter = LdaFitter()
    redraw_limit = 50

    for n in cfg.n_grid:
        logger.info(f"lda-speedup: n={n}, {cfg.replicates} replicates")
        partition = make_partition(n, 2)

        def one(r: int, n=n, partition=partition):
            seed = _replicate_seed(master_seed, n, r)
            for _ in range(redraw_limit):
                data = sample_dataset(gen, n, seed)
                try:
                    report = cv_risk(data, partition, fitter)
                    return report.cv_risk, report.split_risk, seed.attempt
                except DegenerateFitError:
                    seed = seed.retry()
            raise ExperimentFailureError(f"replicate {r} at n={n} kept drawing a single class")

        results = parallel_map(one, range(cfg.replicates), threads)
        redraws = sum(res[2] for res in results)
        if redraws:
            logger.warning(f"lda-speedup: n={n} redrew {redraws} single-class replicates")
        if redraws > cfg.max_redraw_rate * cfg.replicates:
            raise ExperimentFailureError(
                f"n={n}: {redraws} redraws exceed {cfg.max_redraw_rate:.2%} of replicates",
                details=[{"n": n, "redraws": redraws}],
            )
        arr = np.asarray([res[:2] for res in results])
        _speedup_rows(table, n, arr[:, 0], arr[:, 1])
        table.metadata[f"redraws_{n}"] = redraws

    limit = lda_asymptotics(cfg.class1, cfg.class0)
    split, cv = limit.variance_pair
    table.add("n_var_split", split)
    table.add("n_var_cv", cv)
    table.add("speedup", limit.speedup)
    table.runtime_seconds = time.perf_counter() - start
    return table


# --- limit laws --------------------------------------------------------------

def _limit_sample(master_seed: int, stream: int, size: int, sampler) -> np.ndarray:
    rng = SeedSpec(master_seed=master_seed, tag=LIMIT_TAG_OFFSET, stream_id=stream).generator()
    return sampler(rng, size)


def self_distance_baseline(
    master_seed: int,
    sampler,
    sizes: Tuple[int, int],
    runs: int,
    distance=wasserstein1,
) -> float:
    """Mean distance between independent sampler runs at the experiment's sample sizes."""
    values = []
    for b in range(runs):
        a = _limit_sample(master_seed, 10 + 2 * b, sizes[0], sampler)
        c = _limit_sample(master_seed, 11 + 2 * b, sizes[1], sampler)
        values.append(distance(a, c))
    return float(np.mean(values))


def run_limit_law(cfg: LimitLawConfig, master_seed: int, threads: int = 1) -> ResultTable:
    cfg = cfg.model_copy(update={"master_seed": master_seed})
    start = time.perf_counter()
    table = _new_table(cfg, master_seed)
    n = cfg.n
    table.metadata.update({"which": cfg.which.value, "limit_draws": cfg.limit_draws})

    if cfg.which == LimitLawKind.nn:
        pairs = np.asarray(
            parallel_map(lambda r: simulate_nn_cv(n, _replicate_seed(master_seed, n, r)), range(cfg.replicates), threads)
        )
        cv, split_errors = pairs[:, 0], pairs[:, 1] / 2.0
        displayed = _limit_sample(master_seed, 0, cfg.limit_draws, nn_limit_draws)
        exact = _limit_sample(master_seed, 1, cfg.limit_draws, nn_exact_limit_draws)
        split_limit = _limit_sample(master_seed, 2, cfg.limit_draws, nn_split_limit_draws)
        baseline = self_distance_baseline(
            master_seed, nn_exact_limit_draws, (cfg.replicates, cfg.limit_draws), cfg.baseline_runs
        )
        table.add("mean_sqrt_n_cv", *mean_and_se(cv), n=n)
        table.add("mean_split_errors", *mean_and_se(split_errors), n=n)
        table.add("mean_displayed_limit", *mean_and_se(displayed))
        table.add("mean_exact_limit", *mean_and_se(exact))
        table.add("w1_displayed", wasserstein1(cv, displayed), n=n)
        table.add("w1_exact", wasserstein1(cv, exact), n=n)
        table.add("w1_split", wasserstein1(split_errors, split_limit), n=n)
        table.add("w1_baseline", baseline)
        table.add("w1_threshold", 3.0 * baseline)
    else:
        K = cfg.K
        table.metadata["K"] = K
        stats = np.asarray(
            parallel_map(
                lambda r: simulate_noiseless_cv(n, K, _replicate_seed(master_seed, n, r)), range(cfg.replicates), threads
            )
        )
        displayed = _limit_sample(master_seed, 0, cfg.limit_draws, lambda rng, m: noiseless_limit_draws(rng, m, K))
        exact = _limit_sample(master_seed, 1, cfg.limit_draws, lambda rng, m: noiseless_exact_limit_draws(rng, m, K))
        baseline = self_distance_baseline(
            master_seed,
            lambda rng, m: noiseless_exact_limit_draws(rng, m, K),
            (cfg.replicates, cfg.limit_draws),
            cfg.baseline_runs,
            distance=ks_distance,
        )
        table.add("mean_statistic", *mean_and_se(stats), n=n)
        table.add("mean_displayed_limit", K / (4.0 * (K - 1)))
        table.add("mean_exact_limit", K / (K - 1.0))
        table.add("ks_displayed", ks_distance(stats, displayed), n=n)
        table.add("ks_exact", ks_distance(stats, exact), n=n)
        table.add("ks_baseline", baseline)
        table.add("ks_threshold", 3.0 * baseline)

    table.runtime_seconds = time.perf_counter() - start
    return table


# --- user data -----------------------------------------------------------------

def build_model(spec: ModelSpec, features: np.ndarray, y: Optional[np.ndarray]) -> Tuple[Fitter, Dataset]:
    """Fitter plus the dataset view it trains on."""
    if spec.kind == ModelKind.ridge:
        if y is None:
            raise ParseError("ridge needs a response column 'y'", column="y")
        return RidgeFitter(spec.lambda_), Dataset(features=features, response=y, kind=ResponseKind.real)
    if spec.kind == ModelKind.mean:
        # the location of y when present, otherwise of x1
        target = y if y is not None else features[:, 0]
        return MeanFitter(), Dataset(features=target)
    if y is None:
        raise ParseError("lda needs a label column 'y'", column="y")
    if features.shape[1] != 1:
        raise InvalidArgumentError("lda is univariate: use a single feature column x1")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ParseError("lda labels in column y must be 0 or 1", column="y")
    return LdaFitter(), Dataset(features=features, response=y, kind=ResponseKind.label)


def analyze_dataset(
    data: Dataset,
    fitter: Fitter,
    K: int,
    alpha: float = 0.05,
    center: IntervalCenter = IntervalCenter.cv,
    shuffle_seed: Optional[SeedSpec] = None,
    threads: int = 1,
) -> Tuple[VarianceReport, RiskReport, AnalysisSummary]:
    if shuffle_seed is not None:
        perm = make_partition(data.n, K, shuffle_seed).order
        data = data.subset(perm)
    variance, report, dropped = variance_report(data, K, fitter, alpha, center, threads=threads)
    summary = AnalysisSummary(
        n=data.n,
        K=K,
        model=fitter.describe(),
        cv_risk=report.cv_risk,
        split_risk=report.split_risk,
        sigma1_hat=variance.sigma1_hat,
        s2_cv_hat=variance.s2_cv_hat,
        method=variance.method.value,
        alpha=alpha,
        ci_lower=variance.ci_lower,
        ci_upper=variance.ci_upper,
        dropped_rows=dropped,
    )
    logger.info(f"Analysis done: n={data.n}, K={K}, model={summary.model}, cv_risk={report.cv_risk:.6g}")
    return variance, report, summary


def analyze_csv(
    source,
    K: int,
    model: ModelSpec,
    alpha: float = 0.05,
    center: IntervalCenter = IntervalCenter.cv,
    shuffle_seed: Optional[SeedSpec] = None,
    threads: int = 1,
) -> Tuple[VarianceReport, RiskReport, AnalysisSummary]:
    features, y = read_csv(source)
    fitter, data = build_model(model, features, y)
    return analyze_dataset(data, fitter, K, alpha, center, shuffle_seed, threads)
