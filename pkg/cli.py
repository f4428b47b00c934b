#!/usr/bin/env python3
"""
Command-line entry point: Monte Carlo experiments, CSV analysis and table verification.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from pydantic import TypeAdapter, ValidationError

from config import Settings, configure_logging, get_settings
from models.data import SeedSpec
from models.experiment import (
    ExperimentConfig,
    LdaSpeedupConfig,
    LimitLawConfig,
    ModelSpec,
    OutputFormat,
    RidgeCoverageConfig,
    RidgeSpeedupConfig,
)
from models.reports import IntervalCenter
from services.csv_io import read_table_hash, write_output
from services.exceptions import ConfigError, CVRiskError
from services.experiment_service import (
    analyze_csv,
    run_lda_speedup,
    run_limit_law,
    run_ridge_coverage,
    run_ridge_speedup,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = {
    "ridge-coverage": (RidgeCoverageConfig, run_ridge_coverage),
    "ridge-speedup": (RidgeSpeedupConfig, run_ridge_speedup),
    "lda-speedup": (LdaSpeedupConfig, run_lda_speedup),
    "limit-law": (LimitLawConfig, run_limit_law),
}


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"Config {path} must be a JSON object")
    return raw


def load_config(path: Optional[str], experiment: str):
    """Experiment config from JSON; defaults when no file is given."""
    model, _ = EXPERIMENTS[experiment]
    if path is None:
        return model()
    raw = _read_json(path)
    raw.setdefault("experiment", experiment)
    if raw["experiment"] != experiment:
        raise ConfigError(f"Config {path} is for '{raw['experiment']}', not '{experiment}'")
    try:
        return TypeAdapter(ExperimentConfig).validate_python(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}", details=json.loads(e.json()))


def resolve_run(cfg, args, settings: Settings):
    """CLI flags override JSON values, which override environment settings."""
    seed = args.seed if args.seed is not None else cfg.master_seed
    if seed is None:
        seed = settings.master_seed
    threads = args.threads or cfg.threads or settings.threads
    fmt = OutputFormat(args.format) if args.format else (cfg.format or settings.output_format)
    out = args.out or cfg.out
    return seed, threads, fmt, out


def cmd_experiment(args, settings: Settings) -> int:
    cfg = load_config(args.config, args.command)
    seed, threads, fmt, out = resolve_run(cfg, args, settings)
    _, runner = EXPERIMENTS[args.command]
    logger.info(f"Running {args.command} with seed {seed} on {threads} thread(s)")
    table = runner(cfg, seed, threads)
    write_output(table.render(fmt), out)
    logger.info(f"{args.command} finished in {table.runtime_seconds:.1f}s")
    return 0


def cmd_analyze(args, settings: Settings) -> int:
    try:
        model = ModelSpec.parse(args.model)
    except (ValueError, ValidationError):
        raise ConfigError(f"Unknown model '{args.model}': expected mean, lda or ridge(<lambda>)")
    shuffle = SeedSpec(master_seed=args.shuffle_seed) if args.shuffle_seed is not None else None
    _, _, summary = analyze_csv(
        args.csv,
        args.K,
        model,
        alpha=args.alpha,
        center=IntervalCenter(args.center),
        shuffle_seed=shuffle,
        threads=args.threads or settings.threads,
    )
    fmt = OutputFormat(args.format) if args.format else settings.output_format
    print(summary.to_csv() if fmt == OutputFormat.csv else summary.to_text(), end="")
    if args.out:
        write_output(summary.to_csv(), args.out)
    return 0


def cmd_verify(args, settings: Settings) -> int:
    embedded = read_table_hash(args.table)
    if embedded is None:
        raise ConfigError(f"No config hash found in {args.table}")
    experiment = _read_json(args.config).get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"Config {args.config} names no known experiment")
    cfg = load_config(args.config, experiment)
    seed = args.seed if args.seed is not None else (cfg.master_seed if cfg.master_seed is not None else settings.master_seed)
    recomputed = cfg.model_copy(update={"master_seed": seed}).config_hash()
    if recomputed != embedded:
        raise ConfigError(
            f"Config hash mismatch: table has {embedded}, config gives {recomputed}",
            details=[{"embedded": embedded, "recomputed": recomputed}],
        )
    print(f"OK {recomputed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvrisk", description="Cross-validated risk inference")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"Run the {name} experiment")
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="Master seed")
        p.add_argument("--threads", type=int, help="Worker threads")
        p.add_argument("--out", help="Output path (stdout when omitted)")
        p.add_argument("--format", choices=[f.value for f in OutputFormat])
        p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("analyze", help="Cross-validated risk, variance and interval for a CSV dataset")
    p.add_argument("csv", help="CSV with header x1..xd and optional y")
    p.add_argument("--K", type=int, default=5, help="Fold count")
    p.add_argument("--model", default="mean", help="mean, lda or ridge(<lambda>)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--center", choices=[c.value for c in IntervalCenter], default=IntervalCenter.cv.value)
    p.add_argument("--shuffle-seed", type=int, help="Permute rows before blocking")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="Also write the machine-readable CSV here")
    p.add_argument("--format", choices=[f.value for f in OutputFormat])
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("verify", help="Check a table's embedded config hash")
    p.add_argument("--config", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ConfigError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    configure_logging(settings)
    try:
        return args.handler(args, settings)
    except CVRiskError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
