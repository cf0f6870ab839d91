"""Command-line entry point for the consensus experiment harness."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .config import Config, ConfigError, RunConfig, load_run_config
from .services import ExperimentError, ExperimentService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2

COMMANDS = ("gen", "weights", "solve", "oracle", "batch")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value run configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="uqadmm",
        description="Uncertainty-weighted consensus ADMM experiments",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen", parents=[common], help="generate a split test problem")
    commands.add_parser("weights", parents=[common], help="compute consensus weights")
    commands.add_parser("solve", parents=[common], help="run the configured solver")
    commands.add_parser("oracle", parents=[common], help="dense reference solutions (n <= cap)")
    batch = commands.add_parser("batch", parents=[common], help="weighted vs unweighted over a manifest")
    batch.add_argument("manifest", nargs="?", help="manifest of MatrixMarket files (bundled collection if omitted)")
    return parser


def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, Config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config).with_overrides(out=args.out, seed=args.seed)
    manifest = getattr(args, "manifest", None)
    return cfg.with_overrides(manifest=manifest)


def run_command(command: str, cfg: RunConfig, service: ExperimentService) -> int:
    """Execute one subcommand and return its exit code."""

    if command == "gen":
        problem = service.generate(cfg)
        print(f"generated {problem.name}: n={problem.n} subproblems={problem.n_sub} out={cfg.out}")
    elif command == "weights":
        report = service.compute_weights(cfg)
        print(f"weights: method={report.method} rank={report.rank} "
              f"retained={report.retained_ranks} time_s={report.wall_time_s:.3f}")
    elif command == "solve":
        summary = service.solve(cfg)
        print(summary.line())
        if summary.failed:
            return EXIT_SOLVER_FAILURE
    elif command == "oracle":
        result = service.oracle(cfg)
        print(f"oracle: n={result.map_estimate.shape[0]} subproblems={len(result.posterior_diags)} out={cfg.out}")
    elif command == "batch":
        rows = service.batch(cfg)
        failed = sum(1 for row in rows if row.status != "ok")
        wins = sum(1 for row in rows if row.status == "ok" and row.weighted_relerr <= row.unweighted_relerr)
        print(f"batch: rows={len(rows)} weighted_wins={wins} failed={failed}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None, service: Optional[ExperimentService] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    logger.info("uqadmm %s", args.command)

    try:
        cfg = _run_config(args)
        return run_command(args.command, cfg, service or ExperimentService())
    except ExperimentError as exc:
        logger.error("Solver failure: %s", exc)
        return EXIT_SOLVER_FAILURE
    except (ConfigError, ValueError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
