"""
Single guided (or baseline) run.
"""

import argparse
import logging
import os

from countcluster.commands import (
    EXIT_OK,
    PIPELINE_KEYS,
    add_pipeline_arguments,
    report_error,
    settings_for,
)
from countcluster.services.artifacts import (
    run_result_to_dict,
    write_json,
    write_map_csv,
    write_pgm,
    write_trajectory_jsonl,
)
from countcluster.services.blobsim import RunResult
from countcluster.services.errors import ConfigError
from countcluster.services.guidance import run_baseline, run_guided
from countcluster.services.settings import guidance_config, public_settings, sim_params

logger = logging.getLogger(__name__)

RUN_KEYS = ("k", "seed") + PIPELINE_KEYS


def register(subparsers, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("run", parents=[common], help="Simulate one run and write its artifacts")
    parser.add_argument("--k", type=int, help="Target object count")
    parser.add_argument("--seed", type=int, help="Run seed")
    parser.add_argument("--baseline", action="store_true", help="Run without guidance")
    add_pipeline_arguments(parser)
    parser.set_defaults(handler=cmd_run)
    return parser


def validate_args(args: argparse.Namespace) -> tuple[bool, str]:
    """Validate run flags."""
    if args.k is not None and not 1 <= args.k <= 10:
        return False, f"invalid value for --k: {args.k} (must be between 1 and 10)"
    if args.seed is not None and args.seed < 0:
        return False, f"invalid value for --seed: {args.seed} (must be >= 0)"
    return True, ""


def cmd_run(args: argparse.Namespace) -> int:
    """
    Run one trajectory and write:
        trajectory.jsonl, final.pgm, final.csv, result.json

    Prints "target=K counted=N" on success.
    """
    valid, error_msg = validate_args(args)
    if not valid:
        return report_error("VALIDATION_ERROR", error_msg)

    try:
        settings = settings_for(args, RUN_KEYS)
        cfg = guidance_config(settings)
        sim = sim_params(settings)
    except ConfigError as e:
        return report_error("VALIDATION_ERROR", str(e))

    try:
        runner = run_baseline if args.baseline else run_guided
        result = runner(settings["seed"], cfg, sim)
        write_run(result, settings["out"], public_settings(settings))
    except ValueError as e:
        return report_error("PROCESSING_ERROR", str(e))
    except Exception as e:
        logger.error(f"Run error: {e}")
        return report_error("INTERNAL_ERROR", "An error occurred during the run")

    print(f"target={result.target_count} counted={result.counted}")
    return EXIT_OK


def write_run(result: RunResult, out_dir: str, settings: dict) -> None:
    """Write a run's artifacts into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory_jsonl(os.path.join(out_dir, "trajectory.jsonl"), result.trajectory)
    write_pgm(os.path.join(out_dir, "final.pgm"), result.final_map)
    write_map_csv(os.path.join(out_dir, "final.csv"), result.final_map)
    write_json(os.path.join(out_dir, "result.json"), run_result_to_dict(result, settings))
    logger.info("Wrote run artifacts to %s", out_dir)
