"""
Benchmark over counts x seeds x variants.
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
from countcluster.services.benchmark import run_benchmark, write_benchmark_csvs
from countcluster.services.errors import ConfigError
from countcluster.services.settings import benchmark_spec

logger = logging.getLogger(__name__)

BENCHMARK_KEYS = ("counts", "seeds", "variants", "workers") + PIPELINE_KEYS


def add_benchmark_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--counts", help="Target counts, e.g. 2..10 or 2,4,6")
    parser.add_argument("--seeds", help="Seeds, e.g. 0..9")
    parser.add_argument("--workers", type=int, help="Worker processes")
    parser.add_argument("--heatmaps", action="store_true", help="Also write one PGM per run under heatmaps/")
    add_pipeline_arguments(parser)


def register(subparsers, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("benchmark", parents=[common], help="Run the count benchmark")
    parser.add_argument("--variants", help="Comma-separated variants, e.g. guided,baseline")
    add_benchmark_arguments(parser)
    parser.set_defaults(handler=cmd_benchmark)
    return parser


def validate_args(args: argparse.Namespace) -> tuple[bool, str]:
    """Validate benchmark flags."""
    if args.workers is not None and args.workers < 1:
        return False, f"invalid value for --workers: {args.workers} (must be >= 1)"
    if getattr(args, "variants", None) is not None and not args.variants.strip(","):
        return False, "invalid value for --variants: at least one variant is required"
    return True, ""


def cmd_benchmark(args: argparse.Namespace) -> int:
    """Write runs.csv and summary.csv and print the summary table."""
    valid, error_msg = validate_args(args)
    if not valid:
        return report_error("VALIDATION_ERROR", error_msg)

    try:
        settings = settings_for(args, BENCHMARK_KEYS)
        spec = benchmark_spec(settings)
    except ConfigError as e:
        return report_error("VALIDATION_ERROR", str(e))

    out_dir = settings["out"]
    try:
        report = run_benchmark(
            spec,
            workers=settings["workers"],
            heatmap_dir=os.path.join(out_dir, "heatmaps") if args.heatmaps else None,
            progress=not args.quiet,
        )
        write_benchmark_csvs(report, out_dir)
    except ValueError as e:
        return report_error("PROCESSING_ERROR", str(e))
    except Exception as e:
        logger.error(f"Benchmark error: {e}")
        return report_error("INTERNAL_ERROR", "An error occurred during the benchmark")

    print(report.summary_frame().to_string(index=False))
    return EXIT_OK
