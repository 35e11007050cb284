"""
Ablation: guided against no-min-distance and k-scaling.
"""

import argparse
import logging

from countcluster.commands import EXIT_OK, report_error, settings_for
from countcluster.commands.benchmark import BENCHMARK_KEYS, add_benchmark_arguments
from countcluster.commands.benchmark import validate_args as validate_benchmark_args
from countcluster.data.defaults import ABLATION_VARIANTS
from countcluster.services.benchmark import ablation_deltas, run_benchmark, write_benchmark_csvs
from countcluster.services.errors import ConfigError
from countcluster.services.settings import benchmark_spec

logger = logging.getLogger(__name__)

ABLATE_KEYS = tuple(key for key in BENCHMARK_KEYS if key != "variants")


def register(subparsers, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("ablate", parents=[common], help="Compare ablations against guided")
    add_benchmark_arguments(parser)
    parser.set_defaults(handler=cmd_ablate)
    return parser


def validate_args(args: argparse.Namespace) -> tuple[bool, str]:
    return validate_benchmark_args(args)


def cmd_ablate(args: argparse.Namespace) -> int:
    """Summary rows for each variant with delta_* columns against guided."""
    valid, error_msg = validate_args(args)
    if not valid:
        return report_error("VALIDATION_ERROR", error_msg)

    try:
        settings = settings_for(args, ABLATE_KEYS)
        spec = benchmark_spec(settings, variants=list(ABLATION_VARIANTS))
    except ConfigError as e:
        return report_error("VALIDATION_ERROR", str(e))

    try:
        report = run_benchmark(spec, workers=settings["workers"], progress=not args.quiet)
        deltas = ablation_deltas(report.summary, reference="guided")
        write_benchmark_csvs(report, settings["out"], summary=deltas)
    except ValueError as e:
        return report_error("PROCESSING_ERROR", str(e))
    except Exception as e:
        logger.error(f"Ablation error: {e}")
        return report_error("INTERNAL_ERROR", "An error occurred during the ablation")

    print(deltas.to_string(index=False))
    return EXIT_OK
