"""
CountCluster

Attention-clustering guidance that steers a simulated generation toward a
requested number of objects, plus the benchmark and ablation harness
around it.
"""

import argparse
import logging
import os
from typing import Optional, Sequence

__version__ = "1.0.0"


def load_settings(config_name: Optional[str] = None, config_path: Optional[str] = None,
                  overrides: Optional[dict] = None) -> dict:
    """Settings factory: preset, then config file, then overrides."""
    from countcluster.services.settings import resolve_settings

    return resolve_settings(preset=config_name or os.environ.get("COUNTCLUSTER_CONFIG"),
                            config_path=config_path, overrides=overrides)


def create_parser() -> argparse.ArgumentParser:
    """Parser factory pattern."""
    parser = argparse.ArgumentParser(
        prog="countcluster",
        description="Object-count guidance by attention clustering on a simulated latent.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    # Register commands
    from countcluster.commands import ablate, benchmark, common_parser, export_maps, inspect, run

    common = common_parser()
    for command in (run, benchmark, ablate, inspect, export_maps):
        command.register(subparsers, common)

    return parser


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, configure logging and dispatch to a subcommand."""
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return args.handler(args)
