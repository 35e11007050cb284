"""
Command-line subcommands.

Each module exposes register(subparsers), validate_args(args) and a
cmd_* handler returning the process exit code.
"""

import argparse
import sys

from countcluster import load_settings
from countcluster.services.errors import ConfigError
from countcluster.services.settings import parse_int_list, parse_refinement

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PROCESSING = 3

# Error code -> exit code
ERROR_CODES = {
    "VALIDATION_ERROR": EXIT_VALIDATION,
    "PROCESSING_ERROR": EXIT_PROCESSING,
    "INTERNAL_ERROR": EXIT_PROCESSING,
}

# Settings keys behind add_pipeline_arguments
PIPELINE_KEYS = (
    "size", "tau", "alpha", "noise0", "min_area", "objects",
    "epsilon", "guided_timesteps", "refinement", "max_refinement_iters",
    "kernel_size", "kernel_sigma", "kl_normalization", "radius_mode",
)


def report_error(code: str, message: str) -> int:
    """Print an error to stderr and return its exit code."""
    print(f"error [{code}]: {message}", file=sys.stderr)
    return ERROR_CODES[code]


def common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", help="JSON or YAML config file")
    group.add_argument("--preset", help="Preset from config.py (default: $COUNTCLUSTER_CONFIG or toy)")
    group.add_argument("--out", help="Output directory (default: $COUNTCLUSTER_OUT or out)")
    group.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    group.add_argument("--quiet", "-q", action="store_true", help="No progress bars")
    return parser


def add_pipeline_arguments(parser: argparse.ArgumentParser) -> None:
    """Simulator and guidance flags used by run, benchmark and ablate."""
    group = parser.add_argument_group("pipeline")
    group.add_argument("--size", type=int, help="Map size H = W")
    group.add_argument("--tau", type=float, help="Cluster threshold in (0, 1)")
    group.add_argument("--alpha", help="Step size, or one per guided timestep (comma separated)")
    group.add_argument("--noise0", type=float, help="Noise scale at t = 50")
    group.add_argument("--min-area", dest="min_area", type=int, help="Smallest counted region in patches")
    group.add_argument("--objects", help="Object categories cycled over seeds, or 'all'")

    schedule = parser.add_argument_group("guidance schedule")
    schedule.add_argument("--guided-timesteps", dest="guided_timesteps",
                          help="Timesteps with a single update, e.g. 41..50 or 50,49 (empty for none)")
    schedule.add_argument("--refinement", help="Refinement pairs t:threshold, e.g. 50:0.2,40:0.15 (empty for none)")
    schedule.add_argument("--max-refinement-iters", dest="max_refinement_iters", type=int,
                          help="Cap on updates per refinement timestep")
    schedule.add_argument("--epsilon", type=float, help="Lower clamp on Q inside the KL term")
    schedule.add_argument("--kernel-size", dest="kernel_size", type=int, help="Smoothing kernel size (odd)")
    schedule.add_argument("--kernel-sigma", dest="kernel_sigma", type=float, help="Smoothing kernel sigma")
    schedule.add_argument("--kl-normalization", dest="kl_normalization",
                          help="Divergence form: generalized, literal or simplex")
    schedule.add_argument("--radius-mode", dest="radius_mode", help="Cluster radius rule: region or cell")


def collect_overrides(args: argparse.Namespace, keys: tuple[str, ...]) -> dict:
    """Flag values for the given settings keys; unset flags are None."""
    overrides = {key: getattr(args, key, None) for key in keys}
    if overrides.get("alpha") is not None:
        try:
            overrides["alpha"] = [float(part) for part in str(overrides["alpha"]).split(",")]
        except ValueError:
            overrides["alpha"] = str(overrides["alpha"])
    for key, parse in (("guided_timesteps", parse_int_list), ("refinement", parse_refinement)):
        if overrides.get(key) is not None:
            try:
                overrides[key] = parse(overrides[key])
            except ConfigError:
                # Left as text so validation names the flag
                overrides[key] = str(overrides[key])
    return overrides


def settings_for(args: argparse.Namespace, keys: tuple[str, ...]) -> dict:
    """Resolve preset < config file < flags for a subcommand."""
    overrides = collect_overrides(args, keys + ("out", "preset"))
    return load_settings(config_path=args.config, overrides=overrides)

