"""
Re-render per-timestep maps of a recorded run.

The run is replayed from the settings stored in its result.json; latents
are captured by an observer and checked against the recorded hashes before
anything is written.
"""

import argparse
import logging
import os

from countcluster.commands import EXIT_OK, report_error
from countcluster.data.defaults import NUM_TIMESTEPS
from countcluster.services.artifacts import read_json, read_trajectory_jsonl, write_pgm
from countcluster.services.benchmark import guidance_config_for
from countcluster.services.blobsim import Latent, latent_hash
from countcluster.services.errors import ConfigError, CountClusterError
from countcluster.services.guidance import render_normalized, run_baseline, run_guided
from countcluster.services.settings import guidance_fields, parse_int_list, sim_params, validate_settings

logger = logging.getLogger(__name__)

DEFAULT_TIMESTEPS = "50,40,30,20,10,0"


def register(subparsers, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("export-maps", parents=[common], help="Write PGMs of a recorded run")
    parser.add_argument("--run", dest="run_dir", required=True, help="Directory holding result.json and trajectory.jsonl")
    parser.add_argument("--timesteps", default=DEFAULT_TIMESTEPS, help=f"Timesteps to export (default {DEFAULT_TIMESTEPS})")
    parser.set_defaults(handler=cmd_export_maps)
    return parser


def validate_args(args: argparse.Namespace) -> tuple[bool, str]:
    """Validate export-maps flags and the recorded run's files."""
    for name in ("result.json", "trajectory.jsonl"):
        if not os.path.isfile(os.path.join(args.run_dir, name)):
            return False, f"missing {name} in {args.run_dir}"
    try:
        timesteps = parse_int_list(args.timesteps, "--timesteps")
    except ConfigError as e:
        return False, str(e)
    if not timesteps:
        return False, "invalid value for --timesteps: no timesteps given"
    outside = [t for t in timesteps if not 0 <= t <= NUM_TIMESTEPS]
    if outside:
        return False, f"invalid value for --timesteps: {outside} outside [0, {NUM_TIMESTEPS}]"
    return True, ""


def cmd_export_maps(args: argparse.Namespace) -> int:
    """Write map_t{t}.pgm for each requested timestep into --out (default <run>/maps)."""
    valid, error_msg = validate_args(args)
    if not valid:
        return report_error("VALIDATION_ERROR", error_msg)

    timesteps = sorted(set(parse_int_list(args.timesteps)), reverse=True)
    try:
        result = read_json(os.path.join(args.run_dir, "result.json"))
        recorded = {record["t"]: record["latent_hash"]
                    for record in read_trajectory_jsonl(os.path.join(args.run_dir, "trajectory.jsonl"))}
        settings = result["settings"]
        validate_settings(settings, "result.json")
        cfg, guided = guidance_config_for(result["target_count"], result["variant"], guidance_fields(settings))
        sim = sim_params(settings)
    except (OSError, ValueError, KeyError, TypeError) as e:
        return report_error("VALIDATION_ERROR", f"cannot replay run in {args.run_dir}: {e}")

    missing = [t for t in timesteps if t not in recorded]
    if missing:
        return report_error("VALIDATION_ERROR", f"trajectory has no record for t={missing}")

    captured: dict[int, Latent] = {}
    wanted = set(timesteps)

    def observer(t: int, latent: Latent) -> None:
        if t in wanted:
            captured[t] = latent

    out_dir = args.out or os.path.join(args.run_dir, "maps")
    try:
        runner = run_guided if guided else run_baseline
        runner(result["seed"], cfg, sim, observer=observer, variant=result["variant"])
        for t in timesteps:
            if latent_hash(captured[t]) != recorded[t]:
                raise CountClusterError(f"replay does not match the recorded trajectory at t={t}")
        for t in timesteps:
            write_pgm(os.path.join(out_dir, f"map_t{t}.pgm"), render_normalized(captured[t], sim.shape, cfg.smoothing))
    except ValueError as e:
        return report_error("PROCESSING_ERROR", str(e))
    except Exception as e:
        logger.error(f"Export error: {e}")
        return report_error("INTERNAL_ERROR", "An error occurred while exporting maps")

    print(f"wrote {len(timesteps)} map(s) to {out_dir}")
    return EXIT_OK
