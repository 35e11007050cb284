"""
Inspect clustering on a stored attention map.
"""

import argparse
import logging
import os

from countcluster.commands import EXIT_OK, report_error, settings_for
from countcluster.services.artifacts import (
    cluster_set_to_dict,
    loss_report_to_dict,
    read_map_csv,
    write_json,
    write_labels_csv,
    write_pgm,
)
from countcluster.services.attention_core import preprocess
from countcluster.services.errors import ConfigError, InvalidAttentionMapError
from countcluster.services.guidance import build_structure
from countcluster.services.objective import clustering_loss
from countcluster.services.settings import guidance_config

logger = logging.getLogger(__name__)

INSPECT_KEYS = ("k", "tau")


def register(subparsers, common: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("inspect", parents=[common], help="Cluster a map CSV and dump targets and loss")
    parser.add_argument("--map", dest="map_path", required=True, help="Attention map CSV (H rows of W values)")
    parser.add_argument("--k", type=int, help="Target object count")
    parser.add_argument("--tau", type=float, help="Cluster threshold in (0, 1)")
    parser.set_defaults(handler=cmd_inspect)
    return parser


def validate_args(args: argparse.Namespace) -> tuple[bool, str]:
    """Validate inspect flags."""
    if not os.path.isfile(args.map_path):
        return False, f"map file not found: {args.map_path}"
    if args.k is not None and args.k < 1:
        return False, f"invalid value for --k: {args.k} (must be >= 1)"
    return True, ""


def cmd_inspect(args: argparse.Namespace) -> int:
    """
    Preprocess the map, build clusters and targets for k, and write:
        clusters.json, labels.csv, loss.json, normalized.pgm, target_{i}.pgm
    """
    valid, error_msg = validate_args(args)
    if not valid:
        return report_error("VALIDATION_ERROR", error_msg)

    try:
        settings = settings_for(args, INSPECT_KEYS)
        cfg = guidance_config(settings)
        raw = read_map_csv(args.map_path)
    except (ConfigError, InvalidAttentionMapError) as e:
        return report_error("VALIDATION_ERROR", str(e))

    out_dir = settings["out"]
    try:
        attention, _ = preprocess(raw, cfg.smoothing)
        clusters, targets = build_structure(attention, cfg)
        report = clustering_loss(attention, clusters, targets, cfg.epsilon, cfg.loss_scaling, cfg.kl_normalization)
    except ValueError as e:
        return report_error("PROCESSING_ERROR", str(e))
    except Exception as e:
        logger.error(f"Inspect error: {e}")
        return report_error("INTERNAL_ERROR", "An error occurred while inspecting the map")

    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "clusters.json"), cluster_set_to_dict(clusters))
    write_labels_csv(os.path.join(out_dir, "labels.csv"), clusters.labels)
    write_json(os.path.join(out_dir, "loss.json"), loss_report_to_dict(report))
    write_pgm(os.path.join(out_dir, "normalized.pgm"), attention)
    for index, target in enumerate(targets):
        write_pgm(os.path.join(out_dir, f"target_{index}.pgm"), target.values)

    for index, (center, kl) in enumerate(zip(clusters.centers, report.per_cluster_kl)):
        print(f"cluster {index}: center=({center.row}, {center.col}) radius={clusters.radii[index]:.3f} kl={kl:.6f}")
    print(f"loss={report.total:.6f} relaxations={clusters.relaxation_events}")
    return EXIT_OK
