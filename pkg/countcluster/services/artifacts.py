"""
File formats for maps, clusters, losses and runs.

Maps: PGM (P2, maxval 255) for looking at, CSV with full float precision
for exact round-trips. Everything else is JSON or JSONL with sorted keys
so identical inputs give identical bytes.
"""

import json
import os
from dataclasses import asdict
from typing import Any, Iterable, Optional

import numpy as np

from countcluster.services.attention_core import AttentionMap
from countcluster.services.blobsim import RunResult, TrajectoryRecord
from countcluster.services.clustering import ClusterSet
from countcluster.services.errors import InvalidAttentionMapError
from countcluster.services.objective import LossReport

PGM_MAXVAL = 255


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# =============================================================================
# ATTENTION MAPS
# =============================================================================

def map_to_pgm_values(scores: np.ndarray) -> np.ndarray:
    """Scores in [0, 1] to integer grey levels round(255 * score)."""
    return np.clip(np.rint(PGM_MAXVAL * np.asarray(scores)), 0, PGM_MAXVAL).astype(int)


def write_pgm(path: str, scores: np.ndarray) -> None:
    """Write a plain (P2) PGM; accepts an AttentionMap or any 2D grid in [0, 1]."""
    if isinstance(scores, AttentionMap):
        scores = scores.scores
    values = map_to_pgm_values(scores)
    height, width = values.shape
    lines = ["P2", f"{width} {height}", str(PGM_MAXVAL)]
    lines.extend(" ".join(str(v) for v in row) for row in values)
    _ensure_parent(path)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path: str) -> np.ndarray:
    """Read a P2 PGM written by write_pgm; returns the integer grey levels."""
    with open(path, encoding="ascii") as fh:
        tokens = [tok for line in fh if not line.startswith("#") for tok in line.split()]
    if not tokens or tokens[0] != "P2":
        raise InvalidAttentionMapError(f"invalid attention map: {path} is not a P2 PGM")
    width, height = int(tokens[1]), int(tokens[2])
    values = np.array([int(tok) for tok in tokens[4:]], dtype=int)
    if values.size != width * height:
        raise InvalidAttentionMapError(f"invalid attention map: {path} has {values.size} values, expected {width * height}")
    return values.reshape(height, width)


def write_map_csv(path: str, attention: AttentionMap) -> None:
    """H rows of W comma-separated values at full precision."""
    _ensure_parent(path)
    np.savetxt(path, attention.scores, fmt="%.17g", delimiter=",")


def read_map_csv(path: str) -> AttentionMap:
    """Load a map written by write_map_csv (or any square numeric CSV)."""
    try:
        scores = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise InvalidAttentionMapError(f"invalid attention map: cannot read {path}: {exc}") from exc
    return AttentionMap(scores)


def write_labels_csv(path: str, labels: np.ndarray) -> None:
    """Cluster label grid as integer CSV."""
    _ensure_parent(path)
    np.savetxt(path, labels, fmt="%d", delimiter=",")


# =============================================================================
# JSON PAYLOADS
# =============================================================================

def cluster_set_to_dict(clusters: ClusterSet) -> dict:
    """Debug dump of a ClusterSet (labels go to their own CSV)."""
    return {
        "centers": [[c.row, c.col] for c in clusters.centers],
        "radii": [float(r) for r in clusters.radii],
        "d": float(clusters.min_distance),
        "relaxation_events": clusters.relaxation_events,
        "tau": clusters.tau,
        "activated_only": clusters.activated_only,
        "radius_mode": clusters.radius_mode,
    }


def loss_report_to_dict(report: LossReport) -> dict:
    return {
        "per_cluster_kl": [float(v) for v in report.per_cluster_kl],
        "total": float(report.total),
        "k": report.k,
        "epsilon": report.epsilon,
        "scaling": report.scaling,
        "normalization": report.normalization,
    }


def trajectory_record_to_dict(record: TrajectoryRecord) -> dict:
    return {
        "t": record.t,
        "loss": None if record.loss is None else float(record.loss),
        "relaxations": record.relaxations,
        "latent_hash": record.latent_hash,
    }


def run_result_to_dict(result: RunResult, settings: Optional[dict] = None) -> dict:
    """
    Summary of a run. ``settings`` (the resolved configuration) is embedded
    so the run can be replayed later.
    """
    payload = {
        "seed": result.seed,
        "variant": result.variant,
        "guided": result.guided,
        "target_count": result.target_count,
        "counted": result.counted,
        "loss_final": None if result.loss_final is None else float(result.loss_final),
        "relaxations_total": result.relaxations_total,
        "refinement_iterations": {str(t): n for t, n in sorted(result.refinement_iterations.items(), reverse=True)},
        "trajectory_length": len(result.trajectory),
        "final_latent_hash": result.trajectory[-1].latent_hash if result.trajectory else None,
    }
    if settings is not None:
        payload["settings"] = settings
    return payload


def to_jsonable(value: Any) -> Any:
    """Convert dataclasses, tuples and numpy scalars into plain JSON values."""
    if hasattr(value, "__dataclass_fields__"):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_json(path: str, payload: Any) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# =============================================================================
# TRAJECTORIES
# =============================================================================

def write_trajectory_jsonl(path: str, records: Iterable[TrajectoryRecord]) -> None:
    """One JSON object per timestep, t descending."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(trajectory_record_to_dict(record), sort_keys=True) + "\n")


def read_trajectory_jsonl(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
