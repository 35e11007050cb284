"""
Cluster construction on a normalized attention map.

Centers are picked greedily in descending score order under a minimum
pairwise distance d = H / k, every patch is assigned to its nearest
center, and each cluster gets a radius used to size its Gaussian target.
The radius follows the connected region around the center by default;
the "cell" mode measures every activated patch in the Voronoi cell.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from countcluster.data.defaults import DEFAULT_RADIUS_MODE, RADIUS_MODES
from countcluster.services.attention_core import AttentionMap
from countcluster.services.errors import InvalidObjectCountError, MapTooSmallError
from countcluster.services.evaluation import EIGHT_CONNECTED

logger = logging.getLogger(__name__)


class PatchCoord(NamedTuple):
    """Integer patch position (row, col)."""
    row: int
    col: int

    def distance_to(self, other: "PatchCoord") -> float:
        return math.hypot(self.row - other.row, self.col - other.col)


@dataclass(frozen=True)
class CenterSelection:
    """Output of center selection, including any relaxation that was needed."""
    centers: list[PatchCoord]
    effective_distance: float
    relaxation_events: int


@dataclass(frozen=True)
class ClusterSet:
    """k clusters over the map: centers, full patch labels, and radii."""
    centers: list[PatchCoord]
    labels: np.ndarray
    radii: list[float]
    min_distance: float
    relaxation_events: int
    tau: float
    activated_only: bool = False
    radius_mode: str = DEFAULT_RADIUS_MODE

    @property
    def k(self) -> int:
        return len(self.centers)

    def member_mask(self, index: int, scores: np.ndarray) -> np.ndarray:
        """
        Patches that contribute to cluster ``index`` in the loss.

        By default every patch labeled ``index``; with ``activated_only``
        only those scoring >= tau, plus the center itself.
        """
        mask = self.labels == index
        if self.activated_only:
            mask = mask & (scores >= self.tau)
            center = self.centers[index]
            mask[center.row, center.col] = True
        return mask


def min_center_distance(size: int, k: int) -> float:
    """Minimum distance between centers, d = H / k."""
    if k < 1 or k > size * size:
        raise InvalidObjectCountError(f"invalid object count: k={k} for a {size}x{size} map")
    return size / k


def _descending_order(scores: np.ndarray) -> np.ndarray:
    # Stable sort on negated scores keeps ascending row-major order among ties
    return np.argsort(-scores.ravel(), kind="stable")


def _greedy_pass(order: np.ndarray, scores: np.ndarray, width: int, k: int,
                 min_distance: float, tau: float, use_threshold: bool) -> list[PatchCoord]:
    flat = scores.ravel()
    centers: list[PatchCoord] = []
    for index in order:
        if use_threshold and flat[index] < tau:
            # Descending order: nothing later can pass the threshold either
            break
        candidate = PatchCoord(int(index // width), int(index % width))
        if all(candidate.distance_to(c) >= min_distance for c in centers):
            centers.append(candidate)
            if len(centers) == k:
                break
    return centers


def select_cluster_centers(attention: AttentionMap, k: int, min_distance: float, tau: float) -> CenterSelection:
    """
    Greedy center selection.

    Patches scoring >= tau are visited in descending score order and kept
    when they are at least ``min_distance`` from every center so far. When
    fewer than k centers come out, the threshold is dropped first, then
    the distance is halved until k centers fit; each relaxation is counted.

    Args:
        attention: Normalized attention map
        k: Number of centers wanted
        min_distance: Required pairwise distance in patches
        tau: Score threshold for center eligibility

    Returns:
        CenterSelection with centers in selection order
    """
    if k < 1 or k > attention.height * attention.width:
        raise InvalidObjectCountError(f"invalid object count: k={k}")

    scores = attention.scores
    order = _descending_order(scores)
    width = attention.width

    centers = _greedy_pass(order, scores, width, k, min_distance, tau, use_threshold=True)
    if len(centers) == k:
        return CenterSelection(centers, min_distance, 0)

    relaxation_events = 1
    distance = min_distance
    centers = _greedy_pass(order, scores, width, k, distance, tau, use_threshold=False)

    while len(centers) < k:
        if distance < 1.0:
            raise MapTooSmallError(f"map too small for k clusters: k={k}, size={attention.height}")
        distance /= 2.0
        relaxation_events += 1
        centers = _greedy_pass(order, scores, width, k, distance, tau, use_threshold=False)

    logger.info("Center selection relaxed %d time(s): k=%d, d=%.3f", relaxation_events, k, distance)
    return CenterSelection(centers, distance, relaxation_events)


def assign_patches(attention: AttentionMap, centers: list[PatchCoord]) -> np.ndarray:
    """
    Label every patch with the index of its nearest center.
    Equidistant patches go to the smaller center index.
    """
    if not centers:
        raise ValueError("at least one center is required")

    rows, cols = np.indices(attention.shape)
    center_rows = np.array([c.row for c in centers])[:, None, None]
    center_cols = np.array([c.col for c in centers])[:, None, None]
    # Squared integer distances compare exactly
    sq = (rows[None] - center_rows) ** 2 + (cols[None] - center_cols) ** 2
    return np.argmin(sq, axis=0)


def cluster_radius(attention: AttentionMap, labels: np.ndarray, center: PatchCoord, cluster_index: int,
                   tau: float, min_distance: float) -> float:
    """
    Distance from the center to the farthest activated patch in its cluster.
    Falls back to d / 2 when the center is the only activated patch.
    """
    mask = (labels == cluster_index) & (attention.scores >= tau)
    mask[center.row, center.col] = False
    if not mask.any():
        return min_distance / 2.0

    rows, cols = np.nonzero(mask)
    distances = np.hypot(rows - center.row, cols - center.col)
    return float(distances.max())


def region_radius(attention: AttentionMap, labels: np.ndarray, center: PatchCoord, cluster_index: int,
                  tau: float, min_distance: float) -> float:
    """
    Reach of the center's own peak.

    The region grows from the center through 8-connected patches of the same
    cluster that score at least tau times the center score (tau itself when
    the center scores below tau). The radius is the distance to its farthest
    patch, or d / 2 when the region is the center alone or empty.
    """
    scores = attention.scores
    center_score = scores[center.row, center.col]
    level = tau * center_score if center_score >= tau else tau
    candidates = (labels == cluster_index) & (scores >= level)
    regions, _ = ndimage.label(candidates, structure=EIGHT_CONNECTED)
    region_id = regions[center.row, center.col]
    if region_id == 0:
        return min_distance / 2.0

    mask = regions == region_id
    mask[center.row, center.col] = False
    if not mask.any():
        return min_distance / 2.0

    rows, cols = np.nonzero(mask)
    distances = np.hypot(rows - center.row, cols - center.col)
    return float(distances.max())


def build_cluster_set(attention: AttentionMap, k: int, tau: float, disable_min_distance: bool = False,
                      activated_only: bool = False, radius_mode: str = DEFAULT_RADIUS_MODE) -> ClusterSet:
    """
    Select centers, assign patches and compute radii.

    With ``disable_min_distance`` centers are picked with d = 0; the radius
    fallback still uses H / k so it stays positive.
    """
    if radius_mode not in RADIUS_MODES:
        raise ValueError(f"unknown radius mode: {radius_mode}")
    radius_fn = region_radius if radius_mode == "region" else cluster_radius
    nominal_distance = min_center_distance(attention.height, k)
    selection_distance = 0.0 if disable_min_distance else nominal_distance

    selection = select_cluster_centers(attention, k, selection_distance, tau)
    labels = assign_patches(attention, selection.centers)
    radii = [
        radius_fn(attention, labels, center, index, tau, nominal_distance)
        for index, center in enumerate(selection.centers)
    ]
    labels.setflags(write=False)

    return ClusterSet(
        centers=selection.centers,
        labels=labels,
        radii=radii,
        min_distance=selection.effective_distance,
        relaxation_events=selection.relaxation_events,
        tau=tau,
        activated_only=activated_only,
        radius_mode=radius_mode,
    )
