"""
Gaussian cluster targets and the clustering loss.

Each cluster gets a target P that is 1 at its center and decays to tau at
its radius. The loss sums P log(P / Q) - P + Q over each cluster's member
patches and divides by sqrt(k). Cluster structure and targets are constants when
differentiating.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kl_div, rel_entr

from countcluster.data.defaults import DEFAULT_KL_NORMALIZATION, KL_EPSILON, KL_EPSILON_MAX, LOSS_SCALINGS
from countcluster.services.attention_core import AttentionMap
from countcluster.services.clustering import ClusterSet, PatchCoord
from countcluster.services.errors import EmptyClusterError, InvalidThresholdError

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class TargetDistribution:
    """Dense Gaussian target for one cluster."""
    center: PatchCoord
    sigma: float
    values: np.ndarray


@dataclass(frozen=True)
class LossReport:
    """Per-cluster KL terms and the scaled total."""
    per_cluster_kl: tuple[float, ...]
    total: float
    k: int
    epsilon: float
    scaling: str = "sqrt"
    normalization: str = DEFAULT_KL_NORMALIZATION


def _check_threshold(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise InvalidThresholdError(f"invalid threshold: tau={tau}")


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon <= KL_EPSILON_MAX:
        raise ValueError(f"epsilon must be in (0, {KL_EPSILON_MAX}], got {epsilon}")


def sigma_from_radius(radius: float, tau: float) -> float:
    """Width that makes the Gaussian equal tau at distance ``radius``."""
    _check_threshold(tau)
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return math.sqrt(radius ** 2 / (-2.0 * math.log(tau)))


def target_value(distance, sigma: float):
    """Gaussian profile exp(-distance^2 / (2 sigma^2)); works on scalars and arrays."""
    return np.exp(-np.square(distance) / (2.0 * sigma ** 2))


def build_target(center: PatchCoord, sigma: float, shape: tuple[int, int]) -> TargetDistribution:
    """Evaluate the target over every patch of the map."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    height, width = shape
    if not (0 <= center.row < height and 0 <= center.col < width):
        raise ValueError(f"center {tuple(center)} outside a {height}x{width} map")

    rows, cols = np.indices(shape)
    sq = (rows - center.row) ** 2 + (cols - center.col) ** 2
    values = np.exp(-sq / (2.0 * sigma ** 2))
    # Far patches underflow to 0 on large maps with narrow targets
    values = np.maximum(values, _TINY)
    values.setflags(write=False)
    return TargetDistribution(center=center, sigma=sigma, values=values)


def build_targets(clusters: ClusterSet, shape: tuple[int, int]) -> list[TargetDistribution]:
    """One target per cluster, sized from the cluster radius."""
    return [
        build_target(center, sigma_from_radius(radius, clusters.tau), shape)
        for center, radius in zip(clusters.centers, clusters.radii)
    ]


def kl_divergence_cluster(target: np.ndarray, attention: np.ndarray, members: np.ndarray,
                          epsilon: float = KL_EPSILON) -> float:
    """
    Sum of P log(P / max(Q, epsilon)) over member patches.

    Args:
        target: P values, map-shaped
        attention: Q values, map-shaped, in [0, 1]
        members: Boolean mask of the cluster's patches
        epsilon: Lower clamp on Q
    """
    _check_epsilon(epsilon)
    if not np.any(members):
        raise EmptyClusterError("empty cluster")
    p = target[members]
    q = np.maximum(attention[members], epsilon)
    return float(np.sum(rel_entr(p, q)))


def _loss_normalizer(k: int, scaling: str) -> float:
    if scaling not in LOSS_SCALINGS:
        raise ValueError(f"unknown loss scaling: {scaling}")
    return math.sqrt(k) if scaling == "sqrt" else float(k)


def _cluster_term(p: np.ndarray, q_raw: np.ndarray, epsilon: float, normalization: str) -> tuple[float, np.ndarray]:
    """KL value and d(KL)/dQ over one cluster's member patches."""
    active = q_raw > epsilon
    q = np.maximum(q_raw, epsilon)

    if normalization == "generalized":
        value = float(np.sum(kl_div(p, q)))
        grad = np.where(active, 1.0 - p / q, 0.0)
    elif normalization == "literal":
        value = float(np.sum(rel_entr(p, q)))
        grad = np.where(active, -p / q, 0.0)
    elif normalization == "simplex":
        p_mass = p.sum()
        q_mass = q.sum()
        p_hat = p / p_mass
        value = float(np.sum(rel_entr(p_hat, q / q_mass)))
        grad = np.where(active, -p_hat / q + 1.0 / q_mass, 0.0)
    else:
        raise ValueError(f"unknown KL normalization: {normalization}")
    return value, grad


def loss_and_gradient(attention: AttentionMap, clusters: ClusterSet, targets: list[TargetDistribution],
                      epsilon: float = KL_EPSILON, scaling: str = "sqrt",
                      normalization: str = DEFAULT_KL_NORMALIZATION) -> tuple[LossReport, np.ndarray]:
    """
    Clustering loss and its gradient with respect to the normalized map.

    Patches outside every cluster's member set, and patches where Q sits at
    or below the clamp, get zero gradient.
    """
    _check_epsilon(epsilon)
    if len(targets) != clusters.k:
        raise ValueError(f"expected {clusters.k} targets, got {len(targets)}")

    scores = attention.scores
    normalizer = _loss_normalizer(clusters.k, scaling)
    grad = np.zeros_like(scores)
    per_cluster = []

    # Fixed index order keeps the total bit-reproducible
    for index, target in enumerate(targets):
        members = clusters.member_mask(index, scores)
        if not np.any(members):
            raise EmptyClusterError(f"empty cluster: index {index}")
        value, cluster_grad = _cluster_term(target.values[members], scores[members], epsilon, normalization)
        per_cluster.append(value)
        grad[members] = cluster_grad / normalizer

    report = LossReport(
        per_cluster_kl=tuple(per_cluster),
        total=sum(per_cluster) / normalizer,
        k=clusters.k,
        epsilon=epsilon,
        scaling=scaling,
        normalization=normalization,
    )
    return report, grad


def clustering_loss(attention: AttentionMap, clusters: ClusterSet, targets: list[TargetDistribution],
                    epsilon: float = KL_EPSILON, scaling: str = "sqrt",
                    normalization: str = DEFAULT_KL_NORMALIZATION) -> LossReport:
    """Scaled sum of per-cluster KL terms."""
    report, _ = loss_and_gradient(attention, clusters, targets, epsilon, scaling, normalization)
    return report


def loss_gradient_wrt_map(attention: AttentionMap, clusters: ClusterSet, targets: list[TargetDistribution],
                          epsilon: float = KL_EPSILON, scaling: str = "sqrt",
                          normalization: str = DEFAULT_KL_NORMALIZATION) -> np.ndarray:
    """Gradient of the clustering loss with respect to the normalized map."""
    _, grad = loss_and_gradient(attention, clusters, targets, epsilon, scaling, normalization)
    return grad
