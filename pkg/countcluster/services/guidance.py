"""
CountCluster guidance over a simulated trajectory.

At each guided timestep the attention map is rendered and preprocessed,
clusters and Gaussian targets are rebuilt from it, and the latent takes one
gradient step on the clustering loss. At the refinement timesteps the step
is repeated until the loss falls below that timestep's threshold.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from countcluster.data.defaults import (
    CLUSTER_THRESHOLD,
    GUIDED_TIMESTEPS,
    DEFAULT_KL_NORMALIZATION,
    DEFAULT_RADIUS_MODE,
    KL_EPSILON,
    KL_NORMALIZATIONS,
    MAX_REFINEMENT_ITERS,
    RADIUS_MODES,
    REFINEMENT_SCHEDULE,
    TOY_ALPHA,
)
from countcluster.data.object_profiles import profile_for_seed
from countcluster.services.attention_core import AttentionMap, SmoothingConfig
from countcluster.services.blobsim import (
    ClusterRecord,
    Latent,
    RunResult,
    SimParams,
    TrajectoryRecord,
    initial_state,
    latent_hash,
    render_preprocessed,
    render_pullback,
    simulate_step,
    with_latent,
)
from countcluster.services.clustering import ClusterSet, build_cluster_set
from countcluster.services.errors import (
    CountClusterError,
    DegenerateMapError,
    DivergedError,
    InvalidObjectCountError,
    InvalidThresholdError,
    RunFailedError,
)
from countcluster.services.evaluation import count_components
from countcluster.services.objective import (
    LossReport,
    TargetDistribution,
    build_targets,
    loss_and_gradient,
)

logger = logging.getLogger(__name__)

Observer = Callable[[int, Latent], None]


@dataclass(frozen=True)
class GuidanceConfig:
    """Everything that controls guidance for one target count."""
    k: int
    tau: float = CLUSTER_THRESHOLD
    # One step size per guided timestep (descending t), or a single constant
    alpha: tuple[float, ...] = (TOY_ALPHA,)
    guided_timesteps: tuple[int, ...] = GUIDED_TIMESTEPS
    refinement: tuple[tuple[int, float], ...] = REFINEMENT_SCHEDULE
    max_refinement_iters: int = MAX_REFINEMENT_ITERS
    epsilon: float = KL_EPSILON
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    # Ablations and open-question switches
    disable_min_distance: bool = False
    use_k_scaling: bool = False
    activated_only: bool = False
    kl_normalization: str = DEFAULT_KL_NORMALIZATION
    radius_mode: str = DEFAULT_RADIUS_MODE
    rebuild_clusters: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise InvalidObjectCountError(f"invalid object count: k={self.k}")
        if not 0.0 < self.tau < 1.0:
            raise InvalidThresholdError(f"invalid threshold: tau={self.tau}")
        if not self.alpha or any(a < 0 for a in self.alpha):
            raise ValueError("alpha must be a non-empty list of non-negative step sizes")
        if len(self.alpha) not in (1, len(self.guided_timesteps)):
            raise ValueError(f"alpha needs 1 or {len(self.guided_timesteps)} entries, got {len(self.alpha)}")
        if any(threshold <= 0 for _, threshold in self.refinement):
            raise ValueError("refinement thresholds must be positive")
        if self.max_refinement_iters < 0:
            raise ValueError("max_refinement_iters must be >= 0")
        if self.kl_normalization not in KL_NORMALIZATIONS:
            raise ValueError(f"unknown KL normalization: {self.kl_normalization}")
        if self.radius_mode not in RADIUS_MODES:
            raise ValueError(f"unknown radius mode: {self.radius_mode}")

    @property
    def loss_scaling(self) -> str:
        return "linear" if self.use_k_scaling else "sqrt"

    def alpha_at(self, timestep: int) -> float:
        """Step size for a timestep; refinement-only timesteps reuse the last entry."""
        if len(self.alpha) == 1:
            return self.alpha[0]
        ordered = sorted(self.guided_timesteps, reverse=True)
        if timestep in ordered:
            return self.alpha[ordered.index(timestep)]
        return self.alpha[-1]


@dataclass(frozen=True)
class GuidanceStep:
    """Outcome of one latent update."""
    latent: Latent
    loss: LossReport
    clusters: ClusterSet
    gradient: np.ndarray
    alpha: float


@dataclass(frozen=True)
class RefinementResult:
    """Outcome of a refinement pass."""
    latent: Latent
    iterations: int
    initial_loss: LossReport
    final_loss: LossReport
    clusters: list[ClusterSet]


def build_structure(attention: AttentionMap, cfg: GuidanceConfig) -> tuple[ClusterSet, list[TargetDistribution]]:
    """Clusters and targets for the current normalized map."""
    clusters = build_cluster_set(
        attention,
        cfg.k,
        cfg.tau,
        disable_min_distance=cfg.disable_min_distance,
        activated_only=cfg.activated_only,
        radius_mode=cfg.radius_mode,
    )
    return clusters, build_targets(clusters, attention.shape)


def _check_finite_loss(report: LossReport) -> None:
    if not math.isfinite(report.total):
        raise DivergedError(f"diverged: non-finite loss, per-cluster {report.per_cluster_kl}")


def _loss_and_latent_gradient(latent: Latent, cfg: GuidanceConfig, shape: tuple[int, int],
                              structure: Optional[tuple[ClusterSet, list[TargetDistribution]]] = None):
    attention, _ = render_preprocessed(latent, shape, cfg.smoothing)
    clusters, targets = structure if structure is not None else build_structure(attention, cfg)
    report, map_grad = loss_and_gradient(
        attention, clusters, targets, cfg.epsilon, cfg.loss_scaling, cfg.kl_normalization
    )
    _check_finite_loss(report)
    gradient = render_pullback(latent, shape, map_grad, cfg.smoothing)
    if not np.all(np.isfinite(gradient)):
        raise DivergedError("diverged: non-finite latent gradient")
    return report, clusters, targets, gradient


def evaluate_latent(latent: Latent, cfg: GuidanceConfig, shape: tuple[int, int]) -> tuple[LossReport, ClusterSet]:
    """Loss of the latent's current map, without updating anything."""
    attention, _ = render_preprocessed(latent, shape, cfg.smoothing)
    clusters, targets = build_structure(attention, cfg)
    report, _ = loss_and_gradient(attention, clusters, targets, cfg.epsilon, cfg.loss_scaling, cfg.kl_normalization)
    _check_finite_loss(report)
    return report, clusters


def _apply_step(latent: Latent, gradient: np.ndarray, alpha: float) -> Latent:
    updated = latent.params - alpha * gradient
    if not np.all(np.isfinite(updated)):
        raise DivergedError("diverged: non-finite latent after update")
    return Latent(updated)


def guidance_update(latent: Latent, cfg: GuidanceConfig, shape: tuple[int, int], timestep: int,
                    structure: Optional[tuple[ClusterSet, list[TargetDistribution]]] = None) -> GuidanceStep:
    """
    One latent update: z' = z - alpha_t * grad L(z).

    Args:
        latent: Current latent
        cfg: Guidance configuration
        shape: Map shape (H, W)
        timestep: Trajectory timestep, selects alpha_t
        structure: Clusters and targets to reuse instead of rebuilding

    Returns:
        GuidanceStep with the updated latent and the loss at the input latent
    """
    report, clusters, _, gradient = _loss_and_latent_gradient(latent, cfg, shape, structure)
    alpha = cfg.alpha_at(timestep)
    logger.debug("t=%d loss=%.6f relaxations=%d", timestep, report.total, clusters.relaxation_events)
    return GuidanceStep(
        latent=_apply_step(latent, gradient, alpha),
        loss=report,
        clusters=clusters,
        gradient=gradient,
        alpha=alpha,
    )


def iterative_refinement(latent: Latent, cfg: GuidanceConfig, shape: tuple[int, int], timestep: int,
                         threshold: float) -> RefinementResult:
    """
    Repeat guidance updates until the loss drops below ``threshold``.

    Stops at the first latent whose loss is below the threshold, or after
    ``cfg.max_refinement_iters`` updates. Hitting the cap is not an error.
    """
    structure = None
    clusters_built: list[ClusterSet] = []
    iterations = 0
    initial_loss = None

    while True:
        report, clusters, targets, gradient = _loss_and_latent_gradient(latent, cfg, shape, structure)
        if structure is None or cfg.rebuild_clusters:
            clusters_built.append(clusters)
        if not cfg.rebuild_clusters:
            structure = (clusters, targets)
        if initial_loss is None:
            initial_loss = report

        if report.total < threshold:
            logger.info("t=%d refinement reached %.4f < %.4f after %d iteration(s)",
                        timestep, report.total, threshold, iterations)
            break
        if iterations >= cfg.max_refinement_iters:
            logger.info("t=%d refinement stopped at the cap (%d) with loss %.4f",
                        timestep, cfg.max_refinement_iters, report.total)
            break

        latent = _apply_step(latent, gradient, cfg.alpha_at(timestep))
        iterations += 1

    return RefinementResult(
        latent=latent,
        iterations=iterations,
        initial_loss=initial_loss,
        final_loss=report,
        clusters=clusters_built,
    )


def _record_clusters(timestep: int, clusters: ClusterSet) -> ClusterRecord:
    return ClusterRecord(
        t=timestep,
        centers=tuple((c.row, c.col) for c in clusters.centers),
        min_distance=clusters.min_distance,
        relaxation_events=clusters.relaxation_events,
    )


def render_normalized(latent: Latent, shape: tuple[int, int], smoothing: SmoothingConfig = SmoothingConfig()) -> AttentionMap:
    """Preprocessed map of a latent; a constant map renders as all zeros."""
    try:
        attention, _ = render_preprocessed(latent, shape, smoothing)
    except DegenerateMapError:
        logger.warning("Map is constant; rendering zeros")
        return AttentionMap(np.zeros(shape))
    return attention


def _final_map(latent: Latent, cfg: GuidanceConfig, sim: SimParams) -> tuple[AttentionMap, int]:
    attention = render_normalized(latent, sim.shape, cfg.smoothing)
    return attention, count_components(attention, cfg.tau, sim.min_area)


def _run(seed: int, cfg: GuidanceConfig, sim: SimParams, guided: bool, variant: str,
         observer: Optional[Observer]) -> RunResult:
    shape = sim.shape
    profile = profile_for_seed(list(sim.objects), seed)
    state = initial_state(seed, shape, sim.blob_slots, sim.noise0 * profile["noise_factor"], profile)

    refinement = dict(cfg.refinement)
    guided_steps = set(cfg.guided_timesteps)
    trajectory: list[TrajectoryRecord] = []
    cluster_records: list[ClusterRecord] = []
    refinement_iterations: dict[int, int] = {}

    while state.timestep > 0:
        t = state.timestep
        latent = state.latent
        snapshot = latent_hash(latent)
        if observer is not None:
            observer(t, latent)

        loss = None
        relaxations = 0
        try:
            if guided and t in refinement:
                result = iterative_refinement(latent, cfg, shape, t, refinement[t])
                latent = result.latent
                loss = result.initial_loss.total
                refinement_iterations[t] = result.iterations
                for clusters in result.clusters:
                    relaxations += clusters.relaxation_events
                    cluster_records.append(_record_clusters(t, clusters))
            elif guided and t in guided_steps:
                step = guidance_update(latent, cfg, shape, t)
                latent = step.latent
                loss = step.loss.total
                relaxations = step.clusters.relaxation_events
                cluster_records.append(_record_clusters(t, step.clusters))
        except CountClusterError as exc:
            raise RunFailedError(str(exc), seed=seed, timestep=t) from exc

        trajectory.append(TrajectoryRecord(t=t, loss=loss, relaxations=relaxations, latent_hash=snapshot))
        state = simulate_step(with_latent(state, latent))

    if observer is not None:
        observer(0, state.latent)
    trajectory.append(TrajectoryRecord(t=0, loss=None, relaxations=0, latent_hash=latent_hash(state.latent)))

    final_map, counted = _final_map(state.latent, cfg, sim)
    try:
        loss_final = evaluate_latent(state.latent, cfg, shape)[0].total
    except CountClusterError:
        loss_final = None

    return RunResult(
        final_map=final_map,
        trajectory=trajectory,
        counted=counted,
        target_count=cfg.k,
        guided=guided,
        seed=seed,
        variant=variant,
        loss_final=loss_final,
        refinement_iterations=refinement_iterations,
        cluster_records=cluster_records,
    )


def run_guided(seed: int, cfg: GuidanceConfig, sim: SimParams = SimParams(), observer: Optional[Observer] = None,
               variant: str = "guided") -> RunResult:
    """Simulate t = 50..0 with guidance at the configured timesteps."""
    return _run(seed, cfg, sim, guided=True, variant=variant, observer=observer)


def run_baseline(seed: int, cfg: GuidanceConfig, sim: SimParams = SimParams(), observer: Optional[Observer] = None,
                 variant: str = "baseline") -> RunResult:
    """Same trajectory machinery with no guidance updates."""
    return _run(seed, cfg, sim, guided=False, variant=variant, observer=observer)
