"""
Toy differentiable generator standing in for the UNet's latent-to-attention
mapping, plus a seeded denoising trajectory.

The latent is a set of Gaussian blobs. Rendering sums them into a raw
attention map; the map then goes through the same smoothing and
normalization as a real attention map, and gradients flow back through
all three steps exactly.

Randomness comes from Philox, keyed by (seed, stream) with the timestep in
the counter, so every draw is a pure function of its position in the run.
"""

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from countcluster.data.defaults import (
    BLOB_SLOTS,
    DEFAULT_MAP_SIZE,
    DEFAULT_MIN_AREA,
    LOG_AMPLITUDE_BOUNDS,
    LOG_AMPLITUDE_STD,
    LOG_WIDTH_MEAN,
    LOG_WIDTH_STD,
    MAX_BLOB_WIDTH,
    MIN_BLOB_WIDTH,
    NOISE0,
    NUM_TIMESTEPS,
)
from countcluster.services.attention_core import (
    AttentionMap,
    SmoothingConfig,
    preprocess,
    preprocess_pullback,
)
from countcluster.services.errors import InvalidAttentionMapError, TrajectoryFinishedError

# Column layout of Latent.params
ROW, COL, LOG_AMPLITUDE, LOG_WIDTH = range(4)

# Philox streams
STREAM_INIT = 1
STREAM_STEP = 2


@dataclass(frozen=True)
class Latent:
    """Blob slots, one row per blob: (row, col, log-amplitude, log-width)."""
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64)
        if params.ndim != 2 or params.shape[1] != 4:
            raise ValueError(f"latent must have shape (m, 4), got {params.shape}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def blob_slots(self) -> int:
        return self.params.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.params)))


@dataclass(frozen=True)
class SimParams:
    """Simulator and counting setup shared by every run of a benchmark."""
    size: int = DEFAULT_MAP_SIZE
    blob_slots: int = BLOB_SLOTS
    noise0: float = NOISE0
    min_area: int = DEFAULT_MIN_AREA
    # Object categories cycled over seeds; empty means the default profile
    objects: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)


@dataclass(frozen=True)
class SimState:
    """Latent plus the trajectory position it belongs to."""
    latent: Latent
    timestep: int
    seed: int
    noise0: float = NOISE0


@dataclass(frozen=True)
class TrajectoryRecord:
    """One timestep of a run."""
    t: int
    loss: Optional[float]
    relaxations: int
    latent_hash: str


@dataclass(frozen=True)
class ClusterRecord:
    """Compact trace of a ClusterSet built during a run."""
    t: int
    centers: tuple[tuple[int, int], ...]
    min_distance: float
    relaxation_events: int


@dataclass(frozen=True)
class RunResult:
    """One simulated generation."""
    final_map: AttentionMap
    trajectory: list[TrajectoryRecord]
    counted: int
    target_count: int
    guided: bool
    seed: int
    variant: str = "guided"
    loss_final: Optional[float] = None
    refinement_iterations: dict[int, int] = field(default_factory=dict)
    cluster_records: list[ClusterRecord] = field(default_factory=list)

    @property
    def relaxations_total(self) -> int:
        return sum(record.relaxations for record in self.trajectory)


def philox_generator(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Generator for draw ``index`` of ``stream`` in the run keyed by ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = (stream << 64) | (seed & 0xFFFFFFFFFFFFFFFF)
    # Index lives in the top counter word; draws advance the bottom one
    counter = index << 192
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def latent_hash(latent: Latent) -> str:
    """SHA-256 of the latent's float64 bytes."""
    return hashlib.sha256(np.ascontiguousarray(latent.params).tobytes()).hexdigest()


def sample_latent(seed: int, shape: tuple[int, int], blob_slots: int = BLOB_SLOTS,
                  profile: Optional[dict] = None) -> Latent:
    """
    Draw the initial latent for a run.

    Positions are uniform over the map, log-amplitudes Normal(0, 0.5) and
    log-widths Normal(ln 2, 0.3) unless an object profile overrides them.
    """
    height, width = shape
    amplitude_std = LOG_AMPLITUDE_STD
    width_mean = LOG_WIDTH_MEAN
    if profile:
        amplitude_std = profile.get("amplitude_std", amplitude_std)
        if profile.get("width"):
            width_mean = float(np.log(profile["width"]))

    rng = philox_generator(seed, STREAM_INIT)
    params = np.empty((blob_slots, 4))
    params[:, ROW] = rng.uniform(0.0, height - 1, size=blob_slots)
    params[:, COL] = rng.uniform(0.0, width - 1, size=blob_slots)
    params[:, LOG_AMPLITUDE] = rng.normal(0.0, amplitude_std, size=blob_slots)
    params[:, LOG_WIDTH] = rng.normal(width_mean, LOG_WIDTH_STD, size=blob_slots)
    return Latent(params)


def _blob_terms(latent: Latent, shape: tuple[int, int]) -> dict:
    """Per-blob quantities shared by render and pullback."""
    height, width = shape
    params = latent.params
    lo, hi = LOG_AMPLITUDE_BOUNDS

    log_amp = np.clip(params[:, LOG_AMPLITUDE], lo, hi)
    amp = np.exp(log_amp)
    raw_width = np.exp(params[:, LOG_WIDTH])
    max_width = min(MAX_BLOB_WIDTH, float(height))
    blob_width = np.clip(raw_width, MIN_BLOB_WIDTH, max_width)

    rows, cols = np.indices(shape, dtype=np.float64)
    d_row = rows[None] - params[:, ROW][:, None, None]
    d_col = cols[None] - params[:, COL][:, None, None]
    sq = d_row ** 2 + d_col ** 2
    inv_var = 1.0 / blob_width ** 2
    gauss = np.exp(-0.5 * sq * inv_var[:, None, None])
    contrib = amp[:, None, None] * gauss

    return {
        "contrib": contrib,
        "d_row": d_row,
        "d_col": d_col,
        "sq": sq,
        "inv_var": inv_var,
        "amp_active": (params[:, LOG_AMPLITUDE] > lo) & (params[:, LOG_AMPLITUDE] < hi),
        "width_active": (raw_width > MIN_BLOB_WIDTH) & (raw_width < max_width),
    }


def render_attention(latent: Latent, shape: tuple[int, int]) -> AttentionMap:
    """Sum of blobs, before smoothing and normalization."""
    if not latent.is_finite():
        raise InvalidAttentionMapError("invalid attention map: latent is not finite")
    terms = _blob_terms(latent, shape)
    return AttentionMap(terms["contrib"].sum(axis=0))


def render_preprocessed(latent: Latent, shape: tuple[int, int], smoothing: SmoothingConfig = SmoothingConfig()):
    """Render, smooth and normalize; returns (normalized map, record)."""
    return preprocess(render_attention(latent, shape), smoothing)


def render_pullback(latent: Latent, shape: tuple[int, int], upstream: np.ndarray,
                    smoothing: SmoothingConfig = SmoothingConfig()) -> np.ndarray:
    """
    Gradient with respect to the latent of <upstream, preprocess(render(latent))>.

    Argmin/argmax of the normalization are fixed at their forward values.
    Coordinates sitting on a render clamp get zero gradient.

    Returns:
        Array shaped like latent.params
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    grad = np.zeros_like(latent.params)
    if not np.any(upstream):
        return grad

    normalized, record = render_preprocessed(latent, shape, smoothing)
    grad_raw = preprocess_pullback(upstream, normalized, record, smoothing)

    terms = _blob_terms(latent, shape)
    weighted = terms["contrib"] * grad_raw[None]
    inv_var = terms["inv_var"][:, None, None]

    grad[:, ROW] = (weighted * terms["d_row"] * inv_var).sum(axis=(1, 2))
    grad[:, COL] = (weighted * terms["d_col"] * inv_var).sum(axis=(1, 2))
    grad[:, LOG_AMPLITUDE] = np.where(terms["amp_active"], weighted.sum(axis=(1, 2)), 0.0)
    # d/d(log w) of exp(-sq / 2w^2) is sq / w^2 times the blob
    grad[:, LOG_WIDTH] = np.where(
        terms["width_active"],
        (weighted * terms["sq"] * inv_var).sum(axis=(1, 2)),
        0.0,
    )
    return grad


def noise_scale(timestep: int, noise0: float = NOISE0) -> float:
    """Linear schedule: noise0 at t = 50 down to 0 at t = 0."""
    return noise0 * timestep / NUM_TIMESTEPS


def initial_state(seed: int, shape: tuple[int, int], blob_slots: int = BLOB_SLOTS, noise0: float = NOISE0,
                  profile: Optional[dict] = None) -> SimState:
    """State at t = 50 for the given seed."""
    latent = sample_latent(seed, shape, blob_slots, profile)
    return SimState(latent=latent, timestep=NUM_TIMESTEPS, seed=seed, noise0=noise0)


def simulate_step(state: SimState) -> SimState:
    """Perturb every latent coordinate with noise of scale noise_scale(t), then decrement t."""
    if state.timestep <= 0:
        raise TrajectoryFinishedError("trajectory finished")

    scale = noise_scale(state.timestep, state.noise0)
    params = state.latent.params
    if scale != 0.0:
        rng = philox_generator(state.seed, STREAM_STEP, state.timestep)
        params = params + scale * rng.standard_normal(params.shape)
    return replace(state, latent=Latent(params), timestep=state.timestep - 1)


def with_latent(state: SimState, latent: Latent) -> SimState:
    """Same trajectory position, different latent."""
    return replace(state, latent=latent)
