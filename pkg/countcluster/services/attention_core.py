"""
Object attention map container and the preprocessing applied before
clustering: Gaussian smoothing followed by min-max normalization.

Both steps have exact adjoints here so gradients can be pulled back from
the normalized map to the raw scores.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from countcluster.data.defaults import (
    MIN_MAP_SIZE,
    SMOOTHING_KERNEL_SIZE,
    SMOOTHING_KERNEL_SIGMA,
)
from countcluster.services.errors import DegenerateMapError, InvalidAttentionMapError


@dataclass(frozen=True)
class AttentionMap:
    """Square H x W grid of attention scores for the object token."""
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
            raise InvalidAttentionMapError(f"invalid attention map: expected a square grid, got shape {scores.shape}")
        if scores.shape[0] < MIN_MAP_SIZE:
            raise InvalidAttentionMapError(f"invalid attention map: size {scores.shape[0]} is below {MIN_MAP_SIZE}")
        if not np.all(np.isfinite(scores)):
            raise InvalidAttentionMapError("invalid attention map: non-finite scores")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


@dataclass(frozen=True)
class NormalizationRecord:
    """Min/max of the map before normalization and where they occurred."""
    min_value: float
    max_value: float
    argmin_index: int
    argmax_index: int


@dataclass(frozen=True)
class SmoothingConfig:
    """Gaussian smoothing parameters."""
    kernel_size: int = SMOOTHING_KERNEL_SIZE
    kernel_sigma: float = SMOOTHING_KERNEL_SIGMA


def gaussian_kernel(kernel_size: int, kernel_sigma: float) -> np.ndarray:
    """
    Build a normalized 2D Gaussian kernel.

    Args:
        kernel_size: Odd kernel width, at least 1
        kernel_sigma: Standard deviation in patches, must be positive

    Returns:
        kernel_size x kernel_size array summing to 1
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if kernel_sigma <= 0:
        raise ValueError(f"kernel_sigma must be positive, got {kernel_sigma}")

    half = kernel_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-sq / (2.0 * kernel_sigma ** 2))
    return kernel / kernel.sum()


def gaussian_smooth(attention: AttentionMap, kernel_size: int = SMOOTHING_KERNEL_SIZE,
                    kernel_sigma: float = SMOOTHING_KERNEL_SIGMA) -> AttentionMap:
    """Smooth the map with replicate-edge padding."""
    if kernel_size == 1:
        return AttentionMap(attention.scores.copy())
    kernel = gaussian_kernel(kernel_size, kernel_sigma)
    smoothed = ndimage.correlate(attention.scores, kernel, mode="nearest")
    return AttentionMap(smoothed)


def smooth_pullback(upstream: np.ndarray, kernel_size: int = SMOOTHING_KERNEL_SIZE,
                    kernel_sigma: float = SMOOTHING_KERNEL_SIGMA) -> np.ndarray:
    """
    Vector-Jacobian product of gaussian_smooth.

    Interior patches see a correlation with the flipped kernel; gradient
    that lands in the replicated border is folded back onto the edge rows
    and columns it was copied from.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if kernel_size == 1:
        return upstream.copy()

    kernel = gaussian_kernel(kernel_size, kernel_sigma)
    pad = kernel_size // 2
    height, width = upstream.shape

    padded = np.zeros((height + 2 * pad, width + 2 * pad))
    for di in range(kernel_size):
        for dj in range(kernel_size):
            padded[di:di + height, dj:dj + width] += kernel[di, dj] * upstream

    # Undo the edge replication: rows first, then columns
    rows = padded[pad:pad + height, :].copy()
    rows[0, :] += padded[:pad, :].sum(axis=0)
    rows[-1, :] += padded[pad + height:, :].sum(axis=0)

    grad = rows[:, pad:pad + width].copy()
    grad[:, 0] += rows[:, :pad].sum(axis=1)
    grad[:, -1] += rows[:, pad + width:].sum(axis=1)
    return grad


def min_max_normalize(attention: AttentionMap) -> tuple[AttentionMap, NormalizationRecord]:
    """
    Rescale scores to [0, 1].

    Returns:
        Normalized map and the record needed to differentiate through it.
        Ties for min/max resolve to the first row-major index.
    """
    flat = attention.scores.ravel()
    argmin_index = int(np.argmin(flat))
    argmax_index = int(np.argmax(flat))
    min_value = float(flat[argmin_index])
    max_value = float(flat[argmax_index])

    if not max_value > min_value:
        raise DegenerateMapError("degenerate map: constant scores")

    normalized = (attention.scores - min_value) / (max_value - min_value)
    record = NormalizationRecord(
        min_value=min_value,
        max_value=max_value,
        argmin_index=argmin_index,
        argmax_index=argmax_index,
    )
    return AttentionMap(normalized), record


def normalize_pullback(upstream: np.ndarray, normalized: AttentionMap,
                       record: NormalizationRecord) -> np.ndarray:
    """
    Vector-Jacobian product of min_max_normalize with argmin/argmax held
    at their forward positions.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    span = record.max_value - record.min_value

    grad = upstream / span
    total = upstream.sum()
    weighted = float((upstream * normalized.scores).sum())

    flat = grad.reshape(-1)
    flat[record.argmin_index] += (weighted - total) / span
    flat[record.argmax_index] -= weighted / span
    return grad


def preprocess(raw: AttentionMap, cfg: SmoothingConfig = SmoothingConfig()) -> tuple[AttentionMap, NormalizationRecord]:
    """Smooth then normalize."""
    smoothed = gaussian_smooth(raw, cfg.kernel_size, cfg.kernel_sigma)
    return min_max_normalize(smoothed)


def preprocess_pullback(upstream: np.ndarray, normalized: AttentionMap, record: NormalizationRecord,
                        cfg: SmoothingConfig = SmoothingConfig()) -> np.ndarray:
    """Pull a gradient on the preprocessed map back to the raw scores."""
    grad_smoothed = normalize_pullback(upstream, normalized, record)
    return smooth_pullback(grad_smoothed, cfg.kernel_size, cfg.kernel_sigma)
