"""
Counting oracle and count metrics.

The oracle counts 8-connected regions of the thresholded map; it stands in
for a learned object counter. Accuracy, MAE and RMSE compare counted
objects against the requested count.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from countcluster.data.defaults import DEFAULT_MIN_AREA
from countcluster.services.attention_core import AttentionMap
from countcluster.services.errors import MetricsError

# 3x3 structuring element: diagonal neighbours are connected
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class MetricsRow:
    """Metrics for one (variant, k) group, or a variant's "ALL" row."""
    variant: str
    k: Union[int, str]
    n: int
    accuracy: Optional[float]
    mae: Optional[float]
    rmse: Optional[float]
    mean_relaxations: Optional[float]
    failure_rate: float


def count_components(attention: AttentionMap, tau: float, min_area: int = DEFAULT_MIN_AREA) -> int:
    """Number of 8-connected regions scoring >= tau with at least ``min_area`` patches."""
    mask = attention.scores >= tau
    labels, num = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if num == 0:
        return 0
    areas = np.bincount(labels.ravel())[1:]
    return int(np.count_nonzero(areas >= min_area))


def _paired(targets: Sequence[int], predictions: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(targets, dtype=np.float64)
    y_hat = np.asarray(predictions, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise MetricsError(f"length mismatch: {y.size} targets vs {y_hat.size} predictions")
    if y.size == 0:
        raise MetricsError("at least one target/prediction pair is required")
    return y, y_hat


def accuracy(targets: Sequence[int], predictions: Sequence[int]) -> float:
    """Fraction of exact count matches."""
    y, y_hat = _paired(targets, predictions)
    return float(np.mean(y == y_hat))


def mae(targets: Sequence[int], predictions: Sequence[int]) -> float:
    """Mean absolute count error."""
    y, y_hat = _paired(targets, predictions)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(targets: Sequence[int], predictions: Sequence[int]) -> float:
    """Root mean squared count error."""
    y, y_hat = _paired(targets, predictions)
    return math.sqrt(float(np.mean((y - y_hat) ** 2)))


def _group_row(variant: str, k: Union[int, str], group: pd.DataFrame) -> MetricsRow:
    total = len(group)
    ok = group[~group["failed"]]
    failure_rate = float((total - len(ok)) / total) if total else 0.0
    if ok.empty:
        return MetricsRow(variant, k, 0, None, None, None, None, failure_rate)

    targets = ok["k"].tolist()
    predictions = ok["counted"].astype(int).tolist()
    return MetricsRow(
        variant=variant,
        k=k,
        n=len(ok),
        accuracy=accuracy(targets, predictions),
        mae=mae(targets, predictions),
        rmse=rmse(targets, predictions),
        mean_relaxations=float(ok["relaxations_total"].mean()),
        failure_rate=failure_rate,
    )


def summarize(runs: pd.DataFrame, variants: Optional[Sequence[str]] = None) -> list[MetricsRow]:
    """
    Aggregate per-run rows into per-(variant, k) metrics plus an "ALL" row
    per variant. Failed runs are left out of the metrics and reported as
    the failure rate.

    Args:
        runs: One row per run with at least variant, k, counted,
            relaxations_total and failed columns
        variants: Output order of variants (defaults to first appearance)
    """
    if variants is None:
        variants = list(dict.fromkeys(runs["variant"]))

    rows = []
    for variant in variants:
        subset = runs[runs["variant"] == variant]
        if subset.empty:
            continue
        for k in sorted(subset["k"].unique()):
            rows.append(_group_row(variant, int(k), subset[subset["k"] == k]))
        rows.append(_group_row(variant, "ALL", subset))
    return rows
