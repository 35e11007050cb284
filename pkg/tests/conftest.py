import numpy as np
import pytest

from countcluster.services.attention_core import AttentionMap
from countcluster.services.blobsim import SimParams
from countcluster.services.guidance import GuidanceConfig


def gaussian_blob(shape, center, height=1.0, width=1.5):
    rows, cols = np.indices(shape, dtype=np.float64)
    sq = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return height * np.exp(-sq / (2.0 * width ** 2))


@pytest.fixture
def two_blob_scores():
    """16x16 map, taller blob at (4, 4), shorter one at (11, 11)."""
    shape = (16, 16)
    return gaussian_blob(shape, (4, 4), 1.0) + gaussian_blob(shape, (11, 11), 0.8)


@pytest.fixture
def two_blob_map(two_blob_scores):
    return AttentionMap(two_blob_scores)


@pytest.fixture
def four_corner_map():
    shape = (64, 64)
    scores = sum(
        gaussian_blob(shape, center, height, width=3.0)
        for center, height in (((10, 10), 1.0), ((10, 53), 0.9), ((53, 10), 0.85), ((53, 53), 0.95))
    )
    return AttentionMap(scores)


@pytest.fixture
def small_sim():
    return SimParams(size=16, blob_slots=6, noise0=0.05)


@pytest.fixture
def short_cfg():
    """Three guided steps, one short refinement, k = 2."""
    return GuidanceConfig(
        k=2,
        guided_timesteps=(50, 49, 48),
        refinement=((50, 0.2),),
        max_refinement_iters=3,
    )
