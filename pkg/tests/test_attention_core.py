import math

import numpy as np
import pytest

from countcluster.services.attention_core import (
    AttentionMap,
    SmoothingConfig,
    gaussian_kernel,
    gaussian_smooth,
    min_max_normalize,
    normalize_pullback,
    preprocess,
    smooth_pullback,
)
from countcluster.services.errors import DegenerateMapError, InvalidAttentionMapError


def test_attention_map_rejects_bad_shapes():
    with pytest.raises(InvalidAttentionMapError, match="invalid attention map"):
        AttentionMap(np.zeros((4, 5)))
    with pytest.raises(InvalidAttentionMapError):
        AttentionMap(np.zeros((3, 3)))
    with pytest.raises(InvalidAttentionMapError):
        AttentionMap(np.zeros(16))


def test_attention_map_rejects_non_finite():
    scores = np.zeros((4, 4))
    scores[1, 2] = np.nan
    with pytest.raises(InvalidAttentionMapError, match="non-finite"):
        AttentionMap(scores)


def test_attention_map_is_read_only():
    attention = AttentionMap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        attention.scores[0, 0] = 2.0


def test_kernel_sums_to_one():
    for size, sigma in ((1, 0.5), (3, 0.5), (5, 1.2), (7, 2.0)):
        kernel = gaussian_kernel(size, sigma)
        assert kernel.shape == (size, size)
        assert kernel.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(kernel, kernel.T)


@pytest.mark.parametrize("size", [0, 2, 4])
def test_kernel_size_must_be_odd(size):
    with pytest.raises(ValueError):
        gaussian_kernel(size, 0.5)


def test_smoothing_preserves_constants():
    attention = AttentionMap(np.full((6, 6), 0.37))
    for size, sigma in ((3, 0.5), (5, 1.0)):
        np.testing.assert_allclose(gaussian_smooth(attention, size, sigma).scores, 0.37, rtol=0, atol=1e-14)


def test_kernel_size_one_is_identity():
    scores = np.random.default_rng(3).random((8, 8))
    smoothed = gaussian_smooth(AttentionMap(scores), 1, 0.5)
    assert np.array_equal(smoothed.scores, scores)


def test_delta_center_gets_central_coefficient():
    scores = np.zeros((5, 5))
    scores[2, 2] = 1.0
    smoothed = gaussian_smooth(AttentionMap(scores), 3, 0.5)
    z = 1 + 4 * math.exp(-1 / (2 * 0.25)) + 4 * math.exp(-2 / (2 * 0.25))
    assert smoothed.scores[2, 2] == pytest.approx(1 / z, abs=1e-15)


def test_normalize_worked_example():
    attention = AttentionMap(np.array([
        [0.2, 0.7, 1.2, 0.2],
        [0.2, 0.2, 0.2, 0.2],
        [0.2, 0.2, 0.2, 0.2],
        [0.2, 0.2, 0.2, 0.2],
    ]))
    normalized, record = min_max_normalize(attention)
    np.testing.assert_allclose(normalized.scores[0], [0.0, 0.5, 1.0, 0.0], atol=1e-15)
    assert record.argmax_index == 2
    # Ties resolve to the first row-major index
    assert record.argmin_index == 0


def test_normalize_fixed_point():
    scores = np.random.default_rng(0).random((6, 6))
    scores[0, 0], scores[5, 5] = 0.0, 1.0
    normalized, _ = min_max_normalize(AttentionMap(scores))
    np.testing.assert_allclose(normalized.scores, scores, atol=1e-15)


def test_normalize_constant_map():
    with pytest.raises(DegenerateMapError, match="degenerate map: constant scores"):
        min_max_normalize(AttentionMap(np.full((4, 4), 0.5)))


def test_preprocess_constant_raw_map():
    with pytest.raises(DegenerateMapError):
        preprocess(AttentionMap(np.full((8, 8), 2.0)))


def test_preprocess_keeps_taller_peak(two_blob_map):
    normalized, _ = preprocess(two_blob_map)
    assert normalized.scores.max() == 1.0
    assert np.unravel_index(np.argmax(normalized.scores), normalized.shape) == (4, 4)
    assert normalized.scores.min() == 0.0


def _adjoint_gap(forward, pullback, shape, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    u = rng.standard_normal(shape)
    lhs = float(np.sum(forward(x) * u))
    rhs = float(np.sum(x * pullback(u)))
    return abs(lhs - rhs) / max(abs(lhs), 1.0)


@pytest.mark.parametrize("size,sigma", [(3, 0.5), (5, 1.0), (7, 1.5)])
def test_smooth_pullback_is_adjoint(size, sigma):
    def forward(x):
        return gaussian_smooth(AttentionMap(x), size, sigma).scores

    def pullback(u):
        return smooth_pullback(u, size, sigma)

    for seed in range(5):
        assert _adjoint_gap(forward, pullback, (9, 9), seed) < 1e-12


def test_normalize_pullback_matches_finite_differences():
    rng = np.random.default_rng(11)
    scores = rng.random((6, 6))
    upstream = rng.standard_normal((6, 6))
    normalized, record = min_max_normalize(AttentionMap(scores))
    analytic = normalize_pullback(upstream, normalized, record)

    h = 1e-6
    numeric = np.zeros_like(scores)
    for index in np.ndindex(scores.shape):
        plus, minus = scores.copy(), scores.copy()
        plus[index] += h
        minus[index] -= h
        f_plus = np.sum(min_max_normalize(AttentionMap(plus))[0].scores * upstream)
        f_minus = np.sum(min_max_normalize(AttentionMap(minus))[0].scores * upstream)
        numeric[index] = (f_plus - f_minus) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-7)


def test_smoothing_config_defaults():
    cfg = SmoothingConfig()
    assert (cfg.kernel_size, cfg.kernel_sigma) == (3, 0.5)
