import math

import numpy as np
import pytest

from countcluster.services.attention_core import AttentionMap
from countcluster.services.clustering import ClusterSet, PatchCoord, build_cluster_set
from countcluster.services.errors import EmptyClusterError, InvalidThresholdError
from countcluster.services.objective import (
    build_target,
    build_targets,
    clustering_loss,
    kl_divergence_cluster,
    loss_and_gradient,
    loss_gradient_wrt_map,
    sigma_from_radius,
    target_value,
)

STRIP = 4


def strip_instance(k, q_strip, sigma=1.5):
    """k identical clusters side by side, each a STRIP-wide column band."""
    size = STRIP * k
    shape = (size, size)
    scores = np.tile(q_strip, (1, k))
    labels = np.repeat(np.arange(k), STRIP)[None, :].repeat(size, axis=0)
    centers = [PatchCoord(2, STRIP * i + 1) for i in range(k)]
    clusters = ClusterSet(
        centers=centers,
        labels=labels,
        radii=[2.0] * k,
        min_distance=float(STRIP),
        relaxation_events=0,
        tau=0.3,
    )
    targets = [build_target(center, sigma, shape) for center in centers]
    return AttentionMap(scores), clusters, targets


def test_sigma_worked_example():
    assert sigma_from_radius(16.0, 0.3) == pytest.approx(10.3110, abs=1e-4)


def test_sigma_closed_form():
    assert sigma_from_radius(1.0, math.exp(-0.5)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("tau", [0.0, 1.0, 1.5, -0.2])
def test_sigma_rejects_bad_threshold(tau):
    with pytest.raises(InvalidThresholdError, match="invalid threshold"):
        sigma_from_radius(4.0, tau)


def test_target_equals_tau_at_radius():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        radius = rng.uniform(1.0, 64.0)
        tau = rng.uniform(0.05, 0.95)
        sigma = sigma_from_radius(radius, tau)
        assert abs(target_value(radius, sigma) - tau) <= 1e-12


def test_target_peaks_at_center():
    target = build_target(PatchCoord(3, 5), 2.0, (8, 8))
    assert target.values[3, 5] == 1.0
    assert target.values.max() == 1.0
    assert target.values.flags.writeable is False


def test_build_targets_uses_cluster_radii():
    _, clusters, _ = strip_instance(2, np.full((8, STRIP), 0.5))
    targets = build_targets(clusters, (8, 8))
    assert len(targets) == 2
    for target in targets:
        assert target.sigma == pytest.approx(sigma_from_radius(2.0, 0.3))


def test_kl_perfect_match_is_zero():
    target = build_target(PatchCoord(2, 2), 1.5, (5, 5)).values
    members = np.ones((5, 5), dtype=bool)
    assert kl_divergence_cluster(target, target, members) == 0.0


def test_kl_single_patch():
    members = np.zeros((4, 4), dtype=bool)
    members[1, 1] = True
    target = np.ones((4, 4))
    q = np.full((4, 4), 0.5)
    assert kl_divergence_cluster(target, q, members) == pytest.approx(math.log(2), abs=1e-12)


def test_kl_clamps_zero_attention():
    members = np.zeros((4, 4), dtype=bool)
    members[0, 0] = True
    value = kl_divergence_cluster(np.ones((4, 4)), np.zeros((4, 4)), members, epsilon=1e-8)
    assert value == pytest.approx(math.log(1e8), abs=1e-9)


def test_kl_empty_cluster():
    with pytest.raises(EmptyClusterError, match="empty cluster"):
        kl_divergence_cluster(np.ones((4, 4)), np.ones((4, 4)), np.zeros((4, 4), dtype=bool))


@pytest.mark.parametrize("epsilon", [0.0, -1e-8, 1e-3])
def test_kl_rejects_epsilon_out_of_range(epsilon):
    members = np.ones((4, 4), dtype=bool)
    with pytest.raises(ValueError):
        kl_divergence_cluster(np.ones((4, 4)), np.ones((4, 4)), members, epsilon=epsilon)


def test_total_scales_with_sqrt_k():
    q_strip = np.random.default_rng(1).uniform(0.05, 1.0, size=(STRIP * 10, STRIP))
    for k in range(1, 11):
        attention, clusters, targets = strip_instance(k, q_strip[:STRIP * k])
        report = clustering_loss(attention, clusters, targets)
        single = report.per_cluster_kl[0]
        assert len(set(report.per_cluster_kl)) == 1
        assert report.total == pytest.approx(math.sqrt(k) * single, rel=1e-12)
        assert report.k == k


def test_linear_scaling_divides_by_k():
    q_strip = np.random.default_rng(2).uniform(0.05, 1.0, size=(12, STRIP))
    attention, clusters, targets = strip_instance(3, q_strip)
    report = clustering_loss(attention, clusters, targets, scaling="linear")
    assert report.total == pytest.approx(report.per_cluster_kl[0], rel=1e-12)
    assert report.scaling == "linear"


def test_scalings_agree_for_one_cluster():
    q_strip = np.random.default_rng(3).uniform(0.05, 1.0, size=(STRIP, STRIP))
    attention, clusters, targets = strip_instance(1, q_strip)
    sqrt_report, sqrt_grad = loss_and_gradient(attention, clusters, targets, scaling="sqrt")
    linear_report, linear_grad = loss_and_gradient(attention, clusters, targets, scaling="linear")
    assert sqrt_report.total == linear_report.total
    assert np.array_equal(sqrt_grad, linear_grad)


def test_unknown_scaling():
    attention, clusters, targets = strip_instance(1, np.full((STRIP, STRIP), 0.5))
    with pytest.raises(ValueError):
        clustering_loss(attention, clusters, targets, scaling="cubic")


def matched_instance(k):
    matched = build_target(PatchCoord(2, 1), 3.0, (STRIP * k, STRIP * k)).values[:, :STRIP]
    return strip_instance(k, matched, sigma=3.0)


def test_gradient_when_attention_equals_target():
    k = 3
    attention, clusters, targets = matched_instance(k)
    report, grad = loss_and_gradient(attention, clusters, targets, normalization="literal")
    assert report.total == 0.0
    np.testing.assert_allclose(grad, -1.0 / math.sqrt(k), rtol=1e-14)


def test_generalized_gradient_vanishes_at_target():
    attention, clusters, targets = matched_instance(3)
    report, grad = loss_and_gradient(attention, clusters, targets)
    assert report.normalization == "generalized"
    assert report.total == 0.0
    assert not np.any(grad)


def test_gradient_is_zero_in_clamp_region():
    q_strip = np.random.default_rng(4).uniform(0.05, 1.0, size=(8, STRIP))
    q_strip[3, 2] = 0.0
    attention, clusters, targets = strip_instance(2, q_strip)
    grad = loss_gradient_wrt_map(attention, clusters, targets, normalization="literal")
    assert grad[3, 2] == 0.0
    assert grad[3, 2 + STRIP] == 0.0
    assert np.all(grad[attention.scores > 0] < 0)


@pytest.mark.parametrize("normalization", ["generalized", "literal", "simplex"])
@pytest.mark.parametrize("scaling", ["sqrt", "linear"])
def test_gradient_matches_finite_differences(normalization, scaling):
    rng = np.random.default_rng(9)
    q_strip = rng.uniform(0.05, 1.0, size=(8, STRIP))
    attention, clusters, targets = strip_instance(2, q_strip)
    # Break the symmetry between the two strips
    scores = attention.scores + rng.uniform(0.0, 0.04, size=attention.shape)

    def loss(values):
        return clustering_loss(AttentionMap(values), clusters, targets,
                               scaling=scaling, normalization=normalization).total

    analytic = loss_gradient_wrt_map(AttentionMap(scores), clusters, targets,
                                     scaling=scaling, normalization=normalization)
    h = 1e-6
    numeric = np.zeros_like(scores)
    for index in np.ndindex(scores.shape):
        plus, minus = scores.copy(), scores.copy()
        plus[index] += h
        minus[index] -= h
        numeric[index] = (loss(plus) - loss(minus)) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_simplex_terms_are_non_negative():
    rng = np.random.default_rng(12)
    for _ in range(20):
        q_strip = rng.uniform(0.01, 1.0, size=(12, STRIP))
        attention, clusters, targets = strip_instance(3, q_strip)
        report = clustering_loss(attention, clusters, targets, normalization="simplex")
        assert all(value >= -1e-12 for value in report.per_cluster_kl)
        assert report.normalization == "simplex"


def test_target_count_must_match_clusters():
    attention, clusters, targets = strip_instance(2, np.full((8, STRIP), 0.5))
    with pytest.raises(ValueError):
        loss_and_gradient(attention, clusters, targets[:1])


def test_generalized_adds_mass_terms():
    rng = np.random.default_rng(21)
    q_strip = rng.uniform(0.01, 1.0, size=(8, STRIP))
    attention, clusters, targets = strip_instance(2, q_strip)
    generalized = clustering_loss(attention, clusters, targets, normalization="generalized")
    literal = clustering_loss(attention, clusters, targets, normalization="literal")
    for index, target in enumerate(targets):
        members = clusters.member_mask(index, attention.scores)
        mass_gap = attention.scores[members].sum() - target.values[members].sum()
        assert generalized.per_cluster_kl[index] == pytest.approx(literal.per_cluster_kl[index] + mass_gap, rel=1e-12)
        assert generalized.per_cluster_kl[index] >= 0.0


def test_unknown_normalization():
    attention, clusters, targets = strip_instance(1, np.full((STRIP, STRIP), 0.5))
    with pytest.raises(ValueError, match="unknown KL normalization"):
        clustering_loss(attention, clusters, targets, normalization="hellinger")


def far_peak_map():
    """64x64 map: two adjacent peaks in one corner, a third in the opposite one."""
    scores = np.zeros((64, 64))
    scores[0, 0] = 1.0
    scores[0, 1] = 0.9
    scores[63, 63] = 0.95
    return AttentionMap(scores)


def test_narrow_target_does_not_underflow():
    target = build_target(PatchCoord(0, 0), sigma_from_radius(1.0, 0.3), (64, 64))
    assert target.values.min() > 0.0
    assert target.values[0, 0] == 1.0


@pytest.mark.parametrize("normalization", ["generalized", "literal", "simplex"])
def test_far_patches_keep_the_loss_finite(normalization):
    attention = far_peak_map()
    clusters = build_cluster_set(attention, 2, 0.3)
    assert clusters.radii == [1.0, 16.0]
    targets = build_targets(clusters, attention.shape)
    report, grad = loss_and_gradient(attention, clusters, targets, normalization=normalization)
    assert all(math.isfinite(value) for value in report.per_cluster_kl)
    assert math.isfinite(report.total)
    assert np.all(np.isfinite(grad))
