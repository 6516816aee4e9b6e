"""Feature extraction vs. exhaustive reference; threshold edge cases."""

import numpy as np
import pytest

from cextra import features as ft


def pdp(bins, w=10e-9):
    return ft.PowerDelayProfile(bins=np.asarray(bins, dtype=float), bin_width=w)


def test_threshold_keeps_strictly_above_one_third():
    paths = ft.effective_paths(pdp([1.0, 0.5, 0.2]))
    assert [p for p, _ in paths] == [1.0, 0.5]
    # 0.3 sits exactly at 0.9/3 and must be dropped
    paths = ft.effective_paths(pdp([0.9, 0.3]))
    assert [p for p, _ in paths] == [0.9]


def test_effective_paths_delays_are_bin_times():
    got = ft.effective_paths(pdp([0.0, 1.0, 0.6], w=5e-9))
    assert got == [(1.0, 5e-9), (0.6, 10e-9)]


def test_summary_frozen_example():
    # powers 1.0 and 0.5 at 10 ns and 20 ns
    f = ft.extract_features(pdp([0.0, 1.0, 0.5]))
    assert f.total_power == 1.5
    assert f.weighted_delay == pytest.approx((1.0 * 10e-9 + 0.5 * 20e-9) / 1.5)


def test_empty_profile_raises():
    with pytest.raises(ft.EmptyProfileError):
        ft.effective_paths(pdp([0.0, 0.0]))
    with pytest.raises(ft.EmptyProfileError):
        ft.strongest_path(pdp([0.0]))


def test_profile_validation():
    with pytest.raises(ValueError, match=">= 0"):
        pdp([1.0, -0.1])
    with pytest.raises(ValueError, match="bin width"):
        ft.PowerDelayProfile(bins=np.ones(3), bin_width=-1.0)
    with pytest.raises(ValueError, match="vector"):
        ft.PowerDelayProfile(bins=np.ones((2, 2)), bin_width=1.0)


def test_strongest_path_example_and_tie():
    assert ft.strongest_path(pdp([0.0, 0.0, 0.0, 0.4, 0.0, 0.9], w=10e-9)) == (0.9, 50e-9)
    # tie -> first index wins
    assert ft.strongest_path(pdp([0.7, 0.7], w=10e-9)) == (0.7, 0.0)


def test_first_vs_strongest_disagree_on_late_peak():
    profile = pdp([0.5, 0.0, 1.0])
    assert ft.first_effective_path(profile) == (0.5, 0.0)
    assert ft.strongest_path(profile) == (1.0, 20e-9)


def brute_force_features(bins, w):
    """Independent reference: explicit loops, same left-to-right order."""
    peak = bins[0]
    for p in bins[1:]:
        if p > peak:
            peak = p
    assert peak > 0
    thr = peak / 3.0
    total = 0.0
    weighted = 0.0
    for i, p in enumerate(bins):
        if p > thr:
            total += p
            weighted += p * (i * w)
    return total, weighted / total


def test_matches_brute_force_bitwise_1000_trials():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        bins = rng.uniform(0, 2, n)
        bins[rng.random(n) < 0.3] = 0.0
        if bins.max() <= 0:
            bins[int(rng.integers(n))] = 1.0
        w = float(rng.uniform(1e-9, 50e-9))
        f = ft.extract_features(pdp(bins, w))
        total, wd = brute_force_features(list(bins), w)
        assert f.total_power == total, "total power must match reference exactly"
        assert f.weighted_delay == wd, "weighted delay must match reference exactly"


def test_scale_covariance():
    rng = np.random.default_rng(3)
    bins = rng.uniform(0, 1, 16)
    bins[0] = 1.0
    for c in (0.25, 3.0, 1e4):
        f1 = ft.extract_features(pdp(bins))
        f2 = ft.extract_features(pdp(bins * c))
        assert f2.total_power == pytest.approx(c * f1.total_power, rel=1e-12)
        assert f2.weighted_delay == pytest.approx(f1.weighted_delay, rel=1e-12)


def test_grid_variants_shapes_and_units():
    rng = np.random.default_rng(8)
    pdps = rng.uniform(0.1, 1.0, (2, 3, 12))
    w = 8e-9
    for variant, ch in [("summary", 2), ("first_path", 2), ("strongest_path", 2),
                        ("summary_first", 4), ("summary_strongest", 4), ("average", 2)]:
        out = ft.features_for_grid(pdps, w, variant)
        assert out.shape == (ch, 2, 3)
        assert ft.variant_channels(variant) == ch
    # delay channel is in bin-width units
    out = ft.features_for_grid(pdps, w, "summary")
    f00 = ft.extract_features(ft.PowerDelayProfile(pdps[0, 0], w))
    assert out[1, 0, 0] == pytest.approx(f00.weighted_delay / w)
    assert out[0, 0, 0] == f00.total_power


def test_average_variant_broadcasts_grid_mean():
    rng = np.random.default_rng(9)
    pdps = rng.uniform(0.1, 1.0, (3, 4, 10))
    avg = ft.features_for_grid(pdps, 1e-9, "average")
    per = ft.features_for_grid(pdps, 1e-9, "summary")
    assert np.allclose(avg, per.mean(axis=(1, 2), keepdims=True))
    assert np.ptp(avg[0]) == 0  # constant across the grid


def test_combined_variants_stack_summary_first():
    rng = np.random.default_rng(10)
    pdps = rng.uniform(0.1, 1.0, (2, 2, 8))
    comb = ft.features_for_grid(pdps, 1e-9, "summary_strongest")
    summ = ft.features_for_grid(pdps, 1e-9, "summary")
    stro = ft.features_for_grid(pdps, 1e-9, "strongest_path")
    assert np.array_equal(comb[:2], summ)
    assert np.array_equal(comb[2:], stro)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError, match="variant"):
        ft.features_for_grid(np.ones((1, 1, 4)), 1e-9, "case9")
    with pytest.raises(ValueError, match="variant"):
        ft.variant_channels("case9")


def test_zscore_basics():
    stats = ft.fit_zscore(np.array([1.0, 3.0]))
    assert stats.mean == 2.0 and stats.std == 1.0
    x = np.array([[1.0, 3.0], [2.0, 2.0]])
    z = ft.apply_zscore(x, stats)
    assert np.allclose(ft.invert_zscore(z, stats), x)


def test_zscore_zero_variance_guard():
    stats = ft.fit_zscore(np.full(10, 4.5))
    z = ft.apply_zscore(np.full(10, 4.5), stats)
    assert np.all(np.isfinite(z)) and np.allclose(z, 0)
    assert stats.std == 1e-12


def test_normstats_validation():
    with pytest.raises(ValueError):
        ft.NormStats(mean=0.0, std=0.0)
    with pytest.raises(ValueError):
        ft.NormStats(mean=np.nan, std=1.0)
