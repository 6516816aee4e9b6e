"""Multipath features derived from power-delay profiles.

The feature pipeline: keep the "effective" delay bins (power strictly above
one third of the profile peak), then summarize them. The default summary per
antenna pair is (total effective power, power-weighted mean delay); the
alternative single-path variants keep the earliest or the strongest effective
bin instead, and the combined variants stack summary + single-path channels.

Accumulations in :func:`extract_features` run as plain left-to-right Python
sums over bins -- deliberately, so an exhaustive reference implementation
reproduces them bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyProfileError(ValueError):
    """Raised when a profile has no positive power anywhere."""


@dataclass
class PowerDelayProfile:
    """Binned power vs. delay; bin i sits at delay i * bin_width."""

    bins: np.ndarray
    bin_width: float

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64)
        if self.bins.ndim != 1 or self.bins.size == 0:
            raise ValueError(f"profile bins must be a non-empty vector, got shape {self.bins.shape}")
        if self.bin_width <= 0:
            raise ValueError(f"bin width must be positive, got {self.bin_width}")
        if np.any(self.bins < 0):
            raise ValueError("profile powers must be >= 0")

    @property
    def n_bins(self) -> int:
        return self.bins.size

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_width


@dataclass(frozen=True)
class MultipathFeatures:
    """Per-antenna-pair scalar summary of the effective paths."""

    total_power: float
    weighted_delay: float  # seconds


def effective_paths(pdp: PowerDelayProfile) -> list[tuple[float, float]]:
    """(power, delay) of bins strictly above one third of the peak power.

    The threshold comparison is strict, so a bin sitting exactly at peak/3
    is dropped. Raises EmptyProfileError for an all-zero profile.
    """
    peak = float(pdp.bins.max())
    if peak <= 0.0:
        raise EmptyProfileError("profile has no positive power bin")
    threshold = peak / 3.0
    w = pdp.bin_width
    return [(float(p), i * w) for i, p in enumerate(pdp.bins) if p > threshold]


def extract_features(pdp: PowerDelayProfile) -> MultipathFeatures:
    """Total effective power and power-weighted mean delay."""
    paths = effective_paths(pdp)
    total = 0.0
    weighted = 0.0
    for power, delay in paths:
        total += power
        weighted += power * delay
    return MultipathFeatures(total_power=total, weighted_delay=weighted / total)


def first_effective_path(pdp: PowerDelayProfile) -> tuple[float, float]:
    """(power, delay) of the earliest effective bin."""
    return effective_paths(pdp)[0]


def strongest_path(pdp: PowerDelayProfile) -> tuple[float, float]:
    """(power, delay) of the peak bin (first index on ties)."""
    peak = float(pdp.bins.max())
    if peak <= 0.0:
        raise EmptyProfileError("profile has no positive power bin")
    i = int(np.argmax(pdp.bins))
    return peak, i * pdp.bin_width


FEATURE_VARIANTS = ("summary", "first_path", "strongest_path",
                    "summary_first", "summary_strongest", "average")


def variant_channels(variant: str) -> int:
    if variant in ("summary", "first_path", "strongest_path", "average"):
        return 2
    if variant in ("summary_first", "summary_strongest"):
        return 4
    raise ValueError(f"unknown feature variant {variant!r}")


def features_for_grid(pdps: np.ndarray, bin_width: float, variant: str = "summary") -> np.ndarray:
    """Per-pair feature maps for an antenna grid of profiles.

    ``pdps`` is (n_rx, n_tx, n_bins). Returns (channels, n_rx, n_tx) with a
    (power, delay) channel pair per component; delays are expressed in units
    of ``bin_width`` so both channels live on comparable numeric scales under
    the shared whole-array normalization.
    """
    if variant not in FEATURE_VARIANTS:
        raise ValueError(f"unknown feature variant {variant!r}")
    pdps = np.asarray(pdps, dtype=np.float64)
    if pdps.ndim != 3:
        raise ValueError(f"expected (rx, tx, bins) profiles, got shape {pdps.shape}")
    m, k, _ = pdps.shape

    def pair_channels(mi, ki):
        pdp = PowerDelayProfile(bins=pdps[mi, ki], bin_width=bin_width)
        if variant in ("summary", "average"):
            f = extract_features(pdp)
            return (f.total_power, f.weighted_delay / bin_width)
        if variant == "first_path":
            p, d = first_effective_path(pdp)
            return (p, d / bin_width)
        if variant == "strongest_path":
            p, d = strongest_path(pdp)
            return (p, d / bin_width)
        f = extract_features(pdp)
        if variant == "summary_first":
            p, d = first_effective_path(pdp)
        else:
            p, d = strongest_path(pdp)
        return (f.total_power, f.weighted_delay / bin_width, p, d / bin_width)

    n_ch = variant_channels(variant)
    out = np.empty((n_ch, m, k))
    for mi in range(m):
        for ki in range(k):
            out[:, mi, ki] = pair_channels(mi, ki)
    if variant == "average":
        out = np.broadcast_to(out.mean(axis=(1, 2), keepdims=True), out.shape).copy()
    return out


# -- shared-scale normalization --------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    """One scalar mean/std pair covering a whole modality."""

    mean: float
    std: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.std) or self.std <= 0:
            raise ValueError(f"bad normalization stats mean={self.mean} std={self.std}")


def fit_zscore(x: np.ndarray, eps: float = 1e-12) -> NormStats:
    x = np.asarray(x, dtype=np.float64)
    std = float(x.std())
    return NormStats(mean=float(x.mean()), std=max(std, eps))


def apply_zscore(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def invert_zscore(x: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean
