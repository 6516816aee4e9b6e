"""Normalized-error metrics in dB.

Defined for real or complex arrays; a 2-plane real/imag layout gives the
same value as the complex matrix it represents, since both sum the same
squared magnitudes.
"""

import numpy as np

FLOOR_DB = -120.0


def nmse_db(h_hat, h_true, floor_db: float = FLOOR_DB) -> float:
    """10·log10(Σ|Ĥ−H|² / Σ|H|²), clamped below at floor_db."""
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    num = float(np.sum(np.abs(h_hat - h_true) ** 2))
    den = float(np.sum(np.abs(h_true) ** 2))
    if den == 0.0:
        raise ValueError("reference signal has zero energy")
    if num == 0.0:
        return floor_db
    return max(10.0 * np.log10(num / den), floor_db)


def masked_nmse_db(h_hat, h_true, mask, floor_db: float = FLOOR_DB) -> float:
    """NMSE over the positions where mask is nonzero (1 = evaluated).

    mask must broadcast against the arrays; both sums run over the same
    masked region, so the value matches nmse_db on the extracted subset.
    """
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    sel = np.broadcast_to(np.asarray(mask) != 0, h_true.shape)
    if not sel.any():
        raise ValueError("mask selects nothing")
    return nmse_db(h_hat[sel], h_true[sel], floor_db)
