"""Evaluation sweeps, ablation tables, and inference timing.

Known-CSI percentages are token-granular: a percentage maps to the mask
ratio 1 - pct/100 and the plan keeps floor(L * pct/100) tokens (at least
one), so very small percentages quantize to the nearest token count.
"""

from __future__ import annotations

import csv
import time
from typing import Optional

import numpy as np

from .masking import make_mask_plan
from .metrics import FLOOR_DB, masked_nmse_db
from .model import ChannelExtrapolator, extrapolate, token_mask_to_cells


def _ratio_db(num: float, den: float) -> float:
    if num == 0.0:
        return FLOOR_DB
    return max(10.0 * np.log10(num / den), FLOOR_DB)


def _check_percentages(percentages):
    pcts = list(percentages)
    if not pcts or any(not 0 < p < 100 for p in pcts):
        raise ValueError(f"known-CSI percentages must lie in (0, 100), got {pcts}")
    return pcts


def evaluate_arrays(model: ChannelExtrapolator, csi_stats, mp_stats,
                    x_csi: np.ndarray, x_mp: Optional[np.ndarray],
                    percentages, n_seeds: int = 3, base_seed: int = 0,
                    batch_size: int = 100) -> list[dict]:
    """Masked/full reconstruction error per known-CSI percentage.

    Each percentage is evaluated under n_seeds independent mask draws; the
    aggregate rows pool squared errors over all samples and seeds, and the
    per-sample columns give the mean/std of single-sample masked NMSE (dB).
    """
    pcts = _check_percentages(percentages)
    if n_seeds < 1:
        raise ValueError("need at least one mask seed")
    rows = []
    for pct in pcts:
        rho = 1.0 - pct / 100.0
        num_m = den_m = num_f = den_f = 0.0
        sample_db = []
        for s in range(n_seeds):
            rng = np.random.default_rng([base_seed, int(round(100 * pct)), s])
            for start in range(0, len(x_csi), batch_size):
                xb = x_csi[start:start + batch_size]
                xmb = x_mp[start:start + batch_size] if x_mp is not None else None
                plan = make_mask_plan(model.cfg.n_tokens, rho, rng, batch=len(xb))
                pred = extrapolate(model, xb, xmb, plan, csi_stats, mp_stats)
                cells = token_mask_to_cells(plan, model.cfg)[:, None, :, :]
                sel = np.broadcast_to(cells != 0, xb.shape)
                diff2 = (pred - xb) ** 2
                num_m += diff2[sel].sum()
                den_m += (xb[sel] ** 2).sum()
                num_f += diff2.sum()
                den_f += (xb ** 2).sum()
                sample_db.extend(masked_nmse_db(pred[i], xb[i], cells[i])
                                 for i in range(len(xb)))
        rows.append({
            "known_pct": pct,
            "masked_nmse_db": _ratio_db(num_m, den_m),
            "full_nmse_db": _ratio_db(num_f, den_f),
            "sample_mean_db": float(np.mean(sample_db)),
            "sample_std_db": float(np.std(sample_db)),
            "n_samples": len(x_csi),
            "n_seeds": n_seeds,
        })
    return rows


def ablation_rows(named_models: list[tuple], named_arrays: list[tuple],
                  percentages, n_seeds: int = 3, base_seed: int = 0) -> list[dict]:
    """One row per (model variant, dataset, percentage).

    named_models entries are (variant, model, csi_stats, mp_stats, x_mp_by_dataset)
    where x_mp_by_dataset maps dataset names to feature arrays (None for the
    no-fusion baseline); named_arrays entries are (dataset_name, x_csi).
    """
    rows = []
    for variant, model, csi_stats, mp_stats, mp_by_ds in named_models:
        for ds_name, x_csi in named_arrays:
            sweep = evaluate_arrays(model, csi_stats, mp_stats, x_csi,
                                    mp_by_ds.get(ds_name) if mp_by_ds else None,
                                    percentages, n_seeds, base_seed)
            for r in sweep:
                rows.append({"variant": variant, "dataset": ds_name,
                             "known_pct": r["known_pct"],
                             "masked_nmse_db": r["masked_nmse_db"],
                             "full_nmse_db": r["full_nmse_db"]})
    return rows


def bench_latency(named_models: list[tuple], x_csi: np.ndarray,
                  x_mp_by_variant: dict, percentages, n_runs: int = 200,
                  n_warmup: int = 10, base_seed: int = 0) -> list[dict]:
    """Single-sample inference latency table.

    named_models entries are (variant, model, csi_stats, mp_stats). Warmup
    iterations run the same path but are excluded from the statistics.
    Values are wall-clock and hardware-dependent.
    """
    pcts = _check_percentages(percentages)
    if n_runs < 200:
        raise ValueError(f"timing stats need at least 200 runs, got {n_runs}")
    rows = []
    for variant, model, csi_stats, mp_stats in named_models:
        x_mp = x_mp_by_variant.get(variant)
        for pct in pcts:
            rho = 1.0 - pct / 100.0
            rng = np.random.default_rng([base_seed, int(round(100 * pct))])
            times_ms = []
            for r in range(n_warmup + n_runs):
                i = r % len(x_csi)
                plan = make_mask_plan(model.cfg.n_tokens, rho, rng, batch=1)
                xmb = x_mp[i:i + 1] if x_mp is not None else None
                t0 = time.perf_counter()
                extrapolate(model, x_csi[i:i + 1], xmb, plan, csi_stats, mp_stats)
                elapsed = time.perf_counter() - t0
                if r >= n_warmup:
                    times_ms.append(elapsed * 1e3)
            rows.append({"variant": variant, "known_pct": pct,
                         "mean_ms": float(np.mean(times_ms)),
                         "std_ms": float(np.std(times_ms)),
                         "n_runs": len(times_ms)})
    return rows


def write_rows(path, rows: list[dict]) -> None:
    """CSV with a header row; field order follows the first row's keys."""
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
