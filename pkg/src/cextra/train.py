"""Training loops: profile-coder pretraining and extrapolator training.

Both loops are seed-deterministic: one generator drives model init, the
train/test split, epoch shuffling, and mask sampling in a fixed consumption
order, so equal seeds give equal histories. Any non-finite loss aborts
immediately with the epoch/batch/step it appeared at.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .csi2pdp import C2PConfig, PdpChannelCoder
from .dataio import Dataset
from .features import apply_zscore, features_for_grid, fit_zscore
from .masking import make_mask_plan
from .model import ChannelExtrapolator, ExtrapolatorConfig, masked_mse
from .optim import AdamW, ScheduleConfig, lr_at


def _abort_if_not_finite(value: float, epoch: int, batch: int, step: int):
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite loss {value!r} at epoch {epoch}, "
                           f"batch {batch} (global step {step})")


def _split(n: int, test_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    perm = rng.permutation(n)
    n_test = max(int(round(n * test_fraction)), 1)
    if n_test >= n:
        raise ValueError(f"test fraction {test_fraction} leaves no training data")
    return perm[n_test:], perm[:n_test]


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "test_loss", "lr"])
        w.writeheader()
        w.writerows(history)


# -- profile coder ---------------------------------------------------------


@dataclass(frozen=True)
class C2PTrainConfig:
    epochs: int = 400
    batch_size: int = 100
    lr: float = 1e-4
    hidden: int = 512
    power_ref: float = 1e-3
    test_fraction: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.hidden) < 1:
            raise ValueError("epochs, batch_size and hidden must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


def train_c2p(pdps: np.ndarray, csi_vecs: np.ndarray, cfg: C2PTrainConfig,
              seed: int, bin_width: float = 6.25e-9):
    """Joint profile/latent training. Returns (coder, history)."""
    pdps = np.asarray(pdps, dtype=np.float64)
    csi_vecs = np.asarray(csi_vecs, dtype=np.float64)
    if pdps.ndim != 2 or csi_vecs.ndim != 2 or len(pdps) != len(csi_vecs):
        raise ValueError(f"expected matching (n, bins) and (n, dim) arrays, "
                         f"got {pdps.shape} and {csi_vecs.shape}")

    rng = np.random.default_rng(seed)
    coder = PdpChannelCoder(
        C2PConfig(n_bins=pdps.shape[1], csi_dim=csi_vecs.shape[1],
                  hidden=cfg.hidden, power_ref=cfg.power_ref, bin_width=bin_width),
        rng)
    train_idx, test_idx = _split(len(pdps), cfg.test_fraction, rng)
    opt = AdamW(coder.parameters(), lr=cfg.lr)

    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = coder.loss(pdps[sel], csi_vecs[sel])
            value = loss.item()
            step += 1
            _abort_if_not_finite(value, epoch, bi, step)
            T.backward(loss)
            opt.step()
            total += value * len(sel)
        with T.no_grad():
            test_loss = coder.loss(pdps[test_idx], csi_vecs[test_idx]).item()
        history.append({"epoch": epoch, "train_loss": total / len(order),
                        "test_loss": test_loss, "lr": cfg.lr})
    return coder, history


# -- extrapolator ------------------------------------------------------------


@dataclass(frozen=True)
class CETrainConfig:
    epochs: int = 400
    batch_size: int = 100
    base_lr: float = 1e-3
    min_lr: float = 1e-6
    warmup_epochs: int = 40
    weight_decay: float = 0.05
    betas: tuple = (0.9, 0.95)
    mask_ratio: tuple = (0.75, 0.95)
    eval_mask_ratio: float = 0.9
    test_fraction: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        lo, hi = self.mask_ratio
        if not 0.0 <= lo <= hi < 1.0:
            raise ValueError(f"mask_ratio range must satisfy 0 <= lo <= hi < 1, "
                             f"got {self.mask_ratio}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")

    @property
    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(base_lr=self.base_lr, min_lr=self.min_lr,
                              warmup_epochs=self.warmup_epochs,
                              total_epochs=self.epochs)


def default_subcarriers(n_subcarriers: int, count: int = 8) -> list[int]:
    """Evenly spaced subcarrier slice indices used to cut scenes into samples."""
    return sorted(set(np.linspace(0, n_subcarriers - 1, count).astype(int).tolist()))


def prepare_ce_arrays(ds: Dataset, coder: Optional[PdpChannelCoder],
                      variant: Optional[str],
                      subcarriers: Optional[list[int]] = None):
    """Scenes -> (channel planes, feature grids) sample arrays.

    Features come from coder-inferred profiles when a coder is given, else
    from the stored ground-truth profiles (the ablation bypass); a variant
    of None skips feature work entirely (no-fusion baseline). Each scene
    contributes one sample per requested subcarrier slice; the feature grid
    is shared across a scene's slices.
    """
    n, m, k, s = ds.csi.shape
    subcarriers = default_subcarriers(s) if subcarriers is None else list(subcarriers)
    if any(not 0 <= i < s for i in subcarriers):
        raise ValueError(f"subcarrier indices {subcarriers} out of range for {s}")

    planes = np.stack([ds.subcarrier_planes(i) for i in subcarriers], axis=1)
    x_csi = planes.reshape(n * len(subcarriers), 2, m, k)
    if variant is None:
        return x_csi, None

    if coder is not None:
        flat = ds.csi.reshape(n * m * k, s)
        vecs = np.concatenate([flat.real, flat.imag], axis=1)
        grids = coder.infer_pdp(vecs).reshape(n, m, k, -1)
    else:
        if ds.pdps is None:
            raise ValueError("dataset has no stored profiles; a coder is required")
        grids = ds.pdps

    feats = np.stack([features_for_grid(grids[i], ds.bin_width, variant)
                      for i in range(n)])                       # (n, C, M, K)
    x_mp = np.repeat(feats, len(subcarriers), axis=0)
    return x_csi, x_mp


def train_ce(x_csi: np.ndarray, x_mp: Optional[np.ndarray],
             model_cfg: ExtrapolatorConfig, cfg: CETrainConfig, seed: int):
    """Masked-reconstruction training. Returns (model, csi_stats, mp_stats, history)."""
    x_csi = np.asarray(x_csi, dtype=np.float64)
    needs_mp = model_cfg.fusion != "none"
    if needs_mp:
        if x_mp is None:
            raise ValueError(f"fusion {model_cfg.fusion!r} trains on features; x_mp is required")
        x_mp = np.asarray(x_mp, dtype=np.float64)
        if x_mp.shape[1] != model_cfg.mp_channels:
            raise ValueError(f"feature channels {x_mp.shape[1]} != config "
                             f"mp_channels {model_cfg.mp_channels}")

    rng = np.random.default_rng(seed)
    model = ChannelExtrapolator(model_cfg, rng)
    train_idx, test_idx = _split(len(x_csi), cfg.test_fraction, rng)

    csi_stats = fit_zscore(x_csi[train_idx])
    xc = apply_zscore(x_csi, csi_stats)
    mp_stats = None
    xm = None
    if needs_mp:
        mp_stats = fit_zscore(x_mp[train_idx])
        xm = apply_zscore(x_mp, mp_stats)

    sched = cfg.schedule
    opt = AdamW(model.parameters(), lr=cfg.base_lr, betas=cfg.betas,
                weight_decay=cfg.weight_decay)
    n_tokens = model_cfg.n_tokens

    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = lr_at(epoch, sched)
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            ratio = rng.uniform(*cfg.mask_ratio)
            plan = make_mask_plan(n_tokens, ratio, rng, batch=len(sel))
            xb = T.Tensor(xc[sel])
            opt.zero_grad()
            out = model.forward(xb, T.Tensor(xm[sel]) if needs_mp else None,
                                plan, training=True, rng=rng)
            loss = masked_mse(out, xb, plan, model_cfg.patch_size)
            value = loss.item()
            step += 1
            _abort_if_not_finite(value, epoch, bi, step)
            T.backward(loss)
            opt.step()
            total += value * len(sel)

        test_loss = _eval_masked_loss(model, xc, xm, test_idx, cfg, seed)
        history.append({"epoch": epoch, "train_loss": total / len(order),
                        "test_loss": test_loss, "lr": opt.lr})
    return model, csi_stats, mp_stats, history


def _eval_masked_loss(model, xc, xm, test_idx, cfg: CETrainConfig, seed: int) -> float:
    """Held-out masked MSE under plans that repeat identically every epoch."""
    eval_rng = np.random.default_rng([seed, 1])
    total = 0.0
    with T.no_grad():
        for start in range(0, len(test_idx), cfg.batch_size):
            sel = test_idx[start:start + cfg.batch_size]
            plan = make_mask_plan(model.cfg.n_tokens, cfg.eval_mask_ratio,
                                  eval_rng, batch=len(sel))
            xb = T.Tensor(xc[sel])
            out = model.forward(xb, T.Tensor(xm[sel]) if xm is not None else None, plan)
            total += masked_mse(out, xb, plan, model.cfg.patch_size).item() * len(sel)
    return total / len(test_idx)
