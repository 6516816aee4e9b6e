"""Shared random token masking (noise-argsort style).

One plan is drawn per batch element and reused across every modality of that
element, so the channel tokens and the multipath-feature tokens are hidden at
identical grid positions. Kept tokens are the ``n_keep`` lowest-noise
positions; ``ids_restore`` inverts the shuffle so a decoder can rebuild the
full-length sequence after visible tokens and mask tokens are concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class MaskPlan:
    mask_ratio: float
    noise: np.ndarray        # (B, L) the raw uniform draws
    ids_shuffle: np.ndarray  # (B, L) ascending-noise order, stable ties
    ids_keep: np.ndarray     # (B, n_keep) first n_keep of ids_shuffle
    ids_restore: np.ndarray  # (B, L) inverse permutation of ids_shuffle
    binary_mask: np.ndarray  # (B, L) 0 = kept, 1 = masked

    @property
    def batch(self) -> int:
        return self.noise.shape[0]

    @property
    def n_total(self) -> int:
        return self.noise.shape[1]

    @property
    def n_keep(self) -> int:
        return self.ids_keep.shape[1]

    @property
    def n_masked(self) -> int:
        return self.n_total - self.n_keep


def plan_from_noise(noise: np.ndarray, mask_ratio: float) -> MaskPlan:
    """Deterministic core: build a plan from given noise values."""
    if not 0.0 <= mask_ratio < 1.0:
        raise ValueError(f"mask ratio must be in [0, 1), got {mask_ratio}")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 2 or noise.shape[1] < 1:
        raise ValueError(f"noise must be (batch, n_tokens), got shape {noise.shape}")
    b, n = noise.shape
    n_keep = max(int(np.floor(n * (1.0 - mask_ratio))), 1)

    ids_shuffle = np.argsort(noise, axis=1, kind="stable")
    ids_restore = np.argsort(ids_shuffle, axis=1, kind="stable")
    ids_keep = ids_shuffle[:, :n_keep]

    mask = np.ones((b, n))
    mask[:, :n_keep] = 0.0
    mask = np.take_along_axis(mask, ids_restore, axis=1)

    return MaskPlan(mask_ratio=float(mask_ratio), noise=noise, ids_shuffle=ids_shuffle,
                    ids_keep=ids_keep, ids_restore=ids_restore, binary_mask=mask)


def make_mask_plan(n_tokens: int, mask_ratio: float, rng: np.random.Generator,
                   batch: int = 1) -> MaskPlan:
    if n_tokens < 1 or batch < 1:
        raise ValueError(f"need n_tokens >= 1 and batch >= 1, got {n_tokens}, {batch}")
    return plan_from_noise(rng.random((batch, n_tokens)), mask_ratio)


def apply_mask(tokens: T.Tensor, plan: MaskPlan) -> T.Tensor:
    """Gather the visible tokens, (B, L, D) -> (B, n_keep, D)."""
    if tokens.ndim != 3 or tokens.shape[0] != plan.batch or tokens.shape[1] != plan.n_total:
        raise ValueError(
            f"token shape {tokens.shape} does not match plan "
            f"({plan.batch} x {plan.n_total} tokens)"
        )
    return T.gather_tokens(tokens, plan.ids_keep)


def restore_sequence(visible: T.Tensor, mask_token: T.Tensor, plan: MaskPlan) -> T.Tensor:
    """Insert the learnable mask token at hidden positions and unshuffle.

    visible is (B, n_keep, D); mask_token is (D,). Returns (B, L, D) where
    kept positions carry their visible tokens and the rest carry mask_token.
    Gradients flow into both the visible tokens and the mask token.
    """
    b, n_keep, d = visible.shape
    if n_keep != plan.n_keep or b != plan.batch:
        raise ValueError(
            f"visible tokens {visible.shape} do not match plan "
            f"({plan.batch} x {plan.n_keep})"
        )
    if mask_token.shape != (d,):
        raise ValueError(f"mask token shape {mask_token.shape} != ({d},)")
    filler = T.broadcast_to(T.reshape(mask_token, (1, 1, d)), (b, plan.n_masked, d))
    full = T.concat([visible, filler], axis=1)
    return T.gather_tokens(full, plan.ids_restore)
