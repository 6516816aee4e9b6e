"""Adam-family optimizers and the warmup/cosine learning-rate schedule.

The stateful class wraps a pure per-array update so tests can replay steps
against a hand-rolled reference. Weight decay is decoupled: it rescales the
weights before the adaptive update and never enters the moment estimates,
so ``weight_decay=0`` recovers plain Adam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


def adam_step(param, grad, m, v, step, lr, betas=(0.9, 0.999), eps=1e-8):
    """Bias-corrected Adam update. Returns new (param, m, v); mutates nothing.

    ``step`` is 1-based: the first update must pass step=1 or the bias
    correction divides by zero.
    """
    b1, b2 = betas
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def adamw_step(param, grad, m, v, step, lr, betas=(0.9, 0.999), eps=1e-8,
               weight_decay=0.0):
    """Decoupled-decay variant: shrink weights first, then the Adam update."""
    return adam_step(param * (1.0 - lr * weight_decay), grad, m, v, step,
                     lr, betas, eps)


class AdamW:
    """Stateful optimizer over named tensors; weight_decay=0 is plain Adam."""

    def __init__(self, params: list[tuple[str, T.Tensor]], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(t.data) for _, t in self.params]
        self._v = [np.zeros_like(t.data) for _, t in self.params]

    def step(self):
        """Apply one update from the accumulated gradients (missing grad = 0)."""
        self.step_count += 1
        for i, (_, t) in enumerate(self.params):
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            t.data, self._m[i], self._v[i] = adamw_step(
                t.data, g, self._m[i], self._v[i], self.step_count,
                self.lr, self.betas, self.eps, self.weight_decay)

    def zero_grad(self):
        for _, t in self.params:
            t.zero_grad()


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 1e-3
    min_lr: float = 1e-6
    warmup_epochs: int = 40
    total_epochs: int = 400

    def __post_init__(self):
        if self.base_lr <= 0 or not 0 <= self.min_lr <= self.base_lr:
            raise ValueError(f"need 0 <= min_lr <= base_lr, base_lr > 0, "
                             f"got {self.min_lr}, {self.base_lr}")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ValueError(f"warmup {self.warmup_epochs} must be shorter than "
                             f"the run ({self.total_epochs} epochs)")


def lr_at(epoch: float, cfg: ScheduleConfig) -> float:
    """Linear warmup from 0 to base_lr, then cosine decay to min_lr.

    Accepts fractional epochs for step-granular scheduling; epochs past the
    configured total stay at min_lr.
    """
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * epoch / cfg.warmup_epochs
    t = (epoch - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs)
    t = min(t, 1.0)
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + np.cos(np.pi * t))
