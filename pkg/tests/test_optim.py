"""Optimizer and schedule tests, including a hand-rolled 10-step oracle."""

import numpy as np
import pytest

from cextra import optim
from cextra import tensor as T


def test_first_step_is_signed_lr():
    # eps tiny relative to |g| -> bias-corrected first step ~ -lr * sign(g)
    lr = 1e-3
    p = T.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.7, -0.3])
    opt = optim.AdamW([("p", p)], lr=lr)
    opt.step()
    delta = p.data - np.array([1.0, -2.0])
    assert np.allclose(delta, [-lr, lr], rtol=1e-6)


def test_zero_grad_zero_decay_is_identity():
    p = T.Tensor(np.array([3.0, -4.0]), requires_grad=True)
    opt = optim.AdamW([("p", p)], lr=0.1)
    opt.step()  # grad is None -> treated as zeros
    assert np.array_equal(p.data, [3.0, -4.0])


def test_decoupled_decay_with_zero_grad():
    lr, wd = 0.1, 0.05
    p = T.Tensor(np.array([2.0]), requires_grad=True)
    p.grad = np.zeros(1)
    opt = optim.AdamW([("p", p)], lr=lr, weight_decay=wd)
    opt.step()
    assert p.data[0] == 2.0 * (1.0 - lr * wd)


def test_lr_must_be_positive():
    p = T.Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ValueError):
        optim.AdamW([("p", p)], lr=0.0)
    with pytest.raises(ValueError):
        optim.AdamW([("p", p)], lr=-1e-3)


def test_ten_steps_match_handrolled_reference():
    # quadratic f(p) = sum((p - target)^2), reference written out longhand
    lr, b1, b2, eps, wd = 1e-2, 0.9, 0.95, 1e-8, 0.05
    target = np.array([0.3, -1.2])
    p = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = optim.AdamW([("p", p)], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)

    ref = np.array([1.0, 2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    for t in range(1, 11):
        g = 2.0 * (ref - target)

        p.grad = 2.0 * (p.data - target)
        opt.step()

        ref = ref * (1.0 - lr * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        ref = ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert np.abs(p.data - ref).max() < 1e-12, f"diverged at step {t}"


def test_plain_adam_is_zero_decay_adamw():
    rng = np.random.default_rng(0)
    p0 = rng.normal(size=5)
    g = rng.normal(size=5)
    out_a, _, _ = optim.adam_step(p0, g, np.zeros(5), np.zeros(5), 1, 1e-3)
    out_w, _, _ = optim.adamw_step(p0, g, np.zeros(5), np.zeros(5), 1, 1e-3,
                                   weight_decay=0.0)
    assert np.array_equal(out_a, out_w)


# -- schedule -------------------------------------------------------------


def test_schedule_frozen_points():
    cfg = optim.ScheduleConfig(base_lr=1e-3, min_lr=1e-6, warmup_epochs=40,
                               total_epochs=400)
    assert optim.lr_at(20, cfg) == 5e-4
    assert optim.lr_at(40, cfg) == 1e-3
    mid = 40 + (400 - 40) / 2
    assert abs(optim.lr_at(mid, cfg) - (1e-3 + 1e-6) / 2) < 1e-18
    assert optim.lr_at(0, cfg) == 0.0
    assert abs(optim.lr_at(400, cfg) - 1e-6) < 1e-18
    assert optim.lr_at(1000, cfg) == optim.lr_at(400, cfg)


def test_schedule_is_continuous():
    cfg = optim.ScheduleConfig(base_lr=1e-3, min_lr=1e-6, warmup_epochs=40,
                               total_epochs=400)
    bound = 2 * cfg.base_lr / min(cfg.warmup_epochs,
                                  cfg.total_epochs - cfg.warmup_epochs)
    lrs = [optim.lr_at(e, cfg) for e in range(cfg.total_epochs + 1)]
    steps = np.abs(np.diff(lrs))
    assert steps.max() <= bound
    # cosine tail is monotone down
    assert all(a >= b for a, b in zip(lrs[40:], lrs[41:]))


def test_schedule_validation():
    with pytest.raises(ValueError):
        optim.ScheduleConfig(base_lr=1e-3, min_lr=2e-3)
    with pytest.raises(ValueError):
        optim.ScheduleConfig(warmup_epochs=400, total_epochs=400)
    with pytest.raises(ValueError):
        optim.ScheduleConfig(base_lr=0.0)
