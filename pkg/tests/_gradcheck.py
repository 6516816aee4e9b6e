"""Shared finite-difference gradient checking (5-point central, h = 1e-5)."""

import numpy as np

from cextra import tensor as T

H = 1e-5
REL_TOL = 1e-4


def fd_grad(f, leaf: T.Tensor, n_probe: int = 6, rng=None):
    """Numerical gradient of scalar-valued f() w.r.t. random entries of leaf.

    Returns (flat_indices, fd_values). f must re-run the forward pass using
    leaf.data each call.
    """
    rng = rng or np.random.default_rng(0)
    flat = leaf.data.reshape(-1)
    n_probe = min(n_probe, flat.size)
    idx = rng.choice(flat.size, size=n_probe, replace=False)
    vals = []
    for i in idx:
        orig = flat[i]
        samples = []
        for delta in (2 * H, H, -H, -2 * H):
            flat[i] = orig + delta
            with T.no_grad():
                samples.append(f())
        flat[i] = orig
        f_p2, f_p1, f_m1, f_m2 = samples
        vals.append((-f_p2 + 8 * f_p1 - 8 * f_m1 + f_m2) / (12 * H))
    return idx, np.array(vals)


def check_grads(build_loss, leaves, n_probe=6, rel_tol=REL_TOL, rng=None):
    """Compare analytic gradients of build_loss() against finite differences."""
    rng = rng or np.random.default_rng(0)
    for leaf in leaves:
        leaf.zero_grad()
    loss = build_loss()
    T.backward(loss)
    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None, "leaf missed by backward"
        assert leaf.grad.shape == leaf.data.shape
        idx, fd = fd_grad(lambda: build_loss().item(), leaf, n_probe=n_probe, rng=rng)
        ana = leaf.grad.reshape(-1)[idx]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(fd)), 1.0)
        rel = np.abs(ana - fd) / denom
        worst = max(worst, float(rel.max()))
        assert rel.max() < rel_tol, f"gradient mismatch: analytic {ana}, fd {fd}"
    return worst
