"""Minimal dense-tensor library with reverse-mode automatic differentiation.

Everything is float64 on numpy buffers. Operations record backward closures
on a per-thread tape; ``backward(loss)`` replays the tape in reverse
execution order (which is a valid reverse topological order) and accumulates
gradients into leaf tensors with ``+=`` semantics. Call ``zero_grad`` between
optimization steps.

Only the operations the networks in this package need are provided. General
broadcasting follows numpy's trailing-alignment rules; gradients are reduced
back to each operand's shape.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf, expit

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """A dense float64 array that optionally participates in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None  # ndarray, accumulated by backward()
        self.node = None  # tape node that produced this tensor (None for leaves)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor) or isinstance(other, np.ndarray):
            raise TypeError("tensor division only supports scalar divisors")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


# -- tape ----------------------------------------------------------------


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn  # grad_out -> tuple of parent grads (or None)


class GradTape:
    """Ordered record of operations; single-threaded, one per worker thread."""

    def __init__(self):
        self.nodes = []

    def clear(self):
        for node in self.nodes:
            node.out.node = None
        self.nodes.clear()


_tls = threading.local()


def _state():
    if not hasattr(_tls, "tape"):
        _tls.tape = GradTape()
        _tls.grad_enabled = True
    return _tls


def active_tape() -> GradTape:
    return _state().tape


@contextmanager
def no_grad():
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.node is not None


def _record(out: Tensor, parents, backward_fn):
    st = _state()
    if not st.grad_enabled:
        return out
    if not any(_tracked(p) for p in parents):
        return out
    node = _Node(out, tuple(parents), backward_fn)
    out.node = node
    st.tape.nodes.append(node)
    return out


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``.

    The loss must be a scalar. The active tape is consumed and cleared.
    Gradients for each leaf are fully summed over all fan-in paths before
    being added to ``.grad``, so repeated backward calls accumulate.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = active_tape()
    if loss.node is None:
        if loss.requires_grad:  # a bare leaf used directly as the loss
            seed = np.ones_like(loss.data)
            loss.grad = seed if loss.grad is None else loss.grad + seed
        tape.clear()
        return

    # Mark the nodes that can influence the loss.
    needed = set()
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if id(node) in needed:
            continue
        needed.add(id(node))
        for p in node.parents:
            if p.node is not None:
                stack.append(p.node)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        if id(node) not in needed:
            continue
        g_out = grads.pop(id(node.out), None)
        if g_out is None:
            continue
        parent_grads = node.backward_fn(g_out)
        for p, g in zip(node.parents, parent_grads):
            if g is None or not _tracked(p):
                continue
            key = id(p)
            grads[key] = grads[key] + g if key in grads else g
            if p.node is None and p.requires_grad:
                leaves[key] = p

    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    tape.clear()


# -- helpers ---------------------------------------------------------------


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _sum_to_shape(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise / linear ops ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _sum_to_shape(g, a.shape), _sum_to_shape(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _sum_to_shape(g, a.shape), -_sum_to_shape(g, b.shape)

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = Tensor(a.data * b.data)
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = _sum_to_shape(g * b_data, a.shape) if _tracked(a) else None
        gb = _sum_to_shape(g * a_data, b.shape) if _tracked(b) else None
        return ga, gb

    return _record(out, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = gb = None
        if _tracked(a):
            ga = _sum_to_shape(g @ b_data.swapaxes(-1, -2), a.shape)
        if _tracked(b):
            gb = _sum_to_shape(a_data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _record(out, (a, b), bwd)


# -- shape ops ---------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    x = _coerce(x)
    shape = tuple(shape)
    out = Tensor(x.data.reshape(shape).copy())
    orig = x.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _record(out, (x,), bwd)


def permute(x: Tensor, axes) -> Tensor:
    x = _coerce(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ValueError(f"permute axes {axes} invalid for shape {x.shape}")
    out = Tensor(np.ascontiguousarray(np.transpose(x.data, axes)))
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (np.ascontiguousarray(np.transpose(g, inv)),)

    return _record(out, (x,), bwd)


def concat(tensors, axis: int) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=axis))

    return _record(out, tuple(tensors), bwd)


def broadcast_to(x: Tensor, shape) -> Tensor:
    x = _coerce(x)
    shape = tuple(shape)
    out = Tensor(np.broadcast_to(x.data, shape).copy())

    def bwd(g):
        return (_sum_to_shape(g, x.shape),)

    return _record(out, (x,), bwd)


# -- reductions ---------------------------------------------------------------


def _expand_reduced(g, orig_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, orig_shape).copy()
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(orig_shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, orig_shape).copy()


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))
    orig = x.shape

    def bwd(g):
        return (_expand_reduced(g, orig, axis, keepdims),)

    return _record(out, (x,), bwd)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _coerce(x)
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    orig = x.shape
    count = x.data.size if axis is None else np.prod(
        [orig[a % len(orig)] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def bwd(g):
        return (_expand_reduced(g, orig, axis, keepdims) / count,)

    return _record(out, (x,), bwd)


# -- nonlinearities ------------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    x = _coerce(x)
    phi_cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = Tensor(x.data * phi_cdf)
    x_data = x.data

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x_data * x_data)
        return (g * (phi_cdf + x_data * pdf),)

    return _record(out, (x,), bwd)


def softplus(x: Tensor) -> Tensor:
    x = _coerce(x)
    out = Tensor(np.logaddexp(0.0, x.data))
    x_data = x.data

    def bwd(g):
        return (g * expit(x_data),)

    return _record(out, (x,), bwd)


def softmax_lastdim(x: Tensor) -> Tensor:
    x = _coerce(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last dimension, then apply the affine pair."""
    x, gamma, beta = _coerce(x), _coerce(gamma), _coerce(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match feature dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)
    gamma_data = gamma.data

    def bwd(g):
        gx = ggamma = gbeta = None
        if _tracked(gamma):
            axes = tuple(range(g.ndim - 1))
            ggamma = (g * xhat).sum(axis=axes)
        if _tracked(beta):
            axes = tuple(range(g.ndim - 1))
            gbeta = g.sum(axis=axes)
        if _tracked(x):
            gy = g * gamma_data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * xhat).mean(axis=-1, keepdims=True)
            gx = inv * (gy - m1 - xhat * m2)
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), bwd)


def droppath(x: Tensor, rate: float, training: bool, rng=None) -> Tensor:
    """Stochastic depth over the leading (batch) axis; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"droppath rate must be in [0, 1), got {rate}")
    x = _coerce(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("droppath in training mode needs an rng")
    keep = (rng.random(x.shape[0]) >= rate).astype(np.float64) / (1.0 - rate)
    keep = keep.reshape((x.shape[0],) + (1,) * (x.ndim - 1))
    out = Tensor(x.data * keep)

    def bwd(g):
        return (g * keep,)

    return _record(out, (x,), bwd)


# -- gather / scatter -----------------------------------------------------------


def gather_tokens(x: Tensor, indices) -> Tensor:
    """Select ``out[b, i, :] = x[b, indices[b, i], :]`` along the token axis.

    ``indices`` is an integer array of shape (B, L'); duplicates are allowed
    and the gradient scatter-adds back into the source positions.
    """
    x = _coerce(x)
    idx = np.asarray(indices.data if isinstance(indices, Tensor) else indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError(f"gather_tokens indices must be integers, got {idx.dtype}")
    if x.ndim != 3 or idx.ndim != 2 or idx.shape[0] != x.shape[0]:
        raise ValueError(f"gather_tokens shapes disagree: x {x.shape}, indices {idx.shape}")
    b, length, _ = x.shape
    if idx.size and (idx.min() < 0 or idx.max() >= length):
        raise IndexError(
            f"gather_tokens index out of range [0, {length}): min {idx.min()}, max {idx.max()}"
        )
    rows = np.arange(b)[:, None]
    out = Tensor(x.data[rows, idx])
    orig = x.shape

    def bwd(g):
        gx = np.zeros(orig)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return _record(out, (x,), bwd)
