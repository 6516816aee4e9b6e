"""Dual-branch masked autoencoder for antenna-domain channel extrapolation.

One subcarrier slice of the channel (2 x n_rx x n_tx real planes) is cut into
non-overlapping patches over the antenna grid, linearly embedded, position
encoded, masked, and passed through a transformer encoder. A second branch
does the same to the per-pair multipath feature map under the identical mask
plan. Cross-attention fuses the two token streams (multipath tokens querying
channel tokens by default), a light decoder rebuilds all patches, and the
loss is mean squared error over the hidden patches only.

Encoder blocks are pre-norm with stochastic depth on the residual branches;
decoder blocks normalize after each residual add and use no stochastic depth.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .masking import MaskPlan, apply_mask, restore_sequence

FUSION_MODES = ("mp_query", "csi_query", "concat", "none")


@dataclass(frozen=True)
class ExtrapolatorConfig:
    n_rx: int = 8
    n_tx: int = 16
    patch_size: int = 2
    csi_channels: int = 2
    mp_channels: int = 2
    embed_dim: int = 128
    n_heads: int = 4
    encoder_depth: int = 4
    decoder_depth: int = 2
    decoder_dim: int = 64
    ffn_ratio: int = 4
    droppath_rate: float = 0.1
    ln_eps: float = 1e-6
    fusion: str = "mp_query"

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.n_rx % self.patch_size or self.n_tx % self.patch_size:
            raise ValueError(
                f"grid {self.n_rx} x {self.n_tx} not divisible by patch size {self.patch_size}"
            )
        for name, dim in (("embed_dim", self.embed_dim), ("decoder_dim", self.decoder_dim)):
            if dim % 4:
                raise ValueError(f"{name} must be divisible by 4 for the 2-d encoding, got {dim}")
            if dim % self.n_heads:
                raise ValueError(f"{name}={dim} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.droppath_rate < 1.0:
            raise ValueError(f"droppath_rate must be in [0, 1), got {self.droppath_rate}")
        if min(self.encoder_depth, self.decoder_depth, self.ffn_ratio) < 1:
            raise ValueError("depths and ffn_ratio must be >= 1")

    @property
    def grid_rows(self) -> int:
        return self.n_rx // self.patch_size

    @property
    def grid_cols(self) -> int:
        return self.n_tx // self.patch_size

    @property
    def n_tokens(self) -> int:
        return self.grid_rows * self.grid_cols


def positional_encoding_2d(rows: int, cols: int, dim: int) -> np.ndarray:
    """Stationary 2-d sine/cosine table, (rows*cols, dim), row-major.

    The first half of each vector encodes the row index, the second half the
    column index; within each half sin/cos pairs interleave over dim/4
    geometric frequencies 10000^(2k/dim). Position (0, 0) therefore encodes
    as [0, 1, 0, 1, ...].
    """
    if dim % 4:
        raise ValueError(f"encoding dim must be divisible by 4, got {dim}")
    quarter = dim // 4
    omega = 10000.0 ** (2.0 * np.arange(quarter) / dim)

    def axis_table(n):
        arg = np.arange(n)[:, None] / omega[None, :]       # (n, quarter)
        half = np.empty((n, 2 * quarter))
        half[:, 0::2] = np.sin(arg)
        half[:, 1::2] = np.cos(arg)
        return half

    row_half = axis_table(rows)
    col_half = axis_table(cols)
    table = np.empty((rows, cols, dim))
    table[:, :, : dim // 2] = row_half[:, None, :]
    table[:, :, dim // 2:] = col_half[None, :, :]
    return table.reshape(rows * cols, dim)


def patchify(x: T.Tensor, patch_size: int) -> T.Tensor:
    """(B, C, M, K) -> (B, L, p*p*C) row-major over the patch grid."""
    b, c, m, k = x.shape
    p = patch_size
    if m % p or k % p:
        raise ValueError(f"grid {m} x {k} not divisible by patch size {p}")
    x = T.reshape(x, (b, c, m // p, p, k // p, p))
    x = T.permute(x, (0, 2, 4, 3, 5, 1))  # (B, M', K', p, p, C)
    return T.reshape(x, (b, (m // p) * (k // p), p * p * c))


def unpatchify(tokens: T.Tensor, patch_size: int, channels: int, n_rx: int, n_tx: int) -> T.Tensor:
    b, n, d = tokens.shape
    p = patch_size
    if n != (n_rx // p) * (n_tx // p) or d != p * p * channels:
        raise ValueError(f"token shape {tokens.shape} does not tile a "
                         f"{channels} x {n_rx} x {n_tx} grid with patch {p}")
    x = T.reshape(tokens, (b, n_rx // p, n_tx // p, p, p, channels))
    x = T.permute(x, (0, 5, 1, 3, 2, 4))
    return T.reshape(x, (b, channels, n_rx, n_tx))


def _xavier(rng, fan_in, fan_out):
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


class _ParamFactory:
    """Tracks (name, tensor) pairs as modules allocate their weights."""

    def __init__(self, rng):
        self.rng = rng
        self.entries: list[tuple[str, T.Tensor]] = []

    def weight(self, name, fan_in, fan_out):
        t = T.Tensor(_xavier(self.rng, fan_in, fan_out), requires_grad=True)
        self.entries.append((name, t))
        return t

    def bias(self, name, dim):
        t = T.Tensor(np.zeros(dim), requires_grad=True)
        self.entries.append((name, t))
        return t

    def ones(self, name, dim):
        t = T.Tensor(np.ones(dim), requires_grad=True)
        self.entries.append((name, t))
        return t

    def small(self, name, dim):
        t = T.Tensor(self.rng.normal(0.0, 0.02, size=dim), requires_grad=True)
        self.entries.append((name, t))
        return t


def _heads_split(x: T.Tensor, n_heads: int) -> T.Tensor:
    b, n, d = x.shape
    x = T.reshape(x, (b, n, n_heads, d // n_heads))
    return T.permute(x, (0, 2, 1, 3))


def _heads_merge(x: T.Tensor) -> T.Tensor:
    b, h, n, dh = x.shape
    return T.reshape(T.permute(x, (0, 2, 1, 3)), (b, n, h * dh))


def _attention(q_src: T.Tensor, kv_src: T.Tensor, wq, wk, wv, wo, n_heads: int) -> T.Tensor:
    """Scaled dot-product attention; self-attention when q_src is kv_src."""
    d = wq.shape[1]
    q = _heads_split(q_src @ wq, n_heads)
    k = _heads_split(kv_src @ wk, n_heads)
    v = _heads_split(kv_src @ wv, n_heads)
    scores = (q @ T.permute(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d / n_heads))
    att = T.softmax_lastdim(scores)
    return _heads_merge(att @ v) @ wo


class _Block:
    """Transformer block; ``prenorm`` picks encoder or decoder wiring."""

    def __init__(self, fac: _ParamFactory, name: str, dim: int, n_heads: int,
                 ffn_ratio: int, ln_eps: float, prenorm: bool):
        self.n_heads = n_heads
        self.ln_eps = ln_eps
        self.prenorm = prenorm
        self.ln1_g = fac.ones(f"{name}.ln1.g", dim)
        self.ln1_b = fac.bias(f"{name}.ln1.b", dim)
        self.wq = fac.weight(f"{name}.wq", dim, dim)
        self.wk = fac.weight(f"{name}.wk", dim, dim)
        self.wv = fac.weight(f"{name}.wv", dim, dim)
        self.wo = fac.weight(f"{name}.wo", dim, dim)
        self.ln2_g = fac.ones(f"{name}.ln2.g", dim)
        self.ln2_b = fac.bias(f"{name}.ln2.b", dim)
        hidden = ffn_ratio * dim
        self.w1 = fac.weight(f"{name}.ffn.w1", dim, hidden)
        self.b1 = fac.bias(f"{name}.ffn.b1", hidden)
        self.w2 = fac.weight(f"{name}.ffn.w2", hidden, dim)
        self.b2 = fac.bias(f"{name}.ffn.b2", dim)

    def _msa(self, x):
        return _attention(x, x, self.wq, self.wk, self.wv, self.wo, self.n_heads)

    def _ffn(self, x):
        return T.gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2

    def forward(self, x: T.Tensor, training: bool, droppath_rate: float, rng) -> T.Tensor:
        if self.prenorm:
            h = T.layer_norm(x, self.ln1_g, self.ln1_b, self.ln_eps)
            x = x + T.droppath(self._msa(h), droppath_rate, training, rng)
            h = T.layer_norm(x, self.ln2_g, self.ln2_b, self.ln_eps)
            return x + T.droppath(self._ffn(h), droppath_rate, training, rng)
        y = T.layer_norm(x + self._msa(x), self.ln1_g, self.ln1_b, self.ln_eps)
        return T.layer_norm(y + self._ffn(y), self.ln2_g, self.ln2_b, self.ln_eps)


class ChannelExtrapolator:
    def __init__(self, cfg: ExtrapolatorConfig, rng: np.random.Generator):
        self.cfg = cfg
        fac = _ParamFactory(rng)
        p, d = cfg.patch_size, cfg.embed_dim

        self.csi_embed_w = fac.weight("csi_embed.w", p * p * cfg.csi_channels, d)
        self.csi_embed_b = fac.bias("csi_embed.b", d)
        self.enc_csi = [_Block(fac, f"enc_csi.{i}", d, cfg.n_heads, cfg.ffn_ratio,
                               cfg.ln_eps, prenorm=True) for i in range(cfg.encoder_depth)]

        self.has_mp = cfg.fusion != "none"
        if self.has_mp:
            self.mp_embed_w = fac.weight("mp_embed.w", p * p * cfg.mp_channels, d)
            self.mp_embed_b = fac.bias("mp_embed.b", d)
            self.enc_mp = [_Block(fac, f"enc_mp.{i}", d, cfg.n_heads, cfg.ffn_ratio,
                                  cfg.ln_eps, prenorm=True) for i in range(cfg.encoder_depth)]
            if cfg.fusion == "concat":
                self.fuse_w = fac.weight("fusion.w", 2 * d, d)
            else:
                self.fuse_wq = fac.weight("fusion.wq", d, d)
                self.fuse_wk = fac.weight("fusion.wk", d, d)
                self.fuse_wv = fac.weight("fusion.wv", d, d)
                self.fuse_wo = fac.weight("fusion.wo", d, d)

        dd = cfg.decoder_dim
        self.dec_embed_w = fac.weight("dec_embed.w", d, dd)
        self.mask_token = fac.small("mask_token", dd)
        self.dec_blocks = [_Block(fac, f"dec.{i}", dd, cfg.n_heads, cfg.ffn_ratio,
                                  cfg.ln_eps, prenorm=False) for i in range(cfg.decoder_depth)]
        self.final_ln_g = fac.ones("final_ln.g", dd)
        self.final_ln_b = fac.bias("final_ln.b", dd)
        self.out_w = fac.weight("out.w", dd, p * p * cfg.csi_channels)

        # both branches share one table; the decoder gets its own width
        self.e_pos = T.Tensor(positional_encoding_2d(cfg.grid_rows, cfg.grid_cols, d))
        self.e_pos_dec = T.Tensor(positional_encoding_2d(cfg.grid_rows, cfg.grid_cols, dd))
        self._params = fac.entries

    def parameters(self) -> list[tuple[str, T.Tensor]]:
        return list(self._params)

    # -- forward pieces ------------------------------------------------

    def _embed_visible(self, x: T.Tensor, w, b, plan: MaskPlan) -> T.Tensor:
        tokens = patchify(x, self.cfg.patch_size) @ w + b
        tokens = tokens + self.e_pos
        return apply_mask(tokens, plan)

    def _run_blocks(self, x, blocks, training, rng):
        for blk in blocks:
            x = blk.forward(x, training, self.cfg.droppath_rate, rng)
        return x

    def _fuse(self, z_csi: T.Tensor, z_mp: T.Tensor) -> T.Tensor:
        mode = self.cfg.fusion
        if mode == "concat":
            return T.concat([z_csi, z_mp], axis=2) @ self.fuse_w
        q_src, kv_src = (z_mp, z_csi) if mode == "mp_query" else (z_csi, z_mp)
        return _attention(q_src, kv_src, self.fuse_wq, self.fuse_wk, self.fuse_wv,
                          self.fuse_wo, self.cfg.n_heads)

    def forward(self, x_csi: T.Tensor, x_mp, plan: MaskPlan,
                training: bool = False, rng=None) -> T.Tensor:
        """Normalized channel planes (+ feature planes) -> reconstructed planes.

        x_mp may be None when the model was built with fusion="none".
        """
        cfg = self.cfg
        if x_csi.shape[1:] != (cfg.csi_channels, cfg.n_rx, cfg.n_tx):
            raise ValueError(f"channel input {x_csi.shape} does not match config grid")
        if training and cfg.droppath_rate > 0 and rng is None:
            raise ValueError("training forward needs an rng for stochastic depth")

        vis_csi = self._embed_visible(x_csi, self.csi_embed_w, self.csi_embed_b, plan)
        z = self._run_blocks(vis_csi, self.enc_csi, training, rng)

        if self.has_mp:
            if x_mp is None:
                raise ValueError("this model fuses multipath features; x_mp is required")
            if x_mp.shape[1:] != (cfg.mp_channels, cfg.n_rx, cfg.n_tx):
                raise ValueError(f"feature input {x_mp.shape} does not match config grid")
            vis_mp = self._embed_visible(x_mp, self.mp_embed_w, self.mp_embed_b, plan)
            z_mp = self._run_blocks(vis_mp, self.enc_mp, training, rng)
            fused = self._fuse(z, z_mp)
        else:
            fused = z

        y = (fused + vis_csi) @ self.dec_embed_w
        y = restore_sequence(y, self.mask_token, plan)
        y = y + self.e_pos_dec
        for blk in self.dec_blocks:
            y = blk.forward(y, training, 0.0, rng)
        y = T.layer_norm(y, self.final_ln_g, self.final_ln_b, cfg.ln_eps)
        tokens = y @ self.out_w
        return unpatchify(tokens, cfg.patch_size, cfg.csi_channels, cfg.n_rx, cfg.n_tx)


def masked_mse(h_hat: T.Tensor, h_true, plan: MaskPlan, patch_size: int) -> T.Tensor:
    """Mean squared patch error over hidden patches only.

    Each hidden patch contributes its summed squared error; the total is
    divided by the number of hidden patches across the batch. A plan with
    nothing masked yields 0 with a warning.
    """
    if plan.n_masked == 0:
        warnings.warn("masked_mse over an empty mask set; returning 0", RuntimeWarning)
        return T.Tensor(0.0)
    if not isinstance(h_true, T.Tensor):
        h_true = T.Tensor(h_true)
    diff = patchify(h_hat, patch_size) - patchify(h_true, patch_size)
    per_token = (diff * diff).sum(axis=2)
    total = (per_token * T.Tensor(plan.binary_mask)).sum()
    return total / float(plan.binary_mask.sum())


def token_mask_to_cells(plan: MaskPlan, cfg: ExtrapolatorConfig) -> np.ndarray:
    """Expand the (B, L) token mask to antenna cells, (B, n_rx, n_tx)."""
    p = cfg.patch_size
    grid = plan.binary_mask.reshape(plan.batch, cfg.grid_rows, cfg.grid_cols)
    return np.kron(grid, np.ones((p, p)))


def extrapolate(model: ChannelExtrapolator, csi_planes: np.ndarray, mp_feats,
                plan: MaskPlan, csi_stats, mp_stats, paste_back: bool = True) -> np.ndarray:
    """Inference wrapper: raw planes in, raw planes out.

    Hidden grid positions of the inputs never reach the network (their tokens
    are dropped by the mask gather), so callers may leave anything there.
    With ``paste_back`` the known patches are overwritten by their inputs.
    """
    from .features import apply_zscore, invert_zscore

    x = apply_zscore(csi_planes, csi_stats)
    xm = None
    if model.has_mp:
        xm = T.Tensor(apply_zscore(mp_feats, mp_stats))
    with T.no_grad():
        out = model.forward(T.Tensor(x), xm, plan, training=False)
    h = invert_zscore(out.data, csi_stats)
    if paste_back:
        cells = token_mask_to_cells(plan, model.cfg)[:, None, :, :]  # 1 = hidden
        h = np.where(cells == 0, csi_planes, h)
    return h
