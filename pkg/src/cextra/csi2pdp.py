"""Autoencoder tying power-delay profiles to per-pair channel vectors.

The encoder maps a log-compressed profile to a latent that is trained to sit
on the pair's frequency-domain channel (real/imag concatenated); the decoder
maps that latent back to the compressed profile through a softplus head, so
decoded powers are never negative. After training, running the decoder alone
on a measured channel vector yields that pair's delay profile estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class C2PConfig:
    n_bins: int
    csi_dim: int            # 2 * n_subcarriers
    hidden: int = 512
    power_ref: float = 1e-3  # reference power of the log compression
    bin_width: float = 6.25e-9

    def __post_init__(self):
        if min(self.n_bins, self.csi_dim, self.hidden) < 1:
            raise ValueError(f"bad dimensions in {self}")
        if self.power_ref <= 0 or self.bin_width <= 0:
            raise ValueError("power_ref and bin_width must be positive")


def compress_power(p: np.ndarray, ref: float) -> np.ndarray:
    """log(1 + p/ref); keeps zero at zero and tames the dynamic range."""
    return np.log1p(np.asarray(p, dtype=np.float64) / ref)


def expand_power(y: np.ndarray, ref: float) -> np.ndarray:
    return ref * np.expm1(np.asarray(y, dtype=np.float64))


def csi_to_vec(h: np.ndarray) -> np.ndarray:
    """Complex per-pair channel (..., S) -> real vector (..., 2S), real then imag."""
    h = np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1).astype(np.float64)


def vec_to_csi(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    s = v.shape[-1] // 2
    return v[..., :s] + 1j * v[..., s:]


def joint_loss(p_hat: T.Tensor, p_true: T.Tensor, latent: T.Tensor, x_true: T.Tensor) -> T.Tensor:
    """Batch mean of squared profile error plus squared latent-channel error."""
    dp = p_hat - p_true
    dz = latent - x_true
    per_sample = (dp * dp).sum(axis=1) + (dz * dz).sum(axis=1)
    return per_sample.mean()


def _xavier(rng, fan_in, fan_out):
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


class PdpChannelCoder:
    """Three-layer MLP encoder/decoder pair (GELU hidden, softplus output head)."""

    def __init__(self, cfg: C2PConfig, rng: np.random.Generator):
        self.cfg = cfg
        dims_enc = (cfg.n_bins, cfg.hidden, cfg.hidden, cfg.csi_dim)
        dims_dec = (cfg.csi_dim, cfg.hidden, cfg.hidden, cfg.n_bins)
        self._params: list[tuple[str, T.Tensor]] = []

        def layer(prefix, i, fan_in, fan_out):
            w = T.Tensor(_xavier(rng, fan_in, fan_out), requires_grad=True)
            b = T.Tensor(np.zeros(fan_out), requires_grad=True)
            self._params += [(f"{prefix}{i}.w", w), (f"{prefix}{i}.b", b)]
            return w, b

        self.enc = [layer("enc", i, dims_enc[i], dims_enc[i + 1]) for i in range(3)]
        self.dec = [layer("dec", i, dims_dec[i], dims_dec[i + 1]) for i in range(3)]

    def parameters(self) -> list[tuple[str, T.Tensor]]:
        return list(self._params)

    def encode(self, p_compressed: T.Tensor) -> T.Tensor:
        h = p_compressed
        for i, (w, b) in enumerate(self.enc):
            h = h @ w + b
            if i < 2:
                h = T.gelu(h)
        return h

    def decode(self, latent: T.Tensor) -> T.Tensor:
        h = latent
        for i, (w, b) in enumerate(self.dec):
            h = h @ w + b
            h = T.gelu(h) if i < 2 else T.softplus(h)
        return h

    def loss(self, pdp_batch: np.ndarray, csi_batch: np.ndarray) -> T.Tensor:
        """Joint training objective on raw (linear-power) profiles."""
        pdp_batch = np.asarray(pdp_batch, dtype=np.float64)
        csi_batch = np.asarray(csi_batch, dtype=np.float64)
        if pdp_batch.shape[1] != self.cfg.n_bins or csi_batch.shape[1] != self.cfg.csi_dim:
            raise ValueError(
                f"batch dims {pdp_batch.shape} / {csi_batch.shape} do not match "
                f"config ({self.cfg.n_bins} bins, {self.cfg.csi_dim} channel dims)"
            )
        p_true = T.Tensor(compress_power(pdp_batch, self.cfg.power_ref))
        x_true = T.Tensor(csi_batch)
        latent = self.encode(p_true)
        p_hat = self.decode(latent)
        return joint_loss(p_hat, p_true, latent, x_true)

    def infer_pdp(self, csi_vecs: np.ndarray) -> np.ndarray:
        """Decoder-only inference: channel vectors (..., 2S) -> linear powers.

        Values close to the measured channel are expected; the latent-channel
        training term is what makes feeding real measurements meaningful.
        """
        v = np.asarray(csi_vecs, dtype=np.float64)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[None]
        if v.shape[-1] != self.cfg.csi_dim:
            raise ValueError(f"channel vector dim {v.shape[-1]} != {self.cfg.csi_dim}")
        with T.no_grad():
            y = self.decode(T.Tensor(v.reshape(-1, self.cfg.csi_dim)))
        p = expand_power(y.data, self.cfg.power_ref)
        if not np.all(np.isfinite(p)):
            warnings.warn("non-finite decoded profile values", RuntimeWarning)
        p = p.reshape(v.shape[:-1] + (self.cfg.n_bins,))
        return p[0] if squeeze else p

    def reconstruct(self, pdp_batch: np.ndarray) -> np.ndarray:
        """Full encode->decode pass, returning linear powers."""
        p = compress_power(np.asarray(pdp_batch, dtype=np.float64), self.cfg.power_ref)
        with T.no_grad():
            y = self.decode(self.encode(T.Tensor(p)))
        return expand_power(y.data, self.cfg.power_ref)

    def encode_profiles(self, pdp_batch: np.ndarray) -> np.ndarray:
        """Latent (trained channel estimate) for raw profiles."""
        p = compress_power(np.asarray(pdp_batch, dtype=np.float64), self.cfg.power_ref)
        with T.no_grad():
            z = self.encode(T.Tensor(p))
        return z.data
