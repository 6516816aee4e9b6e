"""Versioned checkpoint files for both model kinds.

Same container discipline as the dataset format: magic, uint32 version,
sorted-key JSON header (model kind, config, normalization stats, named
tensor index), then the tensors concatenated as little-endian float64 in
header-index order. Loading rebuilds the model from its config and copies
weights in by name, so a round trip reproduces evaluation output bitwise.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import tensor as T
from .csi2pdp import C2PConfig, PdpChannelCoder
from .features import NormStats
from .model import ChannelExtrapolator, ExtrapolatorConfig

MAGIC = b"CEXK"
VERSION = 1


def _write(path, kind: str, meta: dict, tensors) -> None:
    names = sorted(name for name, _ in tensors)
    byname = dict(tensors)
    if len(byname) != len(tensors):
        raise ValueError("duplicate tensor names in checkpoint")
    payload = b"".join(np.ascontiguousarray(byname[n].data, dtype="<f8").tobytes()
                       for n in names)
    header = dict(meta)
    header["kind"] = kind
    header["tensors"] = {n: list(byname[n].data.shape) for n in names}
    header["payload_crc32"] = zlib.crc32(payload)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([VERSION, len(blob)], dtype="<u4").tobytes())
        f.write(blob)
        f.write(payload)


def _read(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic {raw[:4]!r})")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    header = json.loads(raw[12:12 + hlen].decode())
    payload = raw[12 + hlen:]
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise ValueError(f"{path}: payload checksum mismatch")

    arrays = {}
    offset = 0
    for name in sorted(header["tensors"]):
        shape = tuple(header["tensors"][name])
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset += count * 8
    if offset != len(payload):
        raise ValueError(f"{path}: payload is {len(payload)} bytes, "
                         f"header declares {offset}")
    return header, arrays


def _restore(model, arrays, path):
    params = model.parameters()
    have = {name for name, _ in params}
    if have != set(arrays):
        missing = sorted(have - set(arrays))
        extra = sorted(set(arrays) - have)
        raise ValueError(f"{path}: tensor names do not match the configured "
                         f"model (missing {missing}, unexpected {extra})")
    for name, t in params:
        if t.data.shape != arrays[name].shape:
            raise ValueError(f"{path}: {name} has shape {arrays[name].shape}, "
                             f"model expects {t.data.shape}")
        t.data = arrays[name]
    return model


def save_coder(path, coder: PdpChannelCoder) -> None:
    _write(path, "pdp_coder", {"config": asdict(coder.cfg)}, coder.parameters())


def load_coder(path) -> PdpChannelCoder:
    header, arrays = _read(path)
    if header["kind"] != "pdp_coder":
        raise ValueError(f"{path}: expected a profile-coder checkpoint, "
                         f"found kind {header['kind']!r}")
    coder = PdpChannelCoder(C2PConfig(**header["config"]), np.random.default_rng(0))
    return _restore(coder, arrays, path)


def save_extrapolator(path, model: ChannelExtrapolator, csi_stats: NormStats,
                      mp_stats: Optional[NormStats], feature_variant: str) -> None:
    meta = {
        "config": asdict(model.cfg),
        "feature_variant": feature_variant,
        "norm": {
            "csi": asdict(csi_stats),
            "mp": asdict(mp_stats) if mp_stats is not None else None,
        },
    }
    _write(path, "extrapolator", meta, model.parameters())


def load_extrapolator(path):
    """Returns (model, csi_stats, mp_stats or None, feature_variant)."""
    header, arrays = _read(path)
    if header["kind"] != "extrapolator":
        raise ValueError(f"{path}: expected an extrapolator checkpoint, "
                         f"found kind {header['kind']!r}")
    model = ChannelExtrapolator(ExtrapolatorConfig(**header["config"]),
                                np.random.default_rng(0))
    _restore(model, arrays, path)
    csi_stats = NormStats(**header["norm"]["csi"])
    mp = header["norm"]["mp"]
    mp_stats = NormStats(**mp) if mp is not None else None
    return model, csi_stats, mp_stats, header["feature_variant"]
