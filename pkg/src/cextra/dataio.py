"""Binary dataset container and the scene-generation driver.

File layout: 4-byte magic, uint32 version, uint32 header length, then a
sorted-key JSON header, then the arrays named in the header concatenated as
little-endian float64 in C order. The header carries a CRC-32 of the payload
so truncation or bit rot is caught on load, and shapes are declared up front
so a size mismatch is an error rather than a silent misread. Serialization
is canonical (sorted keys, fixed separators), which makes write -> read ->
write byte-identical.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import (RouteConfig, ScenarioConfig, per_pair_pdps, route_paths_at,
                      sample_paths, sample_route, scenario_preset, synthesize_csi)

MAGIC = b"CEDS"
VERSION = 1


@dataclass
class Dataset:
    """In-memory form: complex CSI per scene plus per-pair delay histograms."""

    csi: np.ndarray              # complex128 (n, n_rx, n_tx, n_subcarriers)
    pdps: Optional[np.ndarray]   # float64 (n, n_rx, n_tx, n_bins) or None
    bin_width: float
    carrier_hz: float
    subcarrier_spacing: float
    scenario: str
    seed: int

    def __post_init__(self):
        self.csi = np.asarray(self.csi, dtype=np.complex128)
        if self.csi.ndim != 4:
            raise ValueError(f"CSI must be (n, rx, tx, subcarrier), got {self.csi.shape}")
        if self.pdps is not None:
            self.pdps = np.asarray(self.pdps, dtype=np.float64)
            if self.pdps.shape[:3] != self.csi.shape[:3]:
                raise ValueError(f"PDP grid {self.pdps.shape} does not match "
                                 f"CSI grid {self.csi.shape}")

    @property
    def n_samples(self) -> int:
        return self.csi.shape[0]

    def pair_view(self):
        """Flatten scenes to per-antenna-pair rows: (pdps, csi_vecs).

        Rows are (n * rx * tx, n_bins) and (n * rx * tx, 2 * n_subcarriers),
        channel vectors laid out real-then-imaginary.
        """
        if self.pdps is None:
            raise ValueError("dataset was written without delay profiles")
        n_bins = self.pdps.shape[-1]
        s = self.csi.shape[-1]
        flat_csi = self.csi.reshape(-1, s)
        vecs = np.concatenate([flat_csi.real, flat_csi.imag], axis=1)
        return self.pdps.reshape(-1, n_bins), vecs

    def subcarrier_planes(self, index: int) -> np.ndarray:
        """Real/imag planes of one subcarrier slice, (n, 2, rx, tx)."""
        h = self.csi[..., index]
        return np.stack([h.real, h.imag], axis=1)


def generate_dataset(scenario, n_samples: int, seed: int,
                     include_pdp: bool = True,
                     route: Optional[RouteConfig] = None) -> Dataset:
    """Draw n_samples scenes from a preset name or config.

    Without `route`, scenes are independent draws. With a RouteConfig, one
    environment is drawn and sample i sits at route position u = i/n: a
    dense sweep of user locations whose geometry varies smoothly while path
    phases stay independent.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    name = scenario if isinstance(scenario, str) else "custom"
    cfg: ScenarioConfig = scenario_preset(scenario) if isinstance(scenario, str) else scenario
    rng = np.random.default_rng(seed)
    env = sample_route(cfg, route, rng) if route is not None else None

    g, c = cfg.geometry, cfg.carrier
    csi = np.empty((n_samples, g.n_rx, g.n_tx, c.n_subcarriers), dtype=np.complex128)
    pdps = np.empty((n_samples, g.n_rx, g.n_tx, cfg.binning.n_bins)) if include_pdp else None
    for i in range(n_samples):
        ps = (route_paths_at(env, i / n_samples, rng) if env is not None
              else sample_paths(cfg, rng))
        csi[i] = synthesize_csi(ps, g, c).values
        if include_pdp:
            pdps[i] = per_pair_pdps(ps, cfg.binning)
    return Dataset(csi=csi, pdps=pdps, bin_width=cfg.binning.bin_width,
                   carrier_hz=c.center_frequency,
                   subcarrier_spacing=c.subcarrier_spacing,
                   scenario=name, seed=seed)


def _payload_arrays(ds: Dataset) -> dict[str, np.ndarray]:
    arrays = {"csi_planes": np.stack([ds.csi.real, ds.csi.imag], axis=1)}
    if ds.pdps is not None:
        arrays["pdp"] = ds.pdps
    return arrays


def save_dataset(ds: Dataset, path) -> None:
    arrays = _payload_arrays(ds)
    payload = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes()
                       for k in sorted(arrays))
    header = {
        "arrays": {k: list(v.shape) for k, v in arrays.items()},
        "bin_width": ds.bin_width,
        "carrier_hz": ds.carrier_hz,
        "n_samples": ds.n_samples,
        "payload_crc32": zlib.crc32(payload),
        "scenario": ds.scenario,
        "seed": ds.seed,
        "subcarrier_spacing": ds.subcarrier_spacing,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([VERSION, len(blob)], dtype="<u4").tobytes())
        f.write(blob)
        f.write(payload)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a dataset file (bad magic {raw[:4]!r})")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    hlen = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    header = json.loads(raw[12:12 + hlen].decode())
    payload = raw[12 + hlen:]

    if zlib.crc32(payload) != header["payload_crc32"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    shapes = {k: tuple(v) for k, v in header["arrays"].items()}
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, "
                         f"header declares {expected}")

    arrays = {}
    offset = 0
    for k in sorted(shapes):
        count = int(np.prod(shapes[k]))
        arrays[k] = np.frombuffer(payload, dtype="<f8", count=count,
                                  offset=offset).reshape(shapes[k]).astype(np.float64)
        offset += count * 8
    planes = arrays["csi_planes"]
    return Dataset(csi=planes[:, 0] + 1j * planes[:, 1],
                   pdps=arrays.get("pdp"),
                   bin_width=header["bin_width"],
                   carrier_hz=header["carrier_hz"],
                   subcarrier_spacing=header["subcarrier_spacing"],
                   scenario=header["scenario"],
                   seed=header["seed"])
