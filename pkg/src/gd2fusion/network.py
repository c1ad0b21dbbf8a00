"""Full fusion network, grid padding, and the binary parameter file."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ._validation import (
    CheckpointFormatError,
    DimensionError,
    IncompatibleCheckpointError,
    check_prompt_rows,
)
from .gfmse import GFMSELayer
from .gsmaf import GSMAFLayer
from .prompts import DEFAULT_PROMPT_DIM
from .wavelet import dwt2, iwt2

FORMAT_MAGIC = b"GD2FPARM"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    channels: int = 16
    layers: int = 3
    n_conv: int = 3
    n_transformer: int = 2
    kernels: tuple[int, ...] = (3, 5, 7)
    prompt_dim: int = DEFAULT_PROMPT_DIM
    window: int = 8
    heads: int = 4
    groups: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.channels % self.heads:
            raise ValueError(f"channels ({self.channels}) must be divisible by heads ({self.heads})")
        if self.channels % self.groups:
            raise ValueError(f"channels ({self.channels}) must be divisible by groups ({self.groups})")
        if not self.kernels or any(k % 2 == 0 or k < 1 for k in self.kernels):
            raise ValueError(f"kernel sizes must be positive odd integers, got {self.kernels}")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def grid(self) -> int:
        """Spatial multiple required by the forward pass (wavelet halving times window)."""
        return 2 * self.window

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernels"] = list(self.kernels)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


class GD2FusionNet(nn.Module):
    """Two wavelet-domain modality pathways plus a spatial fusion pathway.

    Each modality: shallow 3x3 conv, Haar split, ``layers`` GFMSE layers with
    an inverse transform after each one. The fusion pathway starts from the
    concatenated shallow features and, from the second layer on, also takes
    the previous layer's local/global outputs and both modality features.
    """

    def __init__(self, config: NetworkConfig | None = None):
        super().__init__()
        self.config = cfg = config or NetworkConfig()
        c = cfg.channels
        self.sfe_ir = nn.Conv2d(3, c, 3, padding=1)
        self.sfe_vi = nn.Conv2d(3, c, 3, padding=1)

        def gfmse():
            return GFMSELayer(c, cfg.prompt_dim, cfg.n_conv, cfg.n_transformer, cfg.heads, cfg.window)

        self.ir_layers = nn.ModuleList(gfmse() for _ in range(cfg.layers))
        self.vi_layers = nn.ModuleList(gfmse() for _ in range(cfg.layers))
        self.fusion_layers = nn.ModuleList(
            GSMAFLayer(
                2 * c if i == 0 else 4 * c,
                c,
                cfg.prompt_dim,
                cfg.n_conv,
                cfg.n_transformer,
                cfg.kernels,
                cfg.heads,
                cfg.window,
                cfg.groups,
            )
            for i in range(cfg.layers)
        )
        # final conv is linear; outputs are clipped only on export
        self.reconstruct = nn.Sequential(
            nn.Conv2d(4 * c, c, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(c, c, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(c, 3, 3, padding=1),
        )

    def modality_features(self, image: torch.Tensor, prompt: torch.Tensor, modality: str) -> list[torch.Tensor]:
        """Spatial features after each GFMSE layer for one modality (index 0 = shallow)."""
        sfe, layers = (self.sfe_ir, self.ir_layers) if modality == "infrared" else (self.sfe_vi, self.vi_layers)
        feat = sfe(image)
        feats = [feat]
        bands = dwt2(feat)
        for layer in layers:
            bands = layer(bands, prompt)
            feats.append(iwt2(bands))
        return feats

    def forward(self, ir: torch.Tensor, vi: torch.Tensor, p_ir: torch.Tensor, p_vi: torch.Tensor) -> torch.Tensor:
        if ir.shape != vi.shape:
            raise DimensionError(f"infrared {tuple(ir.shape)} and visible {tuple(vi.shape)} inputs differ in shape")
        if ir.ndim != 4 or ir.shape[1] != 3:
            raise DimensionError(f"inputs must be (B, 3, H, W), got {tuple(ir.shape)}")
        b, _, h, w = ir.shape
        g = self.config.grid
        if h % g or w % g:
            raise DimensionError(f"input size {h}x{w} must be a multiple of {g}; pad with pad_to_grid first")
        check_prompt_rows(p_ir, b, self.config.prompt_dim, "infrared prompt")
        check_prompt_rows(p_vi, b, self.config.prompt_dim, "visible prompt")

        f_ir = self.modality_features(ir, p_ir, "infrared")
        f_vi = self.modality_features(vi, p_vi, "visible")
        local, glob = self.fusion_layers[0](torch.cat([f_ir[0], f_vi[0]], dim=1), p_ir, p_vi)
        for l, layer in enumerate(self.fusion_layers[1:], start=2):
            local, glob = layer(torch.cat([local, glob, f_ir[l - 1], f_vi[l - 1]], dim=1), p_ir, p_vi)
        return self.reconstruct(torch.cat([local, glob, f_ir[-1], f_vi[-1]], dim=1))


def pad_to_grid(image: torch.Tensor, multiple: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad right/bottom up to the next multiple; returns the padded image and the original (H, W)."""
    h, w = image.shape[-2:]
    target_h = -(-h // multiple) * multiple
    target_w = -(-w // multiple) * multiple
    out = image
    # torch reflect padding must be smaller than the dim, so large pads go in rounds
    while out.shape[-2] < target_h or out.shape[-1] < target_w:
        cur_h, cur_w = out.shape[-2:]
        ph = min(target_h - cur_h, max(cur_h - 1, 0))
        pw = min(target_w - cur_w, max(cur_w - 1, 0))
        if ph == 0 and pw == 0:
            out = F.pad(out, (0, target_w - cur_w, 0, target_h - cur_h), mode="replicate")
            break
        out = F.pad(out, (0, pw, 0, ph), mode="reflect")
    return out, (h, w)


def crop_to(image: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    h, w = size
    return image[..., :h, :w]


# --- parameter files -------------------------------------------------------


def write_param_file(path: str | Path, header: dict, sections: Mapping[str, torch.Tensor]) -> None:
    """Write float32 sections after a JSON header; all integers little-endian."""
    header = dict(header)
    header.setdefault("format", "gd2fusion-params")
    header["version"] = FORMAT_VERSION
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [FORMAT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes, struct.pack("<I", len(sections))]
    for name, tensor in sections.items():
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        nbytes = name.encode("utf-8")
        chunks.append(struct.pack("<HB", len(nbytes), arr.ndim))
        chunks.append(nbytes)
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"{self.path}: file truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_param_file(path: str | Path) -> tuple[dict, dict[str, torch.Tensor]]:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(len(FORMAT_MAGIC)) != FORMAT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a gd2fusion parameter file")
    version, hlen = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt header ({exc})") from None
    (count,) = r.unpack("<I")
    sections = {}
    for _ in range(count):
        nlen, ndim = r.unpack("<HB")
        name = r.take(nlen).decode("utf-8")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        sections[name] = torch.from_numpy(arr.astype(np.float32))
    if r.pos != len(r.data):
        raise CheckpointFormatError(f"{path}: {len(r.data) - r.pos} trailing bytes after last section")
    return header, sections


def save_params(net: GD2FusionNet, path: str | Path, metadata: dict | None = None) -> None:
    header = {"config": net.config.to_dict(), "metadata": metadata or {}}
    sections = {f"param/{k}": v.float() for k, v in net.state_dict().items()}
    write_param_file(path, header, sections)


def check_config(found: NetworkConfig, expected: NetworkConfig | None, path="") -> None:
    if expected is None or found == expected:
        return
    diffs = [
        f"{k}: expected {v!r}, found {found.to_dict()[k]!r}"
        for k, v in expected.to_dict().items()
        if found.to_dict()[k] != v
    ]
    raise IncompatibleCheckpointError(f"{path}: config mismatch ({'; '.join(diffs)})")


def network_from_sections(header: dict, sections: Mapping[str, torch.Tensor], expected=None, path="") -> GD2FusionNet:
    try:
        config = NetworkConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: header has no valid network config ({exc})") from None
    check_config(config, expected, path)
    net = GD2FusionNet(config)
    state = {k[len("param/"):]: v for k, v in sections.items() if k.startswith("param/")}
    expected_keys = set(net.state_dict())
    if set(state) != expected_keys:
        missing = sorted(expected_keys - set(state))[:3]
        extra = sorted(set(state) - expected_keys)[:3]
        raise IncompatibleCheckpointError(f"{path}: parameter names differ (missing {missing}, unexpected {extra})")
    for k, v in net.state_dict().items():
        if tuple(state[k].shape) != tuple(v.shape):
            raise IncompatibleCheckpointError(
                f"{path}: parameter {k} has shape {tuple(state[k].shape)}, expected {tuple(v.shape)}"
            )
    net.load_state_dict(state)
    return net


def load_params(path: str | Path, expected: NetworkConfig | None = None) -> GD2FusionNet:
    """Load a network; ``expected`` (if given) must match the stored config exactly."""
    header, sections = read_param_file(path)
    return network_from_sections(header, sections, expected, path)


def load_metadata(path: str | Path) -> dict:
    header, _ = read_param_file(path)
    return header.get("metadata", {})
