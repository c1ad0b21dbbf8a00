"""Synthetic degraded infrared/visible pairs with matching prompt specs.

Images are float32 numpy arrays shaped (3, H, W) in [0, 1]. Infrared images
are grayscale replicated over three channels; infrared degradations act on
the single plane so they stay grayscale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .prompts import PromptSpec, format_spec, parse_spec

DEFAULT_STRENGTHS = {
    "low_light": 0.3,
    "overexposure": 1.8,
    "low_contrast": 0.4,
    "noise": 0.08,
}
VISIBLE_KINDS = ("low_light", "overexposure")
INFRARED_KINDS = ("low_contrast", "noise")
LOW_LIGHT_GAMMA = 2.2
OVEREXPOSURE_OFFSET = 0.15


def degrade_low_light(image: np.ndarray, strength: float = 0.3) -> np.ndarray:
    if not 0 < strength <= 1:
        raise ValueError(f"low-light strength must be in (0, 1], got {strength}")
    return np.clip(strength * np.power(image, LOW_LIGHT_GAMMA), 0, 1).astype(np.float32)


def degrade_overexposure(image: np.ndarray, gain: float = 1.8, offset: float = OVEREXPOSURE_OFFSET) -> np.ndarray:
    if gain < 1:
        raise ValueError(f"overexposure gain must be >= 1, got {gain}")
    return np.clip(gain * image + offset, 0, 1).astype(np.float32)


def degrade_low_contrast(image: np.ndarray, factor: float = 0.4) -> np.ndarray:
    if not 0 < factor <= 1:
        raise ValueError(f"contrast factor must be in (0, 1], got {factor}")
    mean = image.mean(dtype=np.float64)
    return np.clip(mean + factor * (image - mean), 0, 1).astype(np.float32)


def gaussian_field(shape: Sequence[int], seed: int) -> np.ndarray:
    """Standard normals where element ``k`` depends only on ``(seed, k)``.

    Element ``k`` is a Box-Muller transform of raw Philox outputs ``2k`` and
    ``2k + 1`` from a generator keyed by ``seed``.
    """
    n = int(np.prod(shape))
    bitgen = np.random.Philox(key=int(seed) & (2**64 - 1))
    raw = bitgen.random_raw(2 * n).reshape(n, 2)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    z = np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])
    return z.reshape(shape)


def degrade_noise(image: np.ndarray, sigma: float = 0.08, seed: int = 0) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image.astype(np.float32, copy=True)
    return np.clip(image + sigma * gaussian_field(image.shape, seed), 0, 1).astype(np.float32)


def apply_degradation(image, kind: str, strengths: Mapping[str, float] = DEFAULT_STRENGTHS, seed: int = 0, grayscale=False):
    """Apply the named degradation; ``grayscale`` images are degraded on one plane and re-tiled."""
    src = image[:1] if grayscale else image
    if kind == "low_light":
        out = degrade_low_light(src, strengths["low_light"])
    elif kind == "overexposure":
        out = degrade_overexposure(src, strengths["overexposure"])
    elif kind == "low_contrast":
        out = degrade_low_contrast(src, strengths["low_contrast"])
    elif kind == "noise":
        out = degrade_noise(src, strengths["noise"], seed)
    elif kind == "none":
        out = src.astype(np.float32, copy=True)
    else:
        raise ValueError(f"unknown degradation {kind!r}")
    return np.repeat(out, image.shape[0], axis=0) if grayscale else out


@dataclass
class DegradedSample:
    ir_degraded: np.ndarray
    vi_degraded: np.ndarray
    ir_ref: np.ndarray
    vi_ref: np.ndarray
    prompt_ir: PromptSpec
    prompt_vi: PromptSpec
    seed: int
    strengths: dict = field(default_factory=lambda: dict(DEFAULT_STRENGTHS))

    def reapply(self) -> tuple[np.ndarray, np.ndarray]:
        """Re-run the degradations named by the prompts on the references, quantized to 8 bits."""
        ir = self.ir_ref
        for kind in self.prompt_ir.degradations:
            ir = apply_degradation(ir, kind, self.strengths, self.seed, grayscale=True)
        vi = self.vi_ref
        for kind in self.prompt_vi.degradations:
            vi = apply_degradation(vi, kind, self.strengths, self.seed)
        return _quantize(ir), _quantize(vi)

    def meta(self) -> dict:
        return {
            "prompt_ir": format_spec(self.prompt_ir),
            "prompt_vi": format_spec(self.prompt_vi),
            "seed": self.seed,
            "strengths": self.strengths,
        }


def _quantize(x: np.ndarray) -> np.ndarray:
    # same arithmetic as decoding an 8-bit PNG, so written datasets reload bit-exactly
    return np.round(np.clip(x, 0, 1) * 255).astype(np.float32) / np.float32(255)


def procedural_scene(rng: np.random.Generator, size: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """Random visible scene plus an infrared map of the same geometry.

    Shapes are bright in infrared over a dark background. One shape is
    camouflaged in the visible image so infrared carries information the
    visible image lacks.
    """
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) / max(size - 1, 1)
    c0, c1 = rng.uniform(0.15, 0.85, 3), rng.uniform(0.15, 0.85, 3)
    direction = rng.uniform(0, 1)
    t = direction * xx + (1 - direction) * yy
    vi = (1 - t)[None] * c0[:, None, None] + t[None] * c1[:, None, None]
    ir_bg = rng.uniform(0.05, 0.2)
    ir = ir_bg + 0.08 * (yy - 0.5)

    n_shapes = int(rng.integers(3, 7))
    camouflaged = int(rng.integers(0, n_shapes))
    for i in range(n_shapes):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        ry, rx = rng.uniform(0.06, 0.22, 2)
        if rng.uniform() < 0.5:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        if i == camouflaged:
            local = vi[:, mask].mean(axis=1) if mask.any() else c0
            color = np.clip(local + rng.uniform(-0.04, 0.04, 3), 0, 1)
        else:
            color = rng.uniform(0, 1, 3)
        vi[:, mask] = color[:, None]
        ir[mask] = rng.uniform(0.5, 1.0)
    return _quantize(vi), _quantize(np.repeat(ir[None], 3, axis=0))


def _load_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _reference_pairs(source: str | Path) -> list[tuple[np.ndarray, np.ndarray]]:
    root = Path(source)
    if not root.is_dir():
        raise FileNotFoundError(f"reference directory {root} does not exist")
    pairs = []
    for vi_path in sorted(root.glob("*_vi.png")):
        ir_path = vi_path.with_name(vi_path.name[: -len("_vi.png")] + "_ir.png")
        if not ir_path.exists():
            continue
        vi = _load_png(vi_path)
        ir = _load_png(ir_path)
        if ir.shape != vi.shape:
            raise ValueError(f"{ir_path.name} and {vi_path.name} differ in size")
        gray = (0.299 * ir[0] + 0.587 * ir[1] + 0.114 * ir[2])[None]
        pairs.append((_quantize(np.repeat(gray, 3, axis=0)), vi))
    if not pairs:
        raise ValueError(f"no *_ir.png/*_vi.png pairs in {root}")
    return pairs


def make_dataset(
    ref_source: str | Path | None = None,
    count: int = 8,
    seed: int = 0,
    size: int = 96,
    strengths: Mapping[str, float] | None = None,
) -> list[DegradedSample]:
    """Build ``count`` samples; ``ref_source`` is None/"procedural" or a directory of PNG pairs."""
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    strengths = {**DEFAULT_STRENGTHS, **(strengths or {})}
    unknown = set(strengths) - set(DEFAULT_STRENGTHS)
    if unknown:
        raise ValueError(f"unknown strength keys {sorted(unknown)}")
    pairs = None if ref_source in (None, "procedural") else _reference_pairs(ref_source)

    samples = []
    for index in range(count):
        rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), index]))
        if pairs is None:
            vi_ref, ir_ref = procedural_scene(rng, size)
        else:
            ir_ref, vi_ref = pairs[index % len(pairs)]
        vi_kind = VISIBLE_KINDS[int(rng.integers(0, 2))]
        ir_kind = INFRARED_KINDS[int(rng.integers(0, 2))]
        sample_seed = int(rng.integers(0, 2**63 - 1))
        sample = DegradedSample(
            ir_degraded=None,
            vi_degraded=None,
            ir_ref=ir_ref,
            vi_ref=vi_ref,
            prompt_ir=PromptSpec("infrared", (ir_kind,)),
            prompt_vi=PromptSpec("visible", (vi_kind,)),
            seed=sample_seed,
            strengths=dict(strengths),
        )
        sample.ir_degraded, sample.vi_degraded = sample.reapply()
        samples.append(sample)
    return samples


def _save_png(arr: np.ndarray, path: Path) -> None:
    u8 = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(u8, mode="RGB").save(path, optimize=False)


def write_dataset(samples: Sequence[DegradedSample], root: str | Path, split: str = "train") -> Path:
    out = Path(root) / split
    out.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        _save_png(s.ir_degraded, out / f"{i}_ir.png")
        _save_png(s.vi_degraded, out / f"{i}_vi.png")
        _save_png(s.ir_ref, out / f"{i}_ir_ref.png")
        _save_png(s.vi_ref, out / f"{i}_vi_ref.png")
        (out / f"{i}_meta.json").write_text(json.dumps(s.meta(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_dataset(root: str | Path, split: str = "train") -> list[DegradedSample]:
    base = Path(root) / split
    if not base.is_dir():
        raise FileNotFoundError(f"dataset split directory {base} does not exist")
    metas = sorted(base.glob("*_meta.json"), key=lambda p: int(p.name.split("_")[0]))
    samples = []
    for meta_path in metas:
        idx = meta_path.name.split("_")[0]
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        samples.append(
            DegradedSample(
                ir_degraded=_load_png(base / f"{idx}_ir.png"),
                vi_degraded=_load_png(base / f"{idx}_vi.png"),
                ir_ref=_load_png(base / f"{idx}_ir_ref.png"),
                vi_ref=_load_png(base / f"{idx}_vi_ref.png"),
                prompt_ir=parse_spec(meta["prompt_ir"]),
                prompt_vi=parse_spec(meta["prompt_vi"]),
                seed=int(meta["seed"]),
                strengths=dict(meta["strengths"]),
            )
        )
    if not samples:
        raise ValueError(f"no samples found in {base}")
    return samples
