"""Exceptions and input-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np
import torch


class DimensionError(ValueError):
    """A tensor or array has a shape incompatible with the requested operation."""


class PromptLookupError(KeyError):
    """An embedding file does not contain a requested prompt text."""

    def __init__(self, text: str):
        super().__init__(text)
        self.text = text

    def __str__(self) -> str:
        return f"no embedding stored for prompt {self.text!r}"


class CheckpointError(Exception):
    """Base class for parameter-file problems."""


class CheckpointFormatError(CheckpointError):
    """The parameter file is truncated or not in the expected binary layout."""


class IncompatibleCheckpointError(CheckpointError):
    """The parameter file is well formed but does not match the requested config."""


class NonFiniteLossError(FloatingPointError):
    """A training step produced a NaN or infinite loss component."""

    def __init__(self, component: str, step: int):
        super().__init__(f"non-finite {component} loss at step {step}")
        self.component = component
        self.step = step


def check_feature_map(x: torch.Tensor, name: str = "x", even: bool = False) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{name} must be 4-D (batch, channels, height, width), got shape {tuple(x.shape)}")
    if even:
        h, w = x.shape[-2:]
        if h % 2:
            raise DimensionError(f"{name} height must be even, got {h}")
        if w % 2:
            raise DimensionError(f"{name} width must be even, got {w}")


def check_prompt_rows(p: torch.Tensor, batch: int, width: int | None = None, name: str = "prompt") -> None:
    if p.ndim != 2:
        raise DimensionError(f"{name} must be 2-D (batch, width), got shape {tuple(p.shape)}")
    if p.shape[0] != batch:
        raise DimensionError(f"{name} has {p.shape[0]} rows but the feature batch is {batch}")
    if width is not None and p.shape[1] != width:
        raise DimensionError(f"{name} width {p.shape[1]} does not match expected width {width}")


def check_same_shape(*tensors: torch.Tensor, names: tuple[str, ...] | None = None) -> None:
    shapes = [tuple(t.shape) for t in tensors]
    if len(set(shapes)) > 1:
        labels = names or tuple(f"arg{i}" for i in range(len(tensors)))
        desc = ", ".join(f"{n}={s}" for n, s in zip(labels, shapes))
        raise DimensionError(f"shape mismatch: {desc}")


def check_image_batch(images, name: str = "images") -> np.ndarray:
    """Coerce an image or batch of images to a float32 (B, 3, H, W) array in [0, 1].

    Accepts (3, H, W), (B, 3, H, W), or uint8 arrays (rescaled by 1/255).
    """
    arr = np.asarray(images)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32, copy=False)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise DimensionError(f"{name} must have shape (B, 3, H, W) or (3, H, W), got {np.shape(images)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
