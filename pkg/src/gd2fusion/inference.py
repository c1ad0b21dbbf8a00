"""Fuse numpy image pairs with a trained network."""

from __future__ import annotations

import numpy as np
import torch

from ._validation import DimensionError, check_image_batch
from .network import GD2FusionNet, crop_to, pad_to_grid
from .prompts import EmbeddingProvider, PromptSpec, encode_specs


def _spec_rows(spec, batch: int) -> list[PromptSpec]:
    specs = [spec] * batch if isinstance(spec, PromptSpec) else list(spec)
    if len(specs) != batch:
        raise DimensionError(f"got {len(specs)} prompt specs for a batch of {batch}")
    return specs


@torch.no_grad()
def fuse(
    net: GD2FusionNet,
    ir,
    vi,
    prompt_ir: PromptSpec | list[PromptSpec],
    prompt_vi: PromptSpec | list[PromptSpec],
    provider: EmbeddingProvider,
    clip: bool = True,
) -> np.ndarray:
    """Fuse (B, 3, H, W) or (3, H, W) arrays in [0, 1]; output has the input's batch layout."""
    single = np.ndim(ir) == 3
    ir_arr = check_image_batch(ir, "ir")
    vi_arr = check_image_batch(vi, "vi")
    if ir_arr.shape != vi_arr.shape:
        raise DimensionError(f"ir {ir_arr.shape} and vi {vi_arr.shape} differ in shape")
    b = ir_arr.shape[0]
    p_ir = encode_specs(_spec_rows(prompt_ir, b), provider)
    p_vi = encode_specs(_spec_rows(prompt_vi, b), provider)
    net.eval()
    dtype = next(net.parameters()).dtype
    grid = net.config.grid
    ir_t, size = pad_to_grid(torch.from_numpy(ir_arr).to(dtype), grid)
    vi_t, _ = pad_to_grid(torch.from_numpy(vi_arr).to(dtype), grid)
    out = crop_to(net(ir_t, vi_t, p_ir.to(dtype), p_vi.to(dtype)), size)
    if clip:
        out = out.clamp(0, 1)
    arr = out.float().numpy()
    return arr[0] if single else arr
