"""Single-level orthonormal 2-D Haar transform on (B, C, H, W) feature maps.

The three detail bands travel stacked on the batch axis in the order
LH, HL, HH, so every band can be pushed through the same convolution stack.
"""

from __future__ import annotations

from typing import NamedTuple

import torch

from ._validation import DimensionError, check_feature_map


class SubBands(NamedTuple):
    low: torch.Tensor  # (B, C, H/2, W/2)
    high: torch.Tensor  # (3B, C, H/2, W/2): LH, HL, HH


def dwt2(x: torch.Tensor) -> SubBands:
    """Split ``x`` into its LL band and the batch-stacked LH/HL/HH bands.

    For each 2x2 block [[a, b], [c, d]]::

        LL = (a + b + c + d) / 2     LH = (a + b - c - d) / 2
        HL = (a - b + c - d) / 2     HH = (a - b - c + d) / 2
    """
    check_feature_map(x, even=True)
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2
    lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2
    hh = (a - b - c + d) / 2
    return SubBands(ll, torch.cat([lh, hl, hh], dim=0))


def iwt2(bands: SubBands) -> torch.Tensor:
    low, high = bands
    if low.ndim != 4 or high.ndim != 4:
        raise DimensionError("sub-bands must be 4-D tensors")
    b = low.shape[0]
    if high.shape[0] != 3 * b or high.shape[1:] != low.shape[1:]:
        raise DimensionError(
            f"high band shape {tuple(high.shape)} inconsistent with low band {tuple(low.shape)}; "
            f"expected ({3 * b}, {', '.join(map(str, low.shape[1:]))})"
        )
    ll = low
    lh, hl, hh = high[:b], high[b : 2 * b], high[2 * b :]
    a = (ll + lh + hl + hh) / 2
    bb = (ll + lh - hl - hh) / 2
    c = (ll - lh + hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    n, ch, h, w = ll.shape
    top = torch.stack([a, bb], dim=-1).reshape(n, ch, h, 2 * w)
    bottom = torch.stack([c, d], dim=-1).reshape(n, ch, h, 2 * w)
    return torch.stack([top, bottom], dim=-2).reshape(n, ch, 2 * h, 2 * w)
