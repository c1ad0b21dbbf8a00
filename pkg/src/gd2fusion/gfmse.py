"""Prompt-guided processing of wavelet sub-bands for one modality."""

from __future__ import annotations

import torch
from torch import nn

from ._validation import DimensionError, check_prompt_rows
from .blocks import conv_stack, transformer_stack
from .guidance import GuidanceMLP, affine_guide, batch_pad, prompt_to_params
from .wavelet import SubBands


class GFMSELayer(nn.Module):
    """One frequency-domain extraction layer.

    The low band and the stacked detail bands each get their own guidance
    MLP and their own conv/transformer stack; the three detail bands share
    the high-path stack because they ride along the batch axis.
    """

    def __init__(
        self,
        channels: int,
        prompt_dim: int,
        n_conv: int = 3,
        n_transformer: int = 2,
        heads: int = 4,
        window: int = 8,
    ):
        super().__init__()
        self.channels = channels
        self.low_guide = GuidanceMLP(prompt_dim, channels)
        self.high_guide = GuidanceMLP(prompt_dim, channels)
        self.low_convs = conv_stack(channels, n_conv)
        self.high_convs = conv_stack(channels, n_conv)
        self.low_transformers = transformer_stack(channels, n_transformer, heads, window)
        self.high_transformers = transformer_stack(channels, n_transformer, heads, window)

    def forward(self, bands: SubBands, prompt: torch.Tensor) -> SubBands:
        low, high = bands
        if low.shape[1] != self.channels:
            raise DimensionError(f"GFMSE layer expects {self.channels} channels, got {low.shape[1]}")
        if high.shape[0] != 3 * low.shape[0]:
            raise DimensionError(f"high band batch {high.shape[0]} is not 3x the low band batch {low.shape[0]}")
        check_prompt_rows(prompt, low.shape[0])

        a_lo, b_lo = prompt_to_params(prompt, self.low_guide)
        low = self.low_transformers(self.low_convs(affine_guide(low, a_lo, b_lo)))

        a_hi, b_hi = prompt_to_params(batch_pad(prompt), self.high_guide)
        high = self.high_transformers(self.high_convs(affine_guide(high, a_hi, b_hi)))
        return SubBands(low, high)


def gfmse_forward(bands: SubBands, prompt: torch.Tensor, layer: GFMSELayer) -> SubBands:
    return layer(bands, prompt)
