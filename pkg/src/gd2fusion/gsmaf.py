"""Prompt-aggregated spatial fusion layer producing local and global features."""

from __future__ import annotations

import torch
from torch import nn

from ._validation import DimensionError, check_prompt_rows
from .blocks import LEAKY_SLOPE, ChannelModulation, conv_stack, transformer_stack
from .guidance import GuidanceMLP, affine_guide, prompt_to_params


def aggregate_prompts(p_ir: torch.Tensor, p_vi: torch.Tensor, proj: nn.Linear) -> torch.Tensor:
    """Concatenate the two prompt rows and project back to width d (no renormalization)."""
    if p_ir.shape != p_vi.shape:
        raise DimensionError(f"infrared prompt {tuple(p_ir.shape)} and visible prompt {tuple(p_vi.shape)} differ")
    if 2 * p_ir.shape[1] != proj.in_features:
        raise DimensionError(f"concatenated prompt width {2 * p_ir.shape[1]} != projection input {proj.in_features}")
    return proj(torch.cat([p_ir, p_vi], dim=1))


class GSMAFLayer(nn.Module):
    def __init__(
        self,
        in_channels: int,
        channels: int,
        prompt_dim: int,
        n_conv: int = 3,
        n_transformer: int = 2,
        kernels: tuple[int, ...] = (3, 5, 7),
        heads: int = 4,
        window: int = 8,
        groups: int = 4,
    ):
        super().__init__()
        if channels % groups:
            raise ValueError(f"channels ({channels}) must be divisible by the group-norm groups ({groups})")
        self.in_channels = in_channels
        self.channels = channels
        self.proj = nn.Linear(2 * prompt_dim, prompt_dim, bias=False)
        self.guide = GuidanceMLP(prompt_dim, channels)
        self.modulate = ChannelModulation(in_channels, channels)
        self.branches = nn.ModuleList(conv_stack(channels, n_conv, k) for k in kernels)
        self.merge = nn.Conv2d(len(kernels) * channels, channels, 1)
        self.norm = nn.GroupNorm(groups, channels)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.transformers = transformer_stack(channels, n_transformer, heads, window)

    def guided(self, x: torch.Tensor, p_ir: torch.Tensor, p_vi: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(f"GSMAF layer expects {self.in_channels} input channels, got shape {tuple(x.shape)}")
        check_prompt_rows(p_ir, x.shape[0], name="infrared prompt")
        check_prompt_rows(p_vi, x.shape[0], name="visible prompt")
        alpha, beta = prompt_to_params(aggregate_prompts(p_ir, p_vi, self.proj), self.guide)
        return affine_guide(self.modulate(x), alpha, beta)

    def local(self, g: torch.Tensor) -> torch.Tensor:
        merged = self.merge(torch.cat([branch(g) for branch in self.branches], dim=1))
        return self.act(self.norm(merged + g))

    def forward(self, x: torch.Tensor, p_ir: torch.Tensor, p_vi: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        g = self.guided(x, p_ir, p_vi)
        return self.local(g), self.transformers(g)


def gsmaf_forward(x, p_ir, p_vi, layer: GSMAFLayer):
    return layer(x, p_ir, p_vi)
