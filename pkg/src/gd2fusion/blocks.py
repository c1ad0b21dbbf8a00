"""Convolution, windowed-transformer, and channel-modulation building blocks."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from ._validation import DimensionError

LEAKY_SLOPE = 0.2


class ConvBlock(nn.Module):
    """k x k zero-padded convolution followed by LeakyReLU(0.2)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        self.in_channels = in_channels
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size, padding=kernel_size // 2)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise DimensionError(f"conv block expects {self.in_channels} channels, got {x.shape[1]}")
        return self.act(self.conv(x))


def conv_stack(channels: int, n: int, kernel_size: int = 3) -> nn.Sequential:
    return nn.Sequential(*(ConvBlock(channels, channels, kernel_size) for _ in range(n)))


class WindowAttention(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ValueError(f"channels ({channels}) must be divisible by heads ({heads})")
        self.heads = heads
        self.head_dim = channels // heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        # tokens: (windows, n, C)
        nw, n, c = tokens.shape
        qkv = self.qkv(tokens).reshape(nw, n, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        # max-subtracted softmax inside, so large scores cannot overflow
        out = F.scaled_dot_product_attention(q, k, v).transpose(1, 2).reshape(nw, n, c)
        return self.proj(out)


class TransformerBlock(nn.Module):
    """Pre-norm windowed self-attention and feed-forward, each with a residual.

    Pixels are tokens; the map is cut into non-overlapping ``window`` x
    ``window`` tiles. Maps smaller than the window are treated as a single
    tile.
    """

    def __init__(self, channels: int, heads: int = 4, window: int = 8, expansion: int = 2):
        super().__init__()
        self.window = window
        self.norm1 = nn.LayerNorm(channels)
        self.attn = WindowAttention(channels, heads)
        self.norm2 = nn.LayerNorm(channels)
        self.ffn = nn.Sequential(
            nn.Linear(channels, expansion * channels),
            nn.GELU(),
            nn.Linear(expansion * channels, channels),
        )

    def forward_tokens(self, t: torch.Tensor) -> torch.Tensor:
        t = t + self.attn(self.norm1(t))
        return t + self.ffn(self.norm2(t))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t, layout = window_partition(x, self.window)
        return window_merge(self.forward_tokens(t), layout)


def window_partition(x: torch.Tensor, window: int):
    """(B, C, H, W) -> (B * windows, window * window, C) plus the layout needed to undo it."""
    b, c, h, w = x.shape
    wh, ww = min(window, h), min(window, w)
    if h % wh or w % ww:
        raise DimensionError(f"spatial size {h}x{w} is not divisible by the attention window {window}")
    t = x.reshape(b, c, h // wh, wh, w // ww, ww).permute(0, 2, 4, 3, 5, 1).reshape(-1, wh * ww, c)
    return t, (b, c, h, w, wh, ww)


def window_merge(t: torch.Tensor, layout) -> torch.Tensor:
    b, c, h, w, wh, ww = layout
    return t.reshape(b, h // wh, w // ww, wh, ww, c).permute(0, 5, 1, 3, 2, 4).reshape(b, c, h, w)


class TransformerStack(nn.Sequential):
    """M transformer blocks sharing one window partition of the map."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if len(self) == 0:
            return x
        t, layout = window_partition(x, self[0].window)
        for block in self:
            t = block.forward_tokens(t)
        return window_merge(t, layout)


def transformer_stack(channels: int, m: int, heads: int = 4, window: int = 8) -> TransformerStack:
    return TransformerStack(*(TransformerBlock(channels, heads, window) for _ in range(m)))


class ChannelModulation(nn.Module):
    """Squeeze-excitation gate (reduction 4) followed by a 1x1 conv to ``out_channels``.

    ``gate_override`` pins the gate to a constant; it exists for tests that
    need the unit to be linear in its input.
    """

    def __init__(self, in_channels: int, out_channels: int, reduction: int = 4):
        super().__init__()
        squeezed = in_channels // reduction
        if squeezed < 1:
            raise ValueError(f"in_channels={in_channels} too small for reduction {reduction}")
        self.in_channels = in_channels
        self.fc1 = nn.Linear(in_channels, squeezed)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.fc2 = nn.Linear(squeezed, in_channels)
        self.proj = nn.Conv2d(in_channels, out_channels, 1)
        self.gate_override: float | None = None

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        if self.gate_override is not None:
            return torch.full_like(x[:, :, :1, :1], self.gate_override)
        s = x.mean(dim=(2, 3))
        g = torch.sigmoid(self.fc2(self.act(self.fc1(s))))
        return g[:, :, None, None]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(f"channel modulation expects {self.in_channels} input channels, got shape {tuple(x.shape)}")
        return self.proj(x * self.gate(x))
