"""Intensity, Sobel texture, and chrominance losses plus their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.nn import functional as F

from ._validation import check_same_shape


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 5.0  # intensity
    lam: float = 5.0  # texture
    theta: float = 6.0  # color

    def __post_init__(self):
        if min(self.gamma, self.lam, self.theta) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    intensity: torch.Tensor
    texture: torch.Tensor
    color: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in ("intensity", "texture", "color", "total")}


def intensity_loss(fused, ir_ref, vi_ref) -> torch.Tensor:
    check_same_shape(fused, ir_ref, vi_ref, names=("fused", "ir_ref", "vi_ref"))
    return (fused - torch.maximum(ir_ref, vi_ref)).abs().mean()


def sobel_gradient(x: torch.Tensor) -> torch.Tensor:
    """Per-channel ``|G_x| + |G_y|`` of the 3x3 Sobel pair with reflect padding.

    Evaluated separably (central difference, then 1-2-1 smoothing) so flat
    regions give exact zeros.
    """
    p = F.pad(x, (1, 1, 1, 1), mode="reflect")
    dx = p[..., :, 2:] - p[..., :, :-2]
    gx = dx[..., :-2, :] + 2 * dx[..., 1:-1, :] + dx[..., 2:, :]
    dy = p[..., 2:, :] - p[..., :-2, :]
    gy = dy[..., :, :-2] + 2 * dy[..., :, 1:-1] + dy[..., :, 2:]
    return gx.abs() + gy.abs()


def texture_loss(fused, ir_ref, vi_ref) -> torch.Tensor:
    check_same_shape(fused, ir_ref, vi_ref, names=("fused", "ir_ref", "vi_ref"))
    target = torch.maximum(sobel_gradient(ir_ref), sobel_gradient(vi_ref))
    return (sobel_gradient(fused) - target).abs().mean()


def rgb_to_ycbcr(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Full-range BT.601 conversion of a (B, 3, H, W) tensor in [0, 1]."""
    r, g, b = x[:, 0], x[:, 1], x[:, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 0.5
    return y, cb, cr


def color_loss(fused, vi_ref) -> torch.Tensor:
    check_same_shape(fused, vi_ref, names=("fused", "vi_ref"))
    _, cb_f, cr_f = rgb_to_ycbcr(fused)
    _, cb_r, cr_r = rgb_to_ycbcr(vi_ref)
    return ((cb_f - cb_r).abs().mean() + (cr_f - cr_r).abs().mean()) / 2


def total_loss(fused, ir_ref, vi_ref, cfg: LossConfig = LossConfig()) -> LossReport:
    l_int = intensity_loss(fused, ir_ref, vi_ref)
    l_tex = texture_loss(fused, ir_ref, vi_ref)
    l_col = color_loss(fused, vi_ref)
    total = cfg.gamma * l_int + cfg.lam * l_tex + cfg.theta * l_col
    return LossReport(l_int, l_tex, l_col, total)
