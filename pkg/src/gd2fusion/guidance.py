"""Prompt-driven per-channel affine modulation ``alpha * F + beta + F``."""

from __future__ import annotations

import torch
from torch import nn

from ._validation import DimensionError


def batch_pad(p: torch.Tensor) -> torch.Tensor:
    """Tile prompt rows three times (tile-major) to match batch-stacked detail bands.

    Row ``k * B + i`` of the result guides detail band ``k`` of sample ``i``.
    """
    return p.repeat(3, 1)


class GuidanceMLP(nn.Module):
    """Linear(d, d/2) -> LeakyReLU(0.2) -> Linear(d/2, 2C), split into (alpha, beta).

    The output layer starts at zero so that freshly built guidance is the
    identity on features regardless of the prompt.
    """

    def __init__(self, prompt_dim: int, channels: int):
        super().__init__()
        hidden = max(prompt_dim // 2, 1)
        self.prompt_dim = prompt_dim
        self.channels = channels
        self.hidden = nn.Linear(prompt_dim, hidden)
        self.act = nn.LeakyReLU(0.2)
        self.out = nn.Linear(hidden, 2 * channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, p: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return prompt_to_params(p, self)


def prompt_to_params(p: torch.Tensor, mlp: GuidanceMLP) -> tuple[torch.Tensor, torch.Tensor]:
    if p.ndim != 2 or p.shape[1] != mlp.prompt_dim:
        raise DimensionError(f"prompt width {tuple(p.shape)} does not match guidance MLP input width {mlp.prompt_dim}")
    y = mlp.out(mlp.act(mlp.hidden(p)))
    c = mlp.channels
    alpha = y[:, :c].reshape(-1, c, 1, 1)
    beta = y[:, c:].reshape(-1, c, 1, 1)
    return alpha, beta


def affine_guide(features: torch.Tensor, alpha: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    if alpha.shape != beta.shape:
        raise DimensionError(f"alpha {tuple(alpha.shape)} and beta {tuple(beta.shape)} differ in shape")
    if features.ndim != 4 or features.shape[:2] != alpha.shape[:2]:
        raise DimensionError(
            f"features {tuple(features.shape)} do not match guidance parameters {tuple(alpha.shape)} in batch/channels"
        )
    return alpha * features + beta + features
