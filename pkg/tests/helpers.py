"""Shared test utilities: block configuration hooks and a central-difference oracle."""

import torch

from gd2fusion.blocks import ConvBlock, TransformerBlock
from gd2fusion.guidance import GuidanceMLP


def make_conv_identity(module: torch.nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, ConvBlock):
            w = m.conv.weight
            with torch.no_grad():
                w.zero_()
                m.conv.bias.zero_()
                k = w.shape[-1] // 2
                for c in range(min(w.shape[0], w.shape[1])):
                    w[c, c, k, k] = 1.0


def zero_transformer_outputs(module: torch.nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, TransformerBlock):
            with torch.no_grad():
                for lin in (m.attn.proj, m.ffn[2]):
                    lin.weight.zero_()
                    lin.bias.zero_()


def perturb_guidance(module: torch.nn.Module, scale: float = 0.1, seed: int = 0) -> None:
    g = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, GuidanceMLP):
            with torch.no_grad():
                m.out.weight.add_(scale * torch.randn(m.out.weight.shape, generator=g, dtype=m.out.weight.dtype))
                m.out.bias.add_(scale * torch.randn(m.out.bias.shape, generator=g, dtype=m.out.bias.dtype))


def central_difference(fn, param: torch.Tensor, index: tuple, step: float = 1e-4) -> float:
    """d fn() / d param[index] by central differences; restores the entry afterwards."""
    with torch.no_grad():
        orig = param[index].item()
        param[index] = orig + step
        plus = float(fn())
        param[index] = orig - step
        minus = float(fn())
        param[index] = orig
    return (plus - minus) / (2 * step)


def relative_error(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def locally_smooth(fn, param: torch.Tensor, index: tuple, step: float = 1e-4, tol: float = 1e-4) -> bool:
    """True unless central differences at ``step`` and ``step / 10`` disagree.

    Disagreement means a ReLU-style kink lies within ``step`` of the point, so
    the coarse difference no longer estimates the derivative. The analytic
    gradient is never consulted.
    """
    coarse = central_difference(fn, param, index, step)
    fine = central_difference(fn, param, index, step / 10)
    return relative_error(coarse, fine, floor=1e-8) <= tol


def sample_coordinates(module: torch.nn.Module, count: int, seed: int = 0):
    """Yield ``count`` (name, param, index) triples uniformly over all scalar parameters."""
    named = [(n, p) for n, p in module.named_parameters()]
    sizes = torch.tensor([p.numel() for _, p in named])
    cum = sizes.cumsum(0)
    picks = torch.randperm(int(cum[-1]), generator=torch.Generator().manual_seed(seed))[:count]
    for k in picks.tolist():
        i = int((cum > k).nonzero()[0])
        off = k - (int(cum[i - 1]) if i else 0)
        name, prm = named[i]
        yield name, prm, tuple(int(x) for x in torch.unravel_index(torch.tensor(off), prm.shape))
