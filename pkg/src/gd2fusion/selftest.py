"""Quick invariant checks runnable from an installed package (``gd2fusion self-test``)."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import torch

from .losses import LossConfig, color_loss, intensity_loss, texture_loss, total_loss
from .network import GD2FusionNet, NetworkConfig
from .wavelet import dwt2, iwt2


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def check_wavelet(trials: int = 25, seed: int = 0) -> tuple[bool, str]:
    g = torch.Generator().manual_seed(seed)
    worst_err = worst_energy = 0.0
    for _ in range(trials):
        b, c = (int(v) for v in torch.randint(1, 4, (2,), generator=g))
        h, w = (2 * int(v) for v in torch.randint(1, 17, (2,), generator=g))
        x = torch.randn(b, c, h, w, generator=g, dtype=torch.float64)
        bands = dwt2(x)
        worst_err = max(worst_err, (iwt2(bands) - x).abs().max().item())
        energy = bands.low.pow(2).sum() + bands.high.pow(2).sum()
        worst_energy = max(worst_energy, abs(energy.item() / x.pow(2).sum().item() - 1))
    return worst_err <= 1e-5 and worst_energy <= 1e-5, f"max_err={worst_err:.2e} energy={worst_energy:.2e}"


def check_identity_at_init(seed: int = 0) -> tuple[bool, str]:
    torch.manual_seed(seed)
    cfg = NetworkConfig(channels=8, layers=2, prompt_dim=32)
    net = GD2FusionNet(cfg).eval()
    g = torch.Generator().manual_seed(seed)
    ir, vi = torch.rand(2, 2, 3, 32, 32, generator=g)
    prompts = torch.randn(4, 2, 32, generator=g)
    with torch.no_grad():
        diff = (net(ir, vi, prompts[0], prompts[1]) - net(ir, vi, prompts[2], prompts[3])).abs().max().item()
    return diff <= 1e-6, f"max_diff={diff:.2e}"


def _central(fn: Callable[[], float], prm: torch.Tensor, idx: tuple, step: float) -> float:
    with torch.no_grad():
        orig = prm[idx].item()
        prm[idx] = orig + step
        plus = fn()
        prm[idx] = orig - step
        minus = fn()
        prm[idx] = orig
    return (plus - minus) / (2 * step)


def _rel(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradient_check(net: torch.nn.Module, objective: Callable[[], torch.Tensor], count: int, seed: int = 0, step: float = 1e-4):
    """Compare autograd with central differences on ``count`` random scalar parameters.

    Coordinates whose own differences at ``step`` and ``step / 10`` disagree
    sit next to an activation kink and are replaced by fresh draws.
    Returns (worst relative error, number checked, number replaced).
    """
    net.zero_grad()
    objective().backward()
    named = list(net.named_parameters())
    sizes = torch.tensor([p.numel() for _, p in named])
    cum = sizes.cumsum(0)
    order = torch.randperm(int(cum[-1]), generator=torch.Generator().manual_seed(seed))
    fn = lambda: objective().item()  # noqa: E731
    worst, checked, skipped = 0.0, 0, 0
    for k in order.tolist():
        i = int((cum > k).nonzero()[0])
        off = k - (int(cum[i - 1]) if i else 0)
        prm = named[i][1]
        idx = tuple(int(v) for v in torch.unravel_index(torch.tensor(off), prm.shape))
        coarse = _central(fn, prm, idx, step)
        if _rel(coarse, _central(fn, prm, idx, step / 10)) > 1e-4:
            skipped += 1
            continue
        worst = max(worst, _rel(coarse, prm.grad[idx].item()))
        checked += 1
        if checked == count:
            break
    return worst, checked, skipped


def tiny_gradient_problem(seed: int = 0, channels: int = 4, size: int = 16, prompt_dim: int = 16):
    """A float64 C=4, L=1 network with live guidance plus a total-loss objective on random data."""
    torch.manual_seed(seed)
    net = GD2FusionNet(NetworkConfig(channels=channels, layers=1, prompt_dim=prompt_dim)).double()
    g = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for name, prm in net.named_parameters():
            if "guide.out" in name:
                prm.add_(0.3 * torch.randn(prm.shape, generator=g, dtype=prm.dtype))
    ir, vi, ir_ref, vi_ref = torch.rand(4, 1, 3, size, size, generator=g, dtype=torch.float64)
    p_ir, p_vi = torch.randn(2, 1, prompt_dim, generator=g, dtype=torch.float64)

    def objective():
        return total_loss(net(ir, vi, p_ir, p_vi), ir_ref, vi_ref).total

    return net, objective


def check_gradients(count: int = 8, seed: int = 0) -> tuple[bool, str]:
    net, objective = tiny_gradient_problem(seed)
    worst, checked, skipped = gradient_check(net, objective, count, seed)
    return worst <= 1e-3 and checked == count, f"worst_rel={worst:.2e} checked={checked} kink_skipped={skipped}"


def check_loss_zero_cases() -> tuple[bool, str]:
    g = torch.Generator().manual_seed(0)
    a, b = torch.rand(2, 2, 3, 8, 8, generator=g)
    m = torch.maximum(a, b)
    consts = [torch.full((1, 3, 8, 8), v) for v in (0.1, 0.5, 0.9)]
    v = torch.full((1, 3, 8, 8), 0.4)
    values = {
        "intensity": intensity_loss(m, a, b).item(),
        "texture": texture_loss(*consts).item(),
        "color": color_loss(a, a).item(),
        "total": total_loss(v, v, v, LossConfig()).total.item(),
    }
    ok = all(abs(x) <= 1e-7 for x in values.values())
    return ok, " ".join(f"{k}={x:.1e}" for k, x in values.items())


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "wavelet_roundtrip": check_wavelet,
    "identity_at_init": check_identity_at_init,
    "gradient_check": check_gradients,
    "loss_zero_cases": check_loss_zero_cases,
}


def run_self_test() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported like the others
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, ok, detail, time.perf_counter() - t0))
    return results
