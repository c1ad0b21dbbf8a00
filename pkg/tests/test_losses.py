import numpy as np
import pytest
import torch

from gd2fusion import DimensionError, LossConfig
from gd2fusion.losses import (
    color_loss,
    intensity_loss,
    rgb_to_ycbcr,
    sobel_gradient,
    texture_loss,
    total_loss,
)


def img(*shape, seed=0, dtype=torch.float64):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=dtype)


def test_intensity_cases():
    a, b = img(2, 3, 6, 6, seed=1), img(2, 3, 6, 6, seed=2)
    m = torch.maximum(a, b)
    assert intensity_loss(m, a, b).item() == 0.0
    assert intensity_loss(m + 0.1, a, b).item() == pytest.approx(0.1)
    ir, vi = torch.full((1, 3, 4, 4), 0.2), torch.full((1, 3, 4, 4), 0.7)
    assert intensity_loss(torch.full((1, 3, 4, 4), 0.5), ir, vi).item() == pytest.approx(0.2)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        intensity_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))
    with pytest.raises(DimensionError):
        color_loss(torch.zeros(1, 3, 4, 4), torch.zeros(2, 3, 4, 4))


def test_texture_constant_images_zero():
    c = [torch.full((1, 3, 8, 8), v) for v in (0.1, 0.5, 0.9)]
    assert texture_loss(*c).item() == 0.0


def test_texture_larger_gradient_ref_selected():
    a = img(1, 3, 8, 8, seed=4)
    flat = torch.full_like(a, 0.3)
    assert texture_loss(a, a, flat).item() == 0.0
    assert texture_loss(a, flat, a).item() == 0.0


def test_texture_step_edge_hand_value():
    x = torch.zeros(1, 3, 8, 8)
    x[..., 4:] = 1.0
    grad = sobel_gradient(x)[0, 0]
    # Sobel x-response 1+2+1 = 4 on the two columns flanking the edge, zero elsewhere
    expected = np.zeros((8, 8))
    expected[:, 3:5] = 4.0
    np.testing.assert_array_equal(grad.numpy(), expected)
    flat = torch.full_like(x, 0.5)
    assert texture_loss(x, flat, flat).item() == pytest.approx(2 * 4 / 8)


def test_sobel_matches_direct_convolution():
    x = img(2, 3, 7, 9, seed=11)
    kx = torch.tensor([[-1.0, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=x.dtype)
    p = torch.nn.functional.pad(x, (1, 1, 1, 1), mode="reflect")
    gx = sum(kx[i, j] * p[..., i : i + 7, j : j + 9] for i in range(3) for j in range(3))
    gy = sum(kx.T[i, j] * p[..., i : i + 7, j : j + 9] for i in range(3) for j in range(3))
    assert torch.allclose(sobel_gradient(x), gx.abs() + gy.abs(), atol=1e-12)


def test_sobel_reflect_border_no_phantom_edges():
    x = img(1, 1, 1, 6, seed=0).expand(1, 1, 6, 6).contiguous()  # constant down each column
    interior = sobel_gradient(x)
    # vertical response is zero everywhere: reflect padding repeats no step at the top/bottom
    row = interior[0, 0, 0]
    assert torch.allclose(interior[0, 0], row.expand(6, 6))


@pytest.mark.parametrize(
    "rgb, ycbcr",
    [
        ((1, 1, 1), (1.0, 0.5, 0.5)),
        ((0, 0, 0), (0.0, 0.5, 0.5)),
        ((1, 0, 0), (0.299, 0.331264, 1.0)),
        ((0, 1, 0), (0.587, 0.168736, 0.081312)),
    ],
)
def test_ycbcr_table(rgb, ycbcr):
    x = torch.tensor(rgb, dtype=torch.float64).reshape(1, 3, 1, 1)
    got = [t.item() for t in rgb_to_ycbcr(x)]
    assert got == pytest.approx(ycbcr, abs=1e-9)


def test_color_loss_cases():
    v = img(2, 3, 5, 5, seed=3)
    assert color_loss(v, v).item() == 0.0
    g1 = img(2, 1, 5, 5, seed=5).expand(2, 3, 5, 5)
    g2 = img(2, 1, 5, 5, seed=6).expand(2, 3, 5, 5)
    assert color_loss(g1, g2).item() == pytest.approx(0.0, abs=1e-12)
    red = torch.tensor([1.0, 0, 0], dtype=torch.float64).reshape(1, 3, 1, 1)
    green = torch.tensor([0, 1.0, 0], dtype=torch.float64).reshape(1, 3, 1, 1)
    # |Cb| diff 0.331264 - 0.168736 = 0.162528, |Cr| diff 1.0 - 0.081312 = 0.918688
    assert color_loss(green, red).item() == pytest.approx((0.162528 + 0.918688) / 2, abs=1e-9)


def test_total_weighted_sum():
    fused, a, b = img(1, 3, 6, 6, seed=1), img(1, 3, 6, 6, seed=2), img(1, 3, 6, 6, seed=3)
    rep = total_loss(fused, a, b, LossConfig(5, 5, 6))
    assert rep.total.item() == pytest.approx(5 * rep.intensity.item() + 5 * rep.texture.item() + 6 * rep.color.item(), abs=1e-6)
    assert total_loss(fused, a, b, LossConfig(0, 0, 0)).total.item() == 0.0
    assert 5 * 0.1 + 5 * 0.2 + 6 * 0.05 == pytest.approx(1.8)


def test_total_zero_when_everything_matches():
    v = torch.full((1, 3, 4, 4), 0.4)
    assert total_loss(v, v, v).total.item() == 0.0


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossConfig(-1, 5, 6)


def test_symmetry_in_sources():
    fused, a, b = img(1, 3, 8, 8, seed=7), img(1, 3, 8, 8, seed=8), img(1, 3, 8, 8, seed=9)
    assert intensity_loss(fused, a, b) == intensity_loss(fused, b, a)
    assert texture_loss(fused, a, b) == texture_loss(fused, b, a)


def _kink_distance(fused, a, b):
    parts = [(fused - torch.maximum(a, b)).abs()]
    tex = (sobel_gradient(fused) - torch.maximum(sobel_gradient(a), sobel_gradient(b))).abs()
    # reflect padding zeroes both Sobel responses at the corners for every image, so they never cross a kink
    tex[..., [0, 0, -1, -1], [0, -1, 0, -1]] = float("inf")
    parts.append(tex)
    (_, cb_f, cr_f), (_, cb_r, cr_r) = rgb_to_ycbcr(fused), rgb_to_ycbcr(b)
    parts += [(cb_f - cb_r).abs(), (cr_f - cr_r).abs(), (a - b).abs()]
    return min(p.min().item() for p in parts)


def test_gradient_matches_central_differences():
    for seed in range(50):
        fused, a, b = img(1, 3, 8, 8, seed=seed), img(1, 3, 8, 8, seed=seed + 100), img(1, 3, 8, 8, seed=seed + 200)
        if _kink_distance(fused, a, b) > 1e-5:
            break
    else:
        pytest.fail("no kink-free sample found")
    fused.requires_grad_(True)
    total_loss(fused, a, b).total.backward()
    analytic = fused.grad.clone()
    h = 1e-7
    flat = fused.detach().clone().reshape(-1)
    worst = 0.0
    for i in range(flat.numel()):
        plus, minus = flat.clone(), flat.clone()
        plus[i] += h
        minus[i] -= h
        fd = (total_loss(plus.reshape(fused.shape), a, b).total - total_loss(minus.reshape(fused.shape), a, b).total).item() / (2 * h)
        an = analytic.reshape(-1)[i].item()
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    assert worst <= 1e-3
