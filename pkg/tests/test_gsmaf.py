import pytest
import torch

from gd2fusion import DimensionError
from gd2fusion.gsmaf import GSMAFLayer, aggregate_prompts, gsmaf_forward

from helpers import make_conv_identity, perturb_guidance


def rand(*shape, seed=0):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed))


def test_aggregate_selector_and_mean():
    d = 4
    proj = torch.nn.Linear(2 * d, d, bias=False)
    p_ir, p_vi = rand(3, d, seed=1), rand(3, d, seed=2)
    with torch.no_grad():
        proj.weight.copy_(torch.cat([torch.eye(d), torch.zeros(d, d)], dim=1))
    assert torch.allclose(aggregate_prompts(p_ir, p_vi, proj), p_ir)
    with torch.no_grad():
        proj.weight.copy_(0.5 * torch.cat([torch.eye(d), torch.eye(d)], dim=1))
    assert torch.allclose(aggregate_prompts(p_ir, p_vi, proj), (p_ir + p_vi) / 2)


def test_aggregate_hand_two_dim():
    proj = torch.nn.Linear(4, 2, bias=False)
    with torch.no_grad():
        proj.weight.copy_(torch.tensor([[1.0, 2.0, 0.0, -1.0], [0.5, 0.0, 3.0, 1.0]]))
    out = aggregate_prompts(torch.tensor([[1.0, -1.0]]), torch.tensor([[2.0, 4.0]]), proj)
    # row: [1, -1, 2, 4] -> (1 - 2 + 0 - 4, 0.5 + 0 + 6 + 4)
    assert out.tolist() == [[-5.0, 10.5]]


def test_aggregate_mismatch():
    with pytest.raises(DimensionError):
        aggregate_prompts(torch.zeros(2, 4), torch.zeros(2, 3), torch.nn.Linear(8, 4))
    with pytest.raises(DimensionError):
        aggregate_prompts(torch.zeros(2, 4), torch.zeros(2, 4), torch.nn.Linear(6, 4))


def test_shape_contract():
    layer = GSMAFLayer(64, 16, 32)
    local, glob = gsmaf_forward(rand(2, 64, 32, 32), rand(2, 32), rand(2, 32, seed=3), layer)
    assert local.shape == glob.shape == (2, 16, 32, 32)


def test_first_layer_width():
    layer = GSMAFLayer(32, 16, 32)
    local, glob = layer(rand(1, 32, 16, 16), rand(1, 32), rand(1, 32))
    assert local.shape == (1, 16, 16, 16)
    with pytest.raises(DimensionError):
        layer(rand(1, 64, 16, 16), rand(1, 32), rand(1, 32))


def test_compositional_oracle():
    torch.manual_seed(0)
    layer = GSMAFLayer(16, 4, 8, window=4)
    make_conv_identity(layer.branches)
    x, p_ir, p_vi = rand(2, 16, 8, 8), rand(2, 8, seed=1), rand(2, 8, seed=2)
    cm = layer.modulate(x)  # zero-initialized guidance leaves this untouched
    act = torch.nn.functional.leaky_relu
    # each branch is three identity-kernel conv blocks, i.e. LeakyReLU applied three times
    branch_out = torch.cat([act(act(act(cm, 0.2), 0.2), 0.2)] * 3, dim=1)
    expected = layer.act(layer.norm(layer.merge(branch_out) + cm))
    local, _ = layer(x, p_ir, p_vi)
    assert torch.allclose(local, expected, atol=1e-6)


def test_zeroed_merge_leaves_normalized_residual():
    torch.manual_seed(1)
    layer = GSMAFLayer(16, 4, 8, window=4)
    perturb_guidance(layer, 0.3)
    with torch.no_grad():
        layer.merge.weight.zero_()
        layer.merge.bias.zero_()
    x, p_ir, p_vi = rand(2, 16, 8, 8), rand(2, 8, seed=1), rand(2, 8, seed=2)
    g = layer.guided(x, p_ir, p_vi)
    local, _ = layer(x, p_ir, p_vi)
    assert torch.equal(local, layer.act(layer.norm(g)))


def test_pinned_gate_scales_residual_sum():
    torch.manual_seed(2)
    layer = GSMAFLayer(16, 4, 8, window=4)
    layer.modulate.gate_override = 1.0
    with torch.no_grad():
        layer.modulate.proj.bias.zero_()
    p_ir, p_vi = rand(1, 8, seed=1), rand(1, 8, seed=2)
    x = rand(1, 16, 8, 8)
    g1, g2 = layer.guided(x, p_ir, p_vi), layer.guided(2 * x, p_ir, p_vi)
    assert torch.allclose(g2, 2 * g1, atol=1e-6)


def test_local_and_global_have_disjoint_parameters():
    torch.manual_seed(3)
    layer = GSMAFLayer(16, 4, 8, window=4)
    x, p_ir, p_vi = rand(1, 16, 8, 8), rand(1, 8, seed=1), rand(1, 8, seed=2)
    local0, glob0 = layer(x, p_ir, p_vi)
    with torch.no_grad():
        for prm in list(layer.branches.parameters()) + list(layer.merge.parameters()):
            prm.add_(0.1)
    local1, glob1 = layer(x, p_ir, p_vi)
    assert torch.equal(glob1, glob0) and not torch.allclose(local1, local0)
    with torch.no_grad():
        for prm in layer.transformers.parameters():
            prm.add_(0.1)
    local2, glob2 = layer(x, p_ir, p_vi)
    assert torch.equal(local2, local1) and not torch.allclose(glob2, glob1)


def test_prompt_mismatch():
    layer = GSMAFLayer(16, 4, 8, window=4)
    with pytest.raises(DimensionError):
        layer(rand(2, 16, 8, 8), rand(1, 8), rand(1, 8))


def test_groups_must_divide():
    with pytest.raises(ValueError):
        GSMAFLayer(12, 6, 8)
