"""
ニューラルネット基本演算のテスト（勾配は倍精度の中心差分で確認）
"""
import pytest
import torch

from src.errors import ShapeError
from src.nn import (
    GDN,
    AdamState,
    MaskedConv2d,
    QuantMode,
    adam_step,
    conv2d,
    conv2d_transpose,
    gdn,
    grad_check,
    igdn,
    leaky_relu,
    masked_conv2d,
    quantize,
)
from src.nn.ops import causal_mask, lower_bound


def _rand(*shape, seed=0, requires_grad=True):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64).requires_grad_(requires_grad)


class TestShapes:
    def test_conv2d_stride2(self):
        out = conv2d(torch.zeros(1, 3, 8, 8), torch.zeros(4, 3, 5, 5), stride=2, padding=2)
        assert out.shape == (1, 4, 4, 4)

    def test_transpose_doubles(self):
        out = conv2d_transpose(torch.zeros(1, 4, 4, 4), torch.zeros(4, 3, 5, 5), stride=2, padding=2, output_padding=1)
        assert out.shape == (1, 3, 8, 8)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(torch.zeros(1, 3, 8, 8), torch.zeros(4, 2, 3, 3))

    def test_bad_stride(self):
        with pytest.raises(ShapeError):
            conv2d(torch.zeros(1, 1, 8, 8), torch.zeros(1, 1, 3, 3), stride=3)

    def test_gdn_parameter_shapes(self):
        with pytest.raises(ShapeError):
            gdn(torch.zeros(1, 3, 2, 2), torch.ones(2), torch.eye(3))


class TestGradients:
    def test_conv2d(self):
        report = grad_check(
            lambda x, w, b: conv2d(x, w, b, stride=2, padding=1),
            [_rand(1, 2, 6, 6), _rand(3, 2, 3, 3, seed=1), _rand(3, seed=2)],
        )
        assert report.passed, report.max_rel_error

    def test_conv2d_transpose(self):
        report = grad_check(
            lambda x, w: conv2d_transpose(x, w, stride=2, padding=1, output_padding=1),
            [_rand(1, 2, 3, 3), _rand(2, 3, 3, 3, seed=1)],
        )
        assert report.passed, report.max_rel_error

    def test_leaky_relu(self):
        x = _rand(2, 3, 4, 4)
        with torch.no_grad():
            x += 0.05 * torch.sign(x)  # 0 付近の折れ目を避ける
        assert grad_check(leaky_relu, [x]).passed

    def test_gdn_and_igdn(self):
        x = _rand(1, 3, 3, 3)
        beta = (torch.rand(3, dtype=torch.float64) + 0.5).requires_grad_()
        gamma = (0.1 * torch.rand(3, 3, dtype=torch.float64) + 0.05).requires_grad_()
        assert grad_check(gdn, [x, beta, gamma]).passed
        assert grad_check(igdn, [x, beta, gamma]).passed

    def test_masked_conv(self):
        report = grad_check(masked_conv2d, [_rand(1, 2, 5, 5), _rand(3, 2, 5, 5, seed=1), _rand(3, seed=2)])
        assert report.passed, report.max_rel_error

    def test_report_detects_wrong_gradient(self):
        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                return x * x

            @staticmethod
            def backward(ctx, g):
                return g

        assert not grad_check(Wrong.apply, [_rand(4)]).passed


class TestMaskedConv:
    def test_mask_layout(self):
        mask = causal_mask(5)
        assert mask[2, 2] == 0 and mask[2, 3] == 0 and mask[3, 0] == 0
        assert mask[2, 1] == 1 and mask[1, 4] == 1
        assert int(mask.sum()) == 12

    def test_output_ignores_current_and_future_sites(self):
        torch.manual_seed(0)
        layer = MaskedConv2d(2, 3, 5)
        x = torch.randn(1, 2, 6, 6)
        base = layer(x)
        x2 = x.clone()
        x2[:, :, 3, 3] += 10.0
        changed = (layer(x2) - base).abs().sum(dim=1)[0]
        # (3, 3) 以降（ラスタ順）の位置は、(3, 3) の前の出力にだけ影響を与えない
        for i in range(6):
            for j in range(6):
                if (i, j) <= (3, 3):
                    assert changed[i, j] == 0

    def test_forward_patch_matches_full(self):
        torch.manual_seed(1)
        layer = MaskedConv2d(2, 4, 5)
        x = torch.randn(1, 2, 7, 7)
        full = layer(x)
        padded = torch.nn.functional.pad(x, (2, 2, 2, 2))
        patch = padded[:, :, 3:8, 1:6]
        torch.testing.assert_close(layer.forward_patch(patch)[0, :, 0, 0], full[0, :, 3, 1])


class TestQuantize:
    def test_round_is_half_even(self):
        x = torch.tensor([0.5, 1.5, -0.5, 2.4])
        assert quantize(x, QuantMode.ROUND).tolist() == [0.0, 2.0, -0.0, 2.0]

    def test_noise_is_bounded(self):
        g = torch.Generator().manual_seed(0)
        x = torch.zeros(1000)
        q = quantize(x, QuantMode.NOISE, g)
        assert q.min() >= -0.5 and q.max() < 0.5

    def test_ste_gradient_is_identity(self):
        x = torch.tensor([0.3, 1.7], requires_grad=True)
        quantize(x, QuantMode.ROUND_STE).sum().backward()
        assert x.grad.tolist() == [1.0, 1.0]

    def test_lower_bound_gradient(self):
        x = torch.tensor([0.0, 2.0], requires_grad=True)
        lower_bound(x, 1.0).sum().backward()
        # 下限より小さい要素では、さらに下げる方向の更新になる勾配を止める
        assert x.grad.tolist() == [0.0, 1.0]


class TestAdam:
    def test_minimizes_quadratic(self):
        p = torch.nn.Parameter(torch.tensor([3.0, -2.0]))
        state = AdamState([p], lr=0.1)
        for step in range(400):
            state.optimizer.zero_grad()
            (p ** 2).sum().backward()
            state.step(0.1 if step < 200 else 0.01)
        assert p.abs().max() < 0.05
        assert state.step_count == 400

    def test_adam_step_shape_check(self):
        p = torch.nn.Parameter(torch.zeros(2))
        with pytest.raises(ShapeError):
            adam_step([p], [torch.zeros(3)], AdamState([p]), 1e-3)

    def test_gdn_layer_parameters_stay_valid(self):
        layer = GDN(3)
        beta, gamma = layer.effective_params()
        assert (beta > 0).all() and (gamma >= 0).all()
