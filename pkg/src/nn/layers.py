"""
nn.Module ラッパー

パラメータを保持し、順伝播は src.nn.ops の関数で行う。
"""
from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from src.config.settings import GDN_BETA_MIN, GDN_GAMMA_INIT, LEAKY_RELU_SLOPE
from src.errors import ShapeError
from src.nn import ops


def _fan_in_uniform_(weight: Tensor, bias: Tensor, fan_in: int) -> None:
    nn.init.kaiming_uniform_(weight, a=math.sqrt(5))
    bound = 1.0 / math.sqrt(fan_in) if fan_in > 0 else 0.0
    nn.init.uniform_(bias, -bound, bound)


class Conv2d(nn.Module):
    """k×k 畳み込み（same padding 相当の padding = k // 2）"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__()
        if in_channels <= 0 or out_channels <= 0:
            raise ValueError("channel counts must be positive")
        self.stride = stride
        self.padding = kernel_size // 2
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels))
        _fan_in_uniform_(self.weight, self.bias, in_channels * kernel_size * kernel_size)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(nn.Module):
    """転置畳み込み。stride 2 のとき出力は入力のちょうど2倍"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__()
        if in_channels <= 0 or out_channels <= 0:
            raise ValueError("channel counts must be positive")
        self.stride = stride
        self.padding = kernel_size // 2
        self.output_padding = stride - 1
        self.weight = nn.Parameter(torch.empty(in_channels, out_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels))
        _fan_in_uniform_(self.weight, self.bias, out_channels * kernel_size * kernel_size)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d_transpose(
            x, self.weight, self.bias,
            stride=self.stride, padding=self.padding, output_padding=self.output_padding,
        )


class MaskedConv2d(nn.Module):
    """STRICT_PAST マスク付き畳み込み"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 5):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels))
        _fan_in_uniform_(self.weight, self.bias, in_channels * kernel_size * kernel_size)

    def masked_weight(self) -> Tensor:
        k = self.weight.shape[2]
        return self.weight * ops.causal_mask(k).to(dtype=self.weight.dtype, device=self.weight.device)

    def forward(self, x: Tensor) -> Tensor:
        return ops.masked_conv2d(x, self.weight, self.bias)

    def forward_patch(self, patch: Tensor) -> Tensor:
        """k×k パッチ (N, C, k, k) の中心サイトでの出力 (N, C_out, 1, 1)"""
        k = self.weight.shape[2]
        if patch.dim() != 4 or patch.shape[2] != k or patch.shape[3] != k:
            raise ShapeError(f"expected a (N, C, {k}, {k}) patch: {tuple(patch.shape)}")
        return ops.conv2d(patch, self.masked_weight(), self.bias)


class LeakyReLU(nn.Module):
    def __init__(self, slope: float = LEAKY_RELU_SLOPE):
        super().__init__()
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(x, self.slope)


class NonNegativeParametrizer(nn.Module):
    """
    非負パラメータの再パラメータ化

    平方根を保持し、使用時に二乗する。下限 minimum を LowerBound で保証する。
    """

    def __init__(self, minimum: float = 0.0, reparam_offset: float = 2 ** -18):
        super().__init__()
        self.minimum = float(minimum)
        self.pedestal = float(reparam_offset) ** 2
        self.bound = (self.minimum + self.pedestal) ** 0.5

    def init(self, x: Tensor) -> Tensor:
        return torch.sqrt(torch.clamp(x + self.pedestal, min=self.pedestal))

    def forward(self, x: Tensor) -> Tensor:
        return ops.lower_bound(x, self.bound) ** 2 - self.pedestal


class GDN(nn.Module):
    """GDN / IGDN 層（beta ≥ beta_min, gamma ≥ 0）"""

    def __init__(
        self,
        channels: int,
        inverse: bool = False,
        beta_min: float = GDN_BETA_MIN,
        gamma_init: float = GDN_GAMMA_INIT,
    ):
        super().__init__()
        self.inverse = bool(inverse)
        self.beta_reparam = NonNegativeParametrizer(minimum=beta_min)
        self.gamma_reparam = NonNegativeParametrizer()
        self.beta = nn.Parameter(self.beta_reparam.init(torch.ones(channels)))
        self.gamma = nn.Parameter(self.gamma_reparam.init(gamma_init * torch.eye(channels)))

    def effective_params(self):
        return self.beta_reparam(self.beta), self.gamma_reparam(self.gamma)

    def forward(self, x: Tensor) -> Tensor:
        beta, gamma = self.effective_params()
        return ops.gdn(x, beta, gamma, inverse=self.inverse)
