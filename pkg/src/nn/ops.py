"""
ニューラルネット演算（PyTorch autograd 上の関数群）

畳み込み・転置畳み込み・マスク付き畳み込み・Leaky ReLU・GDN/IGDN・量子化を提供する。
形状の不整合は ShapeError を送出する。
"""
from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from src.config.settings import LEAKY_RELU_SLOPE, NN_DEBUG_FINITE
from src.errors import ShapeError

STRICT_PAST = "STRICT_PAST"


class QuantMode(str, Enum):
    NOISE = "NOISE"
    ROUND = "ROUND"
    ROUND_STE = "ROUND_STE"


def check_finite(t: Tensor, name: str) -> Tensor:
    """TLRC_NN_DEBUG_FINITE=1 のとき NaN/Inf を検出して例外にする"""
    if NN_DEBUG_FINITE and not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite values after {name}")
    return t


def _check_4d(x: Tensor, name: str) -> None:
    if x.dim() != 4:
        raise ShapeError(f"{name} expects a 4-D (N, C, H, W) tensor: {tuple(x.shape)}")


def _check_stride(stride: int) -> None:
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2: {stride}")


def conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """相互相関。weight は (C_out, C_in, k, k)"""
    _check_4d(x, "conv2d")
    _check_stride(stride)
    if weight.dim() != 4 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d weight {tuple(weight.shape)} does not match input channels {x.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d bias shape {tuple(bias.shape)} != ({weight.shape[0]},)")
    return check_finite(F.conv2d(x, weight, bias, stride=stride, padding=padding), "conv2d")


def conv2d_transpose(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """
    conv2d の随伴

    weight は conv2d と同じ並び (C_in_of_conv, C_out_of_conv, k, k) で、
    入力チャネル数は weight.shape[0]、出力は weight.shape[1]。
    """
    _check_4d(x, "conv2d_transpose")
    _check_stride(stride)
    if weight.dim() != 4 or weight.shape[0] != x.shape[1]:
        raise ShapeError(
            f"conv2d_transpose weight {tuple(weight.shape)} does not match input channels {x.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"conv2d_transpose bias shape {tuple(bias.shape)} != ({weight.shape[1]},)")
    out = F.conv_transpose2d(
        x, weight, bias, stride=stride, padding=padding, output_padding=output_padding
    )
    return check_finite(out, "conv2d_transpose")


def leaky_relu(x: Tensor, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    return F.leaky_relu(x, negative_slope=slope)


def gdn(x: Tensor, beta: Tensor, gamma: Tensor, inverse: bool = False) -> Tensor:
    """
    y_i = x_i / sqrt(beta_i + Σ_j gamma_ij x_j²)（inverse=True なら乗算）

    beta, gamma は非負化済みの実効値を渡す。
    """
    _check_4d(x, "gdn")
    c = x.shape[1]
    if beta.shape != (c,) or gamma.shape != (c, c):
        raise ShapeError(f"gdn parameters {tuple(beta.shape)}, {tuple(gamma.shape)} do not match {c} channels")
    norm = F.conv2d(x * x, gamma.reshape(c, c, 1, 1), beta)
    out = x * torch.sqrt(norm) if inverse else x * torch.rsqrt(norm)
    return check_finite(out, "igdn" if inverse else "gdn")


def igdn(x: Tensor, beta: Tensor, gamma: Tensor) -> Tensor:
    return gdn(x, beta, gamma, inverse=True)


def causal_mask(kernel_size: int, mask_type: str = STRICT_PAST) -> Tensor:
    """中心とそれ以降（ラスタ順）を 0 にした (k, k) マスク"""
    if mask_type != STRICT_PAST:
        raise ValueError(f'Invalid "mask_type" value "{mask_type}"')
    if kernel_size % 2 != 1:
        raise ShapeError(f"masked convolution needs an odd kernel size: {kernel_size}")
    mask = torch.ones(kernel_size, kernel_size)
    c = kernel_size // 2
    mask[c, c:] = 0
    mask[c + 1:, :] = 0
    return mask


def masked_conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, mask_type: str = STRICT_PAST
) -> Tensor:
    """出力 (i, j) がラスタ順で (i, j) より前のサイトだけに依存する畳み込み（same padding）"""
    _check_4d(x, "masked_conv2d")
    if weight.dim() != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"masked_conv2d needs a square kernel: {tuple(weight.shape)}")
    k = weight.shape[2]
    mask = causal_mask(k, mask_type).to(dtype=weight.dtype, device=weight.device)
    return conv2d(x, weight * mask, bias, stride=1, padding=k // 2)


class _RoundSTE(torch.autograd.Function):
    """順伝播は偶数丸め、逆伝播は恒等"""

    @staticmethod
    def forward(ctx, x):
        return torch.round(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output


def quantize(x: Tensor, mode: QuantMode, generator: Optional[torch.Generator] = None) -> Tensor:
    """
    量子化

    NOISE: 一様ノイズ u ∈ [-0.5, 0.5) を加算（学習時の緩和）
    ROUND: 最近接整数（偶数丸め）
    ROUND_STE: ROUND と同じ値で勾配は恒等
    """
    mode = QuantMode(mode)
    if mode == QuantMode.NOISE:
        noise = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) - 0.5
        return x + noise
    if mode == QuantMode.ROUND:
        return torch.round(x)
    return _RoundSTE.apply(x)


# ============================================================
# 下限付きパラメータ
# ============================================================

class LowerBoundFunction(torch.autograd.Function):
    """max(x, bound)。下限に向かう方向の勾配だけを通す"""

    @staticmethod
    def forward(ctx, x, bound):
        ctx.save_for_backward(x, bound)
        return torch.max(x, bound)

    @staticmethod
    def backward(ctx, grad_output):
        x, bound = ctx.saved_tensors
        pass_through = (x >= bound) | (grad_output < 0)
        return pass_through * grad_output, None


def lower_bound(x: Tensor, bound: float) -> Tensor:
    return LowerBoundFunction.apply(x, torch.tensor(float(bound), dtype=x.dtype, device=x.device))


# ============================================================
# numpy (H, W, C) ⇔ torch (1, C, H, W)
# ============================================================

def to_nchw(x: np.ndarray, dtype: torch.dtype = torch.float32) -> Tensor:
    """チャネル最後の配列 (H, W, C) をバッチ1のテンソル (1, C, H, W) にする"""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) array: {x.shape}")
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def to_hwc(t: Tensor) -> np.ndarray:
    """(1, C, H, W) テンソルを float64 の (H, W, C) 配列にする"""
    if t.dim() != 4 or t.shape[0] != 1:
        raise ShapeError(f"expected a (1, C, H, W) tensor: {tuple(t.shape)}")
    return t.detach()[0].permute(1, 2, 0).to(torch.float64).cpu().numpy()
