"""
潜在表現のレート推定

ŷ はガウス分布、ẑ はロジスティック分布を単位幅のビンで積分した確率で評価する。
1シンボルあたりの確率は 2^-16 を下限とする。
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import torch
from torch import Tensor

from src.lossy.model import LatentBundle
from src.nn import QuantMode
from src.nn.ops import lower_bound

PROB_FLOOR = 2.0 ** -16


def standard_normal_cdf(x: Tensor) -> Tensor:
    # erfc で裾の精度を保つ
    return 0.5 * torch.erfc(-x / math.sqrt(2.0))


def gaussian_bin_prob(v: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """P(v) = Φ((v+.5-μ)/σ) - Φ((v-.5-μ)/σ)（対称性を使って右裾側で評価）"""
    d = torch.abs(v - mu)
    return standard_normal_cdf((0.5 - d) / sigma) - standard_normal_cdf((-0.5 - d) / sigma)


def logistic_bin_prob(v: Tensor, loc: Tensor, scale: Tensor) -> Tensor:
    d = torch.abs(v - loc)
    return torch.sigmoid((0.5 - d) / scale) - torch.sigmoid((-0.5 - d) / scale)


def bits_from_prob(p: Tensor) -> Tensor:
    return -torch.log2(lower_bound(p, PROB_FLOOR))


def rate_estimate(bundle: LatentBundle, mode: Optional[QuantMode] = None) -> Tuple[Tensor, Tensor]:
    """
    R_y, R_z（ビット数の合計）

    Args:
        mode: 指定した場合は bundle の量子化モードと一致している必要がある
    """
    if mode is not None and QuantMode(mode) != bundle.mode:
        raise ValueError(f"bundle was quantized with {bundle.mode.value}, not {QuantMode(mode).value}")
    r_y = bits_from_prob(gaussian_bin_prob(bundle.y_hat, bundle.mu_y, bundle.sigma_y)).sum()
    loc = bundle.z_loc.view(1, -1, 1, 1)
    scale = bundle.z_scale.view(1, -1, 1, 1)
    r_z = bits_from_prob(logistic_bin_prob(bundle.z_hat, loc, scale)).sum()
    return r_y, r_z
