"""
残差の離散分布

ロジスティック混合とラプラス分布を単位幅のビンで積分する。アルファベットの両端
（既定 ±4095）のシンボルがそれぞれ左右の裾を吸収するので、全シンボルの確率和は 1。
"""
from __future__ import annotations

import torch
from torch import Tensor

from src.residual.config import RESIDUAL_MAX, RESIDUAL_MIN


def logistic_cdf(t: Tensor) -> Tensor:
    return torch.sigmoid(t)


def laplace_cdf(t: Tensor) -> Tensor:
    """標準ラプラス分布（位置0, 尺度1）の CDF"""
    return 0.5 + 0.5 * torch.sign(t) * (-torch.expm1(-torch.abs(t)))


CDFS = {"logistic": logistic_cdf, "laplace": laplace_cdf}


def _cdf(family: str):
    try:
        return CDFS[family]
    except KeyError:
        raise ValueError(f'Invalid "family" value "{family}"') from None


def mixture_cdf(x: Tensor, pi: Tensor, mu: Tensor, s: Tensor, family: str = "logistic", dim: int = 0) -> Tensor:
    """
    F(x) = Σ_k π_k F_0((x - μ_k) / s_k)

    x は混合軸 dim を持たない形で渡し、pi, mu, s と dim 以外で放送できること。
    """
    cdf = _cdf(family)
    return (pi * cdf((x.unsqueeze(dim) - mu) / s)).sum(dim=dim)


def mixture_pmf(
    v: Tensor,
    pi: Tensor,
    mu: Tensor,
    s: Tensor,
    family: str = "logistic",
    dim: int = 0,
    alphabet_min: int = RESIDUAL_MIN,
    alphabet_max: int = RESIDUAL_MAX,
) -> Tensor:
    """
    P(v) = F(v + 0.5) - F(v - 0.5)

    v = alphabet_min では F(v - 0.5) を 0、v = alphabet_max では F(v + 0.5) を 1 とする。
    """
    v = v.to(mu.dtype)
    upper = mixture_cdf(v + 0.5, pi, mu, s, family, dim)
    lower = mixture_cdf(v - 0.5, pi, mu, s, family, dim)
    upper = torch.where(v >= alphabet_max, torch.ones_like(upper), upper)
    lower = torch.where(v <= alphabet_min, torch.zeros_like(lower), lower)
    return upper - lower


def logistic_mixture_pmf(
    v: Tensor,
    pi: Tensor,
    mu: Tensor,
    s: Tensor,
    alphabet_min: int = RESIDUAL_MIN,
    alphabet_max: int = RESIDUAL_MAX,
) -> Tensor:
    """
    離散化ロジスティック混合の確率

    pi, mu, s は先頭軸が混合成分 K。v は残りの軸と放送できる整数値テンソル。
    """
    return mixture_pmf(v, pi, mu, s, "logistic", 0, alphabet_min, alphabet_max)


def laplace_pmf(
    v: Tensor,
    mu: Tensor,
    b: Tensor,
    alphabet_min: int = RESIDUAL_MIN,
    alphabet_max: int = RESIDUAL_MAX,
) -> Tensor:
    """離散化ラプラス分布（単一成分）の確率"""
    mu = torch.as_tensor(mu, dtype=torch.float64) if not isinstance(mu, Tensor) else mu
    b = torch.as_tensor(b, dtype=mu.dtype) if not isinstance(b, Tensor) else b
    one = torch.ones((1,) + tuple(mu.shape), dtype=mu.dtype, device=mu.device)
    return mixture_pmf(v, one, mu.unsqueeze(0), b.unsqueeze(0), "laplace", 0, alphabet_min, alphabet_max)
