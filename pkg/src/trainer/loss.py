"""
学習損失

    loss = R_yz + R_r + λ·D

R はいずれも1要素あたりのビット数、D は逆正規化した係数での平均二乗誤差。
LOSSY_PRETRAIN では R_r を含めない。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch
from torch import Tensor

from src.dct.image import NormStats
from src.lossy.latent_codec import coefficient_bounds
from src.lossy.rate import rate_estimate
from src.nn import QuantMode
from src.trainer.config import TrainPhase
from src.transcoder.model import Branch

Number = Union[float, Tensor]


def joint_loss(r_yz: Number, r_r: Number, d_lossy: Number, lmbda: float,
               phase: TrainPhase = TrainPhase.JOINT) -> Number:
    if TrainPhase(phase) == TrainPhase.LOSSY_PRETRAIN:
        return r_yz + lmbda * d_lossy
    return r_yz + r_r + lmbda * d_lossy


@dataclass
class LossTerms:
    r_yz: Tensor
    r_r: Tensor
    d: Tensor
    total: Tensor

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("r_yz", "r_r", "d", "total")}


def _stats_tensors(stats: NormStats, dtype: torch.dtype = torch.float32):
    mean = torch.as_tensor(stats.mean, dtype=dtype).view(1, -1, 1, 1)
    std = torch.as_tensor(stats.std, dtype=dtype).view(1, -1, 1, 1)
    return mean, std


def branch_loss(
    branch: Branch,
    batch: np.ndarray,
    lmbda: float,
    phase: TrainPhase = TrainPhase.JOINT,
    generator: Optional[torch.Generator] = None,
) -> LossTerms:
    """
    1ブランチぶんのミニバッチ損失

    Args:
        batch: (N, T, T, 64·n) の整数タイル
    """
    x_int = torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2))).to(torch.float32)
    mean, std = _stats_tensors(branch.stats)
    zero = x_int.new_zeros(())
    elements = x_int.numel()

    if branch.lossy is None:
        r_yz, d = zero, zero
        x_hat_int = torch.zeros_like(x_int)
    else:
        bundle, x_hat_norm = branch.lossy((x_int - mean) / std, QuantMode.NOISE, generator)
        r_y, r_z = rate_estimate(bundle)
        r_yz = (r_y + r_z) / elements
        x_hat = x_hat_norm * std + mean
        d = torch.mean((x_hat - x_int) ** 2)
        lo, hi = coefficient_bounds(branch.channels)
        lo_t = torch.as_tensor(lo, dtype=torch.float32).view(1, -1, 1, 1)
        hi_t = torch.as_tensor(hi, dtype=torch.float32).view(1, -1, 1, 1)
        x_hat_int = torch.clamp(torch.round(x_hat.detach()), lo_t, hi_t)

    if TrainPhase(phase) == TrainPhase.LOSSY_PRETRAIN:
        r_r = zero
    else:
        r_r = branch.residual(x_hat_int, x_int - x_hat_int) / elements
    return LossTerms(r_yz=r_yz, r_r=r_r, d=d, total=joint_loss(r_yz, r_r, d, lmbda, phase))
