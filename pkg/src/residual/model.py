"""
残差符号化器

u      : x̂ の正規化から取り出す再構成特徴（3×3 畳み込み2層）
CT_r   : 符号化済みの残差サイトから取り出すコンテキスト（マスク付き 5×5 + 1×1）
params : concat(u, CT_r) → 1×1 畳み込み3層 → 成分ごとの混合分布パラメータ

成分チェーン（Y → Cr → Cb）では、後の成分の平均を前の成分の同じ周波数チャネルの
残差で更新する。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
from torch import Tensor, nn

from src.dct.image import NormStats
from src.errors import ComponentOrderViolation, ShapeError, StatsMismatch
from src.nn import Conv2d, LeakyReLU, MaskedConv2d
from src.nn.ops import lower_bound
from src.residual.config import BLOCK_CHANNELS, ResidualConfig
from src.residual.distributions import mixture_pmf

logger = logging.getLogger(__name__)

PROB_FLOOR = 2.0 ** -16


@dataclass
class MixtureParams:
    """
    成分ごと・サイトごとの混合分布パラメータ

    pi:    (N, n, K, H, W)          64チャネルで共有する混合重み
    mu:    (N, n, K, 64, H, W)
    log_s: (N, n, K, 64, H, W)      クランプ済み
    s:     (N, n, K, 64, H, W)      floor + exp(log_s)
    beta:  (N, n, 3, K, 64, H, W)   [β_Y, β_Cr, β_Cb]、tanh で (-1, 1)
    """
    pi: Tensor
    mu: Tensor
    log_s: Tensor
    s: Tensor
    beta: Tensor
    family: str = "logistic"

    @property
    def n_components(self) -> int:
        return int(self.mu.shape[1])

    @property
    def mixtures(self) -> int:
        return int(self.mu.shape[2])


def component_means(params: MixtureParams, index: int, prior: Sequence[Tensor]) -> Tensor:
    """
    チェーン上 index 番目の成分の平均 (N, K, 64, H, W)

    prior には index より前の成分の残差 (N, 64, H, W) をチェーン順に渡す。
    2番目: μ += β_Y·r_0、3番目: μ += β_Cr·r_0 + β_Cb·r_1
    """
    if index >= params.n_components:
        raise ShapeError(f"component {index} is outside a chain of {params.n_components}")
    if len(prior) < index or any(p is None for p in prior[:index]):
        raise ComponentOrderViolation(
            f"component {index} needs the residuals of the {index} earlier component(s)"
        )
    mu = params.mu[:, index]
    if index == 1:
        mu = mu + params.beta[:, 1, 0] * prior[0].unsqueeze(1)
    elif index == 2:
        mu = (mu
              + params.beta[:, 2, 1] * prior[0].unsqueeze(1)
              + params.beta[:, 2, 2] * prior[1].unsqueeze(1))
    return mu


def autoregress_means(
    params: MixtureParams, r_y: Tensor, r_cr: Optional[Tensor] = None
) -> Tuple[Tensor, Optional[Tensor]]:
    """
    Cr と Cb の平均を更新した値を返す（μ_Y は変更しない）

    2成分チェーン（Cr → Cb）では r_y に先頭成分の残差を渡し、2つ目の戻り値は None。

    Raises:
        ComponentOrderViolation: 3成分チェーンで r_cr がまだない
    """
    if params.n_components < 2:
        raise ShapeError("cross-component update needs at least two components")
    second = component_means(params, 1, [r_y])
    if params.n_components < 3:
        return second, None
    return second, component_means(params, 2, [r_y, r_cr])


def residual_rate(r: Tensor, params: MixtureParams) -> Tensor:
    """
    -log2 p(r) の総和（ビット）

    r は (N, 64·n, H, W) の整数値。成分ごとに前の成分の残差で平均を更新してから評価する。
    """
    n = params.n_components
    if r.dim() != 4 or r.shape[1] != BLOCK_CHANNELS * n:
        raise ShapeError(f"residual must be (N, {BLOCK_CHANNELS * n}, H, W): {tuple(r.shape)}")
    total = r.new_zeros((), dtype=params.mu.dtype)
    prior: List[Tensor] = []
    for j in range(n):
        rj = r[:, j * BLOCK_CHANNELS:(j + 1) * BLOCK_CHANNELS].to(params.mu.dtype)
        mu = component_means(params, j, prior)
        pi = params.pi[:, j].unsqueeze(2)
        p = mixture_pmf(rj, pi, mu, params.s[:, j], params.family, dim=1)
        total = total + (-torch.log2(lower_bound(p, PROB_FLOOR))).sum()
        prior.append(rj)
    return total


class ResidualCoder(nn.Module):
    def __init__(self, config: ResidualConfig):
        super().__init__()
        self.config = config
        c, f, h = config.channels, config.feature_channels, config.hidden_channels
        self.recon = nn.Sequential(
            Conv2d(c, f, 3),
            LeakyReLU(),
            Conv2d(f, f, 3),
            LeakyReLU(),
        )
        self.context = MaskedConv2d(c, f, config.context_kernel)
        self.context_act = LeakyReLU()
        self.context_proj = Conv2d(f, f, 1)
        self.params_net = nn.Sequential(
            Conv2d(2 * f, h, 1),
            LeakyReLU(),
            Conv2d(h, h, 1),
            LeakyReLU(),
            Conv2d(h, config.n_components * config.params_per_component, 1),
        )
        self.stats: Optional[NormStats] = None

    # --- 正規化統計 ---

    def set_stats(self, stats: NormStats) -> None:
        if stats.channels != self.config.channels:
            raise StatsMismatch(f"stats have {stats.channels} channels, coder expects {self.config.channels}")
        self.stats = stats

    def _stats_tensors(self, ref: Tensor) -> Tuple[Tensor, Tensor]:
        if self.stats is None:
            raise StatsMismatch("residual coder has no normalisation statistics")
        mean = torch.as_tensor(self.stats.mean, dtype=torch.float64, device=ref.device).view(1, -1, 1, 1)
        std = torch.as_tensor(self.stats.std, dtype=torch.float64, device=ref.device).view(1, -1, 1, 1)
        return mean, std

    def _check_channels(self, t: Tensor, name: str) -> None:
        if t.dim() != 4 or t.shape[1] != self.config.channels:
            raise ShapeError(f"{name} must be (N, {self.config.channels}, H, W): {tuple(t.shape)}")

    def scale_residual(self, r: Tensor) -> Tensor:
        """コンテキスト入力用に残差をチャネルの標準偏差で割る"""
        self._check_channels(r, "residual")
        _, std = self._stats_tensors(r)
        return (r.to(torch.float64) / std).to(torch.float32)

    # --- 特徴量 ---

    def recon_features(self, x_hat_int: Tensor) -> Tensor:
        """u = recon(normalize(x̂_int))"""
        self._check_channels(x_hat_int, "x_hat_int")
        mean, std = self._stats_tensors(x_hat_int)
        x = ((x_hat_int.to(torch.float64) - mean) / std).to(torch.float32)
        return self.recon(x)

    def context_features(self, r_scaled: Tensor) -> Tensor:
        """CT_r。出力 (i, j) はラスタ順で (i, j) より前の残差だけに依存する"""
        self._check_channels(r_scaled, "r_scaled")
        return self.context_proj(self.context_act(self.context(r_scaled)))

    def context_at(self, patch: Tensor) -> Tensor:
        """1サイトぶんの CT_r。patch は中心が対象サイトの k×k 窓"""
        return self.context_proj(self.context_act(self.context.forward_patch(patch)))

    def entropy_params(self, u: Tensor, ct: Tensor) -> MixtureParams:
        if u.shape != ct.shape or u.dim() != 4 or u.shape[1] != self.config.feature_channels:
            raise ShapeError(f"u {tuple(u.shape)} and CT_r {tuple(ct.shape)} must be aligned feature maps")
        cfg = self.config
        out = self.params_net(torch.cat((u, ct), dim=1))
        n_batch, _, h, w = out.shape
        k, n = cfg.effective_mixtures, cfg.n_components
        out = out.view(n_batch, n, cfg.params_per_component, h, w)
        pi = torch.softmax(out[:, :, :k], dim=2)
        rest = out[:, :, k:].reshape(n_batch, n, 5, k, BLOCK_CHANNELS, h, w)
        log_s = torch.clamp(rest[:, :, 1], min=cfg.log_scale_min)
        return MixtureParams(
            pi=pi,
            mu=rest[:, :, 0],
            log_s=log_s,
            s=cfg.scale_floor + torch.exp(log_s),
            beta=torch.tanh(rest[:, :, 2:5]),
            family=cfg.family,
        )

    def forward(self, x_hat_int: Tensor, r: Tensor) -> Tensor:
        """学習用: 残差のビット数（r は定数として扱う）"""
        r = r.detach()
        u = self.recon_features(x_hat_int.detach())
        ct = self.context_features(self.scale_residual(r))
        return residual_rate(r, self.entropy_params(u, ct))
