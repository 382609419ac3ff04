"""
非可逆変換符号化器（ハイパープライア付き）

解析変換 g_a: 正規化DCT画像 → y（空間 1/4）
合成変換 g_s: ŷ → x̂（正規化空間）
ハイパー解析 h_a: y → z（さらに 1/4）
ハイパー合成 h_s: ẑ → (μ_y, σ_y)
ẑ の事前分布はチャネルごとのロジスティック分布。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from src.errors import ShapeError
from src.lossy.config import LossyConfig
from src.nn import GDN, Conv2d, ConvTranspose2d, LeakyReLU, QuantMode, quantize

logger = logging.getLogger(__name__)

# softplus(0.5413) ≈ 1.0
_Z_SCALE_INIT = 0.5413


@dataclass
class LatentBundle:
    """量子化済み潜在表現と、その分布パラメータ"""
    y: Tensor
    y_hat: Tensor
    z: Tensor
    z_hat: Tensor
    mu_y: Tensor
    sigma_y: Tensor
    z_loc: Tensor
    z_scale: Tensor
    mode: QuantMode


class LossyCoder(nn.Module):
    def __init__(self, config: LossyConfig):
        super().__init__()
        self.config = config
        c, m, n = config.input_channels, config.latent_channels, config.hyper_channels
        k1, k2, k3 = config.analysis_kernels
        kh = config.hyper_kernel

        self.g_a = nn.Sequential(
            Conv2d(c, m, k1, stride=2),
            GDN(m),
            Conv2d(m, m, k2, stride=2),
            GDN(m),
            Conv2d(m, m, k3, stride=1),
        )
        self.g_s = nn.Sequential(
            ConvTranspose2d(m, m, k3, stride=1),
            GDN(m, inverse=True),
            ConvTranspose2d(m, m, k2, stride=2),
            GDN(m, inverse=True),
            ConvTranspose2d(m, c, k1, stride=2),
        )
        self.h_a = nn.Sequential(
            Conv2d(m, n, kh, stride=2),
            LeakyReLU(),
            Conv2d(n, n, kh, stride=2),
        )
        self.h_s = nn.Sequential(
            ConvTranspose2d(n, n, kh, stride=2),
            LeakyReLU(),
            ConvTranspose2d(n, 2 * m, kh, stride=2),
        )
        self.z_loc = nn.Parameter(torch.zeros(n))
        self.z_scale_raw = nn.Parameter(torch.full((n,), _Z_SCALE_INIT))

    # --- 変換 ---

    def _check_input(self, x: Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeError(
                f"expected (N, {self.config.input_channels}, H, W) input, got {tuple(x.shape)}"
            )
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"spatial size must be a multiple of 4: {tuple(x.shape[2:])}")

    def analysis(self, x: Tensor) -> Tensor:
        self._check_input(x)
        return self.g_a(x)

    def synthesis(self, y_hat: Tensor) -> Tensor:
        if y_hat.dim() != 4 or y_hat.shape[1] != self.config.latent_channels:
            raise ShapeError(f"expected (N, {self.config.latent_channels}, h, w) latents, got {tuple(y_hat.shape)}")
        return self.g_s(y_hat)

    def hyper_analysis(self, y: Tensor) -> Tensor:
        if y.dim() != 4 or y.shape[1] != self.config.latent_channels:
            raise ShapeError(f"expected (N, {self.config.latent_channels}, h, w) latents, got {tuple(y.shape)}")
        if y.shape[2] % 4 or y.shape[3] % 4:
            raise ShapeError(f"latent size must be a multiple of 4: {tuple(y.shape[2:])}")
        return self.h_a(y)

    def hyper_synthesis(self, z_hat: Tensor) -> Tuple[Tensor, Tensor]:
        """ẑ から (μ_y, σ_y)。σ_y = floor + softplus(·)"""
        if z_hat.dim() != 4 or z_hat.shape[1] != self.config.hyper_channels:
            raise ShapeError(f"expected (N, {self.config.hyper_channels}, h, w) hyper-latents, got {tuple(z_hat.shape)}")
        out = self.h_s(z_hat)
        mu, raw = out.chunk(2, dim=1)
        return mu, self.config.scale_floor + F.softplus(raw)

    def z_prior(self) -> Tuple[Tensor, Tensor]:
        """ẑ のチャネルごとのロジスティック分布 (loc, scale)"""
        return self.z_loc, self.config.scale_floor + F.softplus(self.z_scale_raw)

    def _quantize(self, t: Tensor, mode: QuantMode, generator: Optional[torch.Generator]) -> Tensor:
        q = quantize(t, mode, generator)
        if mode != QuantMode.NOISE:
            bound = float(self.config.latent_bound)
            q = torch.clamp(q, -bound, bound)
        return q

    def forward(
        self, x: Tensor, mode: QuantMode = QuantMode.NOISE, generator: Optional[torch.Generator] = None
    ) -> Tuple[LatentBundle, Tensor]:
        """
        Returns:
            (LatentBundle, x̂_norm)
        """
        mode = QuantMode(mode)
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        z_hat = self._quantize(z, mode, generator)
        mu_y, sigma_y = self.hyper_synthesis(z_hat)
        y_hat = self._quantize(y, mode, generator)
        x_hat = self.synthesis(y_hat)
        z_loc, z_scale = self.z_prior()
        bundle = LatentBundle(
            y=y, y_hat=y_hat, z=z, z_hat=z_hat,
            mu_y=mu_y, sigma_y=sigma_y, z_loc=z_loc, z_scale=z_scale, mode=mode,
        )
        return bundle, x_hat
