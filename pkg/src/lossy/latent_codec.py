"""
潜在表現の算術符号化と整数再構成

ẑ を先にチャネルごとのロジスティック事前分布で符号化し、復号側は ẑ から
ハイパー合成で (μ_y, σ_y) を再計算してから ŷ をガウス分布のビンで復号する。
"""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np
import torch
from torch import Tensor

from src.config.settings import LATENT_BOUND
from src.dct.image import DctImage, NormStats, denormalize
from src.entropy import (
    RangeDecoder,
    RangeEncoder,
    decode_windowed,
    encode_windowed,
    scale_extent,
    tail_absorbed_pmf,
    window_bounds,
)
from src.errors import ShapeError
from src.jpeg.types import AC_MAX, AC_MIN, DC_MAX, DC_MIN
from src.lossy.model import LatentBundle, LossyCoder
from src.lossy.rate import standard_normal_cdf
from src.nn import QuantMode

logger = logging.getLogger(__name__)


def gaussian_window_pmf(lo: np.ndarray, width: int, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """窓 [lo, lo+W-1] 上のガウス分布ビン確率（両端が裾を吸収）"""
    edges = lo[:, None].astype(np.float64) + (np.arange(1, width, dtype=np.float64) - 0.5)
    t = (torch.from_numpy(edges) - torch.from_numpy(mu)[:, None]) / torch.from_numpy(sigma)[:, None]
    return tail_absorbed_pmf(standard_normal_cdf(t).numpy())


def logistic_window_pmf(lo: np.ndarray, width: int, loc: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """窓 [lo, lo+W-1] 上のロジスティック分布ビン確率（両端が裾を吸収）"""
    edges = lo[:, None].astype(np.float64) + (np.arange(1, width, dtype=np.float64) - 0.5)
    t = (torch.from_numpy(edges) - torch.from_numpy(loc)[:, None]) / torch.from_numpy(scale)[:, None]
    return tail_absorbed_pmf(torch.sigmoid(t).numpy())


def _f64(t: Tensor) -> np.ndarray:
    return t.detach().to(torch.float64).cpu().numpy()


def _check_batch(t: Tensor, name: str) -> None:
    if t.dim() != 4 or t.shape[0] != 1:
        raise ShapeError(f"{name} must have shape (1, C, h, w): {tuple(t.shape)}")


def encode_latents(bundle: LatentBundle, latent_bound: int = LATENT_BOUND) -> Tuple[bytes, bytes]:
    """
    ROUND モードの潜在表現を (bytes_z, bytes_y) に符号化する

    ẑ はチャネル単位で同一分布、ŷ はサイトごとに (μ_y, σ_y)。
    """
    if bundle.mode == QuantMode.NOISE:
        raise ValueError("latents must be quantized with ROUND before coding")
    _check_batch(bundle.z_hat, "z_hat")
    _check_batch(bundle.y_hat, "y_hat")
    lo_a, hi_a = -latent_bound, latent_bound

    z_hat = _f64(bundle.z_hat)[0]
    loc, scale = _f64(bundle.z_loc), _f64(bundle.z_scale)
    enc = RangeEncoder()
    for c in range(z_hat.shape[0]):
        values = np.rint(z_hat[c]).astype(np.int64).reshape(-1)
        n = values.size
        lo, width = window_bounds(np.full(n, loc[c]), scale_extent(np.full(n, scale[c])), lo_a, hi_a)
        pmf = logistic_window_pmf(lo, width, np.full(n, loc[c]), np.full(n, scale[c]))
        encode_windowed(enc, values, lo, pmf, lo_a, hi_a)
    bytes_z = enc.finish()

    y_hat = _f64(bundle.y_hat)[0]
    mu, sigma = _f64(bundle.mu_y)[0], _f64(bundle.sigma_y)[0]
    enc = RangeEncoder()
    for c in range(y_hat.shape[0]):
        values = np.rint(y_hat[c]).astype(np.int64).reshape(-1)
        m, s = mu[c].reshape(-1), sigma[c].reshape(-1)
        lo, width = window_bounds(m, scale_extent(s), lo_a, hi_a)
        encode_windowed(enc, values, lo, gaussian_window_pmf(lo, width, m, s), lo_a, hi_a)
    bytes_y = enc.finish()
    return bytes_z, bytes_y


@torch.no_grad()
def decode_latents(
    bytes_z: bytes, bytes_y: bytes, model: LossyCoder, z_shape: Tuple[int, int]
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """
    Returns:
        (ẑ, ŷ, μ_y, σ_y)

    Raises:
        StreamCorrupt: ストリームが途中で終わった、または同期が崩れた
    """
    cfg = model.config
    lo_a, hi_a = -cfg.latent_bound, cfg.latent_bound
    hz, wz = z_shape
    n = hz * wz

    z_loc, z_scale = model.z_prior()
    loc, scale = _f64(z_loc), _f64(z_scale)
    dec = RangeDecoder(bytes_z)
    z = np.empty((cfg.hyper_channels, n), dtype=np.int64)
    for c in range(cfg.hyper_channels):
        lo, width = window_bounds(np.full(n, loc[c]), scale_extent(np.full(n, scale[c])), lo_a, hi_a)
        pmf = logistic_window_pmf(lo, width, np.full(n, loc[c]), np.full(n, scale[c]))
        z[c] = decode_windowed(dec, lo, pmf, lo_a, hi_a)
    z_hat = torch.from_numpy(z.reshape(1, cfg.hyper_channels, hz, wz)).to(torch.float32)

    mu_y, sigma_y = model.hyper_synthesis(z_hat)
    mu, sigma = _f64(mu_y)[0], _f64(sigma_y)[0]
    dec = RangeDecoder(bytes_y)
    y = np.empty(mu.shape, dtype=np.int64)
    for c in range(mu.shape[0]):
        m, s = mu[c].reshape(-1), sigma[c].reshape(-1)
        lo, width = window_bounds(m, scale_extent(s), lo_a, hi_a)
        pmf = gaussian_window_pmf(lo, width, m, s)
        y[c] = decode_windowed(dec, lo, pmf, lo_a, hi_a).reshape(mu.shape[1:])
    y_hat = torch.from_numpy(y[None]).to(torch.float32)
    return z_hat, y_hat, mu_y, sigma_y


def coefficient_bounds(channels: int) -> Tuple[np.ndarray, np.ndarray]:
    """チャネルごとの係数範囲（ジグザグ位置 0 が DC）"""
    lo = np.full(channels, AC_MIN, dtype=np.int64)
    hi = np.full(channels, AC_MAX, dtype=np.int64)
    lo[::64] = DC_MIN
    hi[::64] = DC_MAX
    return lo, hi


def reconstruct_int(x_hat_norm: np.ndarray, stats: NormStats) -> Tuple[DctImage, ...]:
    """
    正規化空間の再構成を整数DCT画像に戻す

    逆正規化 → 偶数丸め → JPEG係数範囲へのクランプ。64チャネルごとに1成分。

    Args:
        x_hat_norm: (H_b, W_b, 64·n) 配列
    """
    x = denormalize(np.asarray(x_hat_norm, dtype=np.float64), stats)
    if x.shape[-1] % 64:
        raise ShapeError(f"channel count must be a multiple of 64: {x.shape[-1]}")
    lo, hi = coefficient_bounds(x.shape[-1])
    ints = np.clip(np.rint(x), lo, hi).astype(np.int32)
    return tuple(
        DctImage(data=np.ascontiguousarray(ints[:, :, k:k + 64]), component_id=k // 64)
        for k in range(0, ints.shape[-1], 64)
    )
