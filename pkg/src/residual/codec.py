"""
残差の逐次算術符号化

サイトをラスタ順にたどり、各サイトで
  1. 符号化済みサイトだけから CT_r を計算
  2. entropy_params を1回だけ評価
  3. チェーン順に成分ごとの64チャネルを符号化し、平均を更新
を行う。符号化側と復号側は同じ _code_sites を通るので、確率計算は完全に一致する。
"""
from __future__ import annotations

import logging
from typing import Callable, List, Tuple

import numpy as np
import torch
from torch import Tensor

from src.config.settings import CODING_TAIL_SCALES
from src.entropy import (
    RangeDecoder,
    RangeEncoder,
    decode_windowed,
    encode_windowed,
    tail_absorbed_pmf,
    window_bounds,
)
from src.errors import ShapeError
from src.nn.ops import to_nchw
from src.residual.config import BLOCK_CHANNELS, RESIDUAL_MAX, RESIDUAL_MIN
from src.residual.distributions import mixture_cdf
from src.residual.model import ResidualCoder, component_means

logger = logging.getLogger(__name__)

# (site, component, lo, pmf) -> 64チャネルぶんの値
SiteCoder = Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]


def site_window_pmf(pi: Tensor, mu: Tensor, s: Tensor, family: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    1サイト1成分の窓と PMF

    Args:
        pi: (K,)
        mu, s: (K, 64)

    Returns:
        (lo (64,), pmf (64, W))
    """
    pi, mu, s = pi.to(torch.float64), mu.to(torch.float64), s.to(torch.float64)
    center = (pi[:, None] * mu).sum(dim=0)
    extent = CODING_TAIL_SCALES * s.max(dim=0).values + (mu - center).abs().max(dim=0).values
    lo, width = window_bounds(center.numpy(), extent.numpy(), RESIDUAL_MIN, RESIDUAL_MAX)
    edges = torch.from_numpy(lo[:, None].astype(np.float64) + (np.arange(1, width, dtype=np.float64) - 0.5))
    inner = mixture_cdf(edges, pi[:, None, None], mu[:, :, None], s[:, :, None], family, dim=0)
    return lo, tail_absorbed_pmf(inner.numpy())


def _check_shapes(x_hat_int: np.ndarray, model: ResidualCoder) -> Tuple[int, int, int]:
    if x_hat_int.ndim != 3 or x_hat_int.shape[2] != model.config.channels:
        raise ShapeError(f"x_hat_int must be (H_b, W_b, {model.config.channels}): {x_hat_int.shape}")
    return x_hat_int.shape


@torch.no_grad()
def _code_sites(model: ResidualCoder, x_hat_int: np.ndarray, code: SiteCoder) -> np.ndarray:
    h, w, c = _check_shapes(x_hat_int, model)
    cfg = model.config
    k = cfg.context_kernel
    pad = k // 2

    u = model.recon_features(to_nchw(x_hat_int, torch.float64))
    inv_std = 1.0 / model.stats.std
    buf = torch.zeros(1, c, h + 2 * pad, w + 2 * pad, dtype=torch.float32)
    out = np.zeros((h, w, c), dtype=np.int64)

    for i in range(h):
        for j in range(w):
            ct = model.context_at(buf[:, :, i:i + k, j:j + k])
            params = model.entropy_params(u[:, :, i:i + 1, j:j + 1], ct)
            prior: List[Tensor] = []
            for comp in range(cfg.n_components):
                mu = component_means(params, comp, prior)[0, :, :, 0, 0]
                lo, pmf = site_window_pmf(
                    params.pi[0, comp, :, 0, 0], mu, params.s[0, comp, :, :, 0, 0], params.family
                )
                sl = slice(comp * BLOCK_CHANNELS, (comp + 1) * BLOCK_CHANNELS)
                out[i, j, sl] = code(i * w + j, comp, lo, pmf)
                prior.append(torch.from_numpy(out[i, j, sl].astype(np.float32)).view(1, BLOCK_CHANNELS, 1, 1))
            buf[0, :, i + pad, j + pad] = torch.from_numpy(out[i, j] * inv_std).to(torch.float32)
    return out


def encode_residual(r: np.ndarray, x_hat_int: np.ndarray, model: ResidualCoder) -> bytes:
    """
    残差 r (H_b, W_b, 64·n) を符号化する

    Raises:
        ShapeError: r と x̂ の形状が一致しない
        ValueError: 残差がアルファベット外
    """
    r = np.asarray(r, dtype=np.int64)
    x_hat_int = np.asarray(x_hat_int)
    if r.shape != x_hat_int.shape:
        raise ShapeError(f"residual {r.shape} and reconstruction {x_hat_int.shape} differ")
    if r.size and (r.min() < RESIDUAL_MIN or r.max() > RESIDUAL_MAX):
        raise ValueError(f"residual outside [{RESIDUAL_MIN}, {RESIDUAL_MAX}]")

    enc = RangeEncoder()
    flat = r.reshape(-1, r.shape[2])

    def _encode(site: int, comp: int, lo: np.ndarray, pmf: np.ndarray) -> np.ndarray:
        values = flat[site, comp * BLOCK_CHANNELS:(comp + 1) * BLOCK_CHANNELS]
        encode_windowed(enc, values, lo, pmf, RESIDUAL_MIN, RESIDUAL_MAX)
        return values

    _code_sites(model, x_hat_int, _encode)
    data = enc.finish()
    logger.debug(f"残差を符号化しました: {r.shape} → {len(data)} bytes")
    return data


def decode_residual(data: bytes, x_hat_int: np.ndarray, model: ResidualCoder) -> np.ndarray:
    """
    encode_residual の逆

    Raises:
        StreamCorrupt: ストリームが途中で終わった、または同期が崩れた
    """
    dec = RangeDecoder(data)

    def _decode(site: int, comp: int, lo: np.ndarray, pmf: np.ndarray) -> np.ndarray:
        return decode_windowed(dec, lo, pmf, RESIDUAL_MIN, RESIDUAL_MAX)

    return _code_sites(model, np.asarray(x_hat_int), _decode)


def _require_direct(model: ResidualCoder) -> None:
    if not model.config.direct:
        raise ValueError("direct mode needs a residual coder configured with direct=True")


def ablation_direct_mode(x: np.ndarray, model: ResidualCoder) -> bytes:
    """x̂ = 0、r = x としてラプラス分布で DCT画像を直接符号化する"""
    _require_direct(model)
    x = np.asarray(x, dtype=np.int64)
    return encode_residual(x, np.zeros_like(x), model)


def inverse_direct_mode(data: bytes, shape: Tuple[int, int, int], model: ResidualCoder) -> np.ndarray:
    _require_direct(model)
    return decode_residual(data, np.zeros(shape, dtype=np.int64), model)
