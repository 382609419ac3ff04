"""
窓付き符号化

大きなアルファベット（残差 ±4095、潜在値 ±255）を、分布パラメータから決まる
窓 [lo, lo+W-1] の上で符号化する。窓の両端は分布の裾を吸収し、窓外の値は
端のシンボルに続けて端からのオフセットを生ビットで送る（エスケープ）。
窓がアルファベット全体を覆う場合は、裾を吸収した通常の PMF と一致する。
"""
from __future__ import annotations

from typing import Tuple

import numpy as np

from src.config.settings import CODING_MAX_HALF_WIDTH, CODING_TAIL_SCALES
from src.entropy.cdf import quantize_cdf_batch
from src.entropy.range_coder import RangeDecoder, RangeEncoder
from src.errors import StreamCorrupt


def scale_extent(scale: np.ndarray, tail_scales: float = CODING_TAIL_SCALES) -> np.ndarray:
    """スケールから窓の片側に必要な広がりを求める"""
    return tail_scales * np.asarray(scale, dtype=np.float64)


def window_bounds(
    center: np.ndarray,
    extent: np.ndarray,
    alphabet_min: int,
    alphabet_max: int,
    max_half_width: int = CODING_MAX_HALF_WIDTH,
) -> Tuple[np.ndarray, int]:
    """
    各シンボルの窓の下端と、全シンボル共通の窓幅 W を決める

    Args:
        center: 分布の中心（実数）
        extent: 中心から片側に覆う広がり。片側幅は ceil(extent + |center - round(center)|)

    Returns:
        (lo, W)。lo は int64 配列で、alphabet_min ≤ lo かつ lo + W - 1 ≤ alphabet_max
    """
    center = np.asarray(center, dtype=np.float64)
    extent = np.asarray(extent, dtype=np.float64)
    alphabet = alphabet_max - alphabet_min + 1
    c = np.rint(center).astype(np.int64)
    half = np.ceil(extent + np.abs(center - c))
    half = np.clip(half, 2, max_half_width).astype(np.int64)
    width = int(min(2 * int(half.max(initial=2)) + 1, alphabet))
    lo = np.clip(c - (width - 1) // 2, alphabet_min, alphabet_max - width + 1)
    return lo.astype(np.int64), width


def window_grid(lo: np.ndarray, width: int) -> np.ndarray:
    """(n,) の下端から (n, W) のシンボル値を作る"""
    return np.asarray(lo, dtype=np.int64)[..., None] + np.arange(width, dtype=np.int64)


def tail_absorbed_pmf(inner_cdf: np.ndarray) -> np.ndarray:
    """
    窓内部の境界 lo+0.5, ..., hi-0.5 における CDF 値 (n, W-1) から窓上の PMF (n, W) を作る

    左端は左裾 F(lo+0.5)、右端は右裾 1 - F(hi-0.5) を受け持つ。
    """
    inner_cdf = np.asarray(inner_cdf, dtype=np.float64)
    n = inner_cdf.shape[0]
    edges = np.concatenate((np.zeros((n, 1)), inner_cdf, np.ones((n, 1))), axis=1)
    return np.maximum(np.diff(edges, axis=1), 0.0)


def _normalized(pmf: np.ndarray) -> np.ndarray:
    pmf = np.maximum(np.asarray(pmf, dtype=np.float64), 0.0)
    return pmf / pmf.sum(axis=1, keepdims=True)


def encode_windowed(
    enc: RangeEncoder,
    values: np.ndarray,
    lo: np.ndarray,
    pmf: np.ndarray,
    alphabet_min: int,
    alphabet_max: int,
) -> None:
    """
    値の列を窓付きで符号化する

    Args:
        values: (n,) 整数値
        lo: (n,) 窓の下端
        pmf: (n, W) 窓上の PMF（両端が裾を吸収したもの）
    """
    values = np.asarray(values, dtype=np.int64)
    lo = np.asarray(lo, dtype=np.int64)
    width = pmf.shape[1]
    cum = quantize_cdf_batch(_normalized(pmf))
    for i in range(values.shape[0]):
        v, low = int(values[i]), int(lo[i])
        if v < alphabet_min or v > alphabet_max:
            raise ValueError(f"value {v} outside alphabet [{alphabet_min}, {alphabet_max}]")
        high = low + width - 1
        idx = min(max(v - low, 0), width - 1)
        start = int(cum[i, idx])
        enc.encode(start, int(cum[i, idx + 1]) - start)
        if idx == 0:
            max_off = low - alphabet_min
            if max_off:
                enc.encode_bits(low - v, max_off.bit_length())
        elif idx == width - 1:
            max_off = alphabet_max - high
            if max_off:
                enc.encode_bits(v - high, max_off.bit_length())


def decode_windowed(
    dec: RangeDecoder,
    lo: np.ndarray,
    pmf: np.ndarray,
    alphabet_min: int,
    alphabet_max: int,
) -> np.ndarray:
    """encode_windowed の逆"""
    lo = np.asarray(lo, dtype=np.int64)
    width = pmf.shape[1]
    cum = quantize_cdf_batch(_normalized(pmf))
    out = np.empty(lo.shape[0], dtype=np.int64)
    for i in range(lo.shape[0]):
        low = int(lo[i])
        idx = dec.decode_index(cum[i])
        v = low + idx
        if idx == 0:
            max_off = low - alphabet_min
            if max_off:
                v = low - dec.decode_bits(max_off.bit_length())
        elif idx == width - 1:
            max_off = alphabet_max - (low + width - 1)
            if max_off:
                v = low + width - 1 + dec.decode_bits(max_off.bit_length())
        if v < alphabet_min or v > alphabet_max:
            raise StreamCorrupt(f"decoded value {v} outside alphabet")
        out[i] = v
    return out
