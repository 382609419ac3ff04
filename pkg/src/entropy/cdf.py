"""
確率分布の整数CDF化

浮動小数点の PMF を合計 2^16 の整数幅に丸める。符号化はこの整数CDFだけを使うので、
可逆性は浮動小数点の再現性に依存しない。
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.errors import AlphabetTooLarge

PRECISION = 16
TOTAL = 1 << PRECISION
# 全シンボルに幅1を保証したうえで分配する余地
ALPHABET_GUARD = 16
MAX_ALPHABET = TOTAL - ALPHABET_GUARD
PMF_SUM_TOL = 1e-6


@dataclass(frozen=True)
class QuantizedCdf:
    """
    累積頻度表

    cumulative[0] = 0, cumulative[-1] = 2^16 の狭義単調増加列。
    シンボル値 v の区間は [cumulative[v - offset], cumulative[v - offset + 1])。
    """
    cumulative: np.ndarray
    offset: int = 0

    def __post_init__(self) -> None:
        cum = np.asarray(self.cumulative, dtype=np.int64)
        if cum.ndim != 1 or cum.size < 2 or cum[0] != 0 or cum[-1] != TOTAL:
            raise ValueError("cumulative counts must start at 0 and end at 2^16")
        if np.any(np.diff(cum) < 1):
            raise ValueError("cumulative counts must be strictly increasing")
        cum.setflags(write=False)
        object.__setattr__(self, "cumulative", cum)

    @property
    def size(self) -> int:
        return int(self.cumulative.size - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cumulative)

    def interval(self, value: int):
        """シンボル値の (start, width)"""
        i = int(value) - self.offset
        if not 0 <= i < self.size:
            raise ValueError(f"symbol {value} outside alphabet [{self.offset}, {self.offset + self.size - 1}]")
        start = int(self.cumulative[i])
        return start, int(self.cumulative[i + 1]) - start

    def bits(self, value: int) -> float:
        """理想符号長 −log2(width / 2^16)"""
        _, width = self.interval(value)
        return PRECISION - float(np.log2(width))


def _check_alphabet(size: int) -> None:
    if size > MAX_ALPHABET:
        raise AlphabetTooLarge(f"alphabet of {size} symbols exceeds {MAX_ALPHABET}")
    if size < 1:
        raise ValueError("empty alphabet")


def quantize_widths(pmf: np.ndarray) -> np.ndarray:
    """
    PMF の各行を合計 2^16 の整数幅に丸める（最大剰余法、各幅 ≥ 1）

    Args:
        pmf: (..., L) の非負配列。各行の合計は 1 ± 1e-6

    Returns:
        同形状の int64 配列
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    size = pmf.shape[-1]
    _check_alphabet(size)
    if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
        raise ValueError("pmf entries must be finite and non-negative")
    sums = pmf.sum(axis=-1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > PMF_SUM_TOL):
        raise ValueError("pmf must sum to 1 within 1e-6")
    scaled = pmf / sums * (TOTAL - size)
    floor = np.floor(scaled)
    widths = floor.astype(np.int64) + 1
    deficit = TOTAL - widths.sum(axis=-1, keepdims=True)
    frac = scaled - floor
    # 端数の大きい順（同値は添字の小さい順）に残りを配る
    order = np.argsort(-frac, axis=-1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(size, dtype=order.dtype), axis=-1)
    widths += (rank < deficit).astype(np.int64)
    return widths


def quantize_cdf(pmf, offset: int = 0) -> QuantizedCdf:
    """PMF から QuantizedCdf を作る"""
    widths = quantize_widths(np.asarray(pmf, dtype=np.float64).reshape(-1))
    cum = np.concatenate(([0], np.cumsum(widths)))
    return QuantizedCdf(cumulative=cum, offset=offset)


def quantize_cdf_batch(pmf: np.ndarray) -> np.ndarray:
    """(n, L) の PMF から (n, L+1) の累積頻度表をまとめて作る"""
    widths = quantize_widths(np.atleast_2d(pmf))
    cum = np.zeros((widths.shape[0], widths.shape[1] + 1), dtype=np.int64)
    np.cumsum(widths, axis=-1, out=cum[:, 1:])
    return cum
