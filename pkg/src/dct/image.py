"""
DCT画像モジュール
ブロック配置の係数平面と、周波数ごとに64チャネルへ並べ替えたDCT画像を相互変換する
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.config.settings import NORM_STD_FLOOR
from src.errors import EmptyCorpus, OutOfRange, ShapeError, StatsMismatch

# ジグザグ順 k → 自然順インデックス (row*8 + col)
ZIGZAG_ORDER = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.int64)

# 自然順インデックス → ジグザグ順 k
INVERSE_ZIGZAG_ORDER = np.argsort(ZIGZAG_ORDER)


def zigzag_index(k: int) -> Tuple[int, int]:
    """ジグザグ位置 k (0..63) をブロック内の (row, col) に変換する"""
    if not 0 <= int(k) <= 63:
        raise OutOfRange(f"zigzag index must be in 0..63: {k}")
    natural = int(ZIGZAG_ORDER[int(k)])
    return natural // 8, natural % 8


def inverse_zigzag(row: int, col: int) -> int:
    """ブロック内の (row, col) をジグザグ位置に変換する"""
    if not (0 <= int(row) <= 7 and 0 <= int(col) <= 7):
        raise OutOfRange(f"row/col must be in 0..7: ({row}, {col})")
    return int(INVERSE_ZIGZAG_ORDER[int(row) * 8 + int(col)])


@dataclass(frozen=True)
class DctImage:
    """
    1成分ぶんのDCT画像

    data は (H_b, W_b, 64) の整数配列で、チャネル c はジグザグ位置 c の係数。
    """
    data: np.ndarray
    component_id: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != 64:
            raise ShapeError(f"DctImage data must have shape (H_b, W_b, 64): {self.data.shape}")

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


def blocks_to_dct_image(plane: np.ndarray, component_id: int = 0) -> DctImage:
    """係数平面 (H, W) を DCT画像 (H/8, W/8, 64) に並べ替える"""
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] % 8 or plane.shape[1] % 8:
        raise ShapeError(f"coefficient plane must be 2-D with sides divisible by 8: {plane.shape}")
    hb, wb = plane.shape[0] // 8, plane.shape[1] // 8
    blocks = plane.reshape(hb, 8, wb, 8).transpose(0, 2, 1, 3).reshape(hb, wb, 64)
    data = np.ascontiguousarray(blocks[:, :, ZIGZAG_ORDER]).astype(np.int32)
    return DctImage(data=data, component_id=component_id)


def dct_image_to_blocks(img: Union[DctImage, np.ndarray]) -> np.ndarray:
    """DCT画像をブロック配置の係数平面に戻す（blocks_to_dct_image の逆変換）"""
    data = img.data if isinstance(img, DctImage) else np.asarray(img)
    if data.ndim != 3 or data.shape[2] != 64:
        raise ShapeError(f"DCT image must have shape (H_b, W_b, 64): {data.shape}")
    hb, wb = data.shape[:2]
    natural = np.empty_like(data)
    natural[:, :, ZIGZAG_ORDER] = data
    plane = natural.reshape(hb, wb, 8, 8).transpose(0, 2, 1, 3).reshape(hb * 8, wb * 8)
    return np.ascontiguousarray(plane)


def stack_dct_images(images: Sequence[DctImage]) -> np.ndarray:
    """同サイズの DCT画像をチャネル方向に連結して (H_b, W_b, 64*n) にする"""
    if not images:
        raise ShapeError("no DCT images to stack")
    shapes = {img.data.shape for img in images}
    if len(shapes) != 1:
        raise ShapeError(f"DCT images to stack must share one shape: {sorted(shapes)}")
    return np.concatenate([img.data for img in images], axis=2)


# ============================================================
# 正規化
# ============================================================

@dataclass(frozen=True)
class NormStats:
    """チャネルごとの平均と標準偏差（std は下限 1e-3）"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise StatsMismatch(f"mean/std shapes differ: {mean.shape} vs {std.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std)) and np.all(std > 0)):
            raise ValueError("NormStats must be finite with strictly positive std")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def channels(self) -> int:
        return int(self.mean.shape[0])

    def select(self, start: int, stop: int) -> "NormStats":
        """チャネル範囲 [start, stop) の統計を切り出す"""
        return NormStats(mean=self.mean[start:stop].copy(), std=self.std[start:stop].copy())

    @classmethod
    def identity(cls, channels: int) -> "NormStats":
        return cls(mean=np.zeros(channels), std=np.ones(channels))


def _as_channels_last(img: Union[DctImage, Sequence[DctImage], np.ndarray]) -> np.ndarray:
    if isinstance(img, DctImage):
        return img.data
    if isinstance(img, np.ndarray):
        return img
    return stack_dct_images(list(img))


def normalize(img: Union[DctImage, Sequence[DctImage], np.ndarray], stats: NormStats) -> np.ndarray:
    """(v - mean_c) / std_c をチャネルごとに適用する（float64）"""
    data = _as_channels_last(img)
    if data.shape[-1] != stats.channels:
        raise StatsMismatch(f"stats have {stats.channels} channels, input has {data.shape[-1]}")
    return (data.astype(np.float64) - stats.mean) / stats.std


def denormalize(t: np.ndarray, stats: NormStats) -> np.ndarray:
    """normalize の逆変換"""
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != stats.channels:
        raise StatsMismatch(f"stats have {stats.channels} channels, input has {t.shape[-1]}")
    return t * stats.std + stats.mean


def compute_norm_stats(corpus: Sequence[Union[DctImage, np.ndarray]]) -> NormStats:
    """
    コーパス全体からチャネルごとの母平均・母標準偏差を求める

    整数のまま和を取るので、コーパスの並び順に依存しない。
    """
    if not corpus:
        raise EmptyCorpus("cannot compute normalisation statistics of an empty corpus")
    channels = None
    count = 0
    s1 = None
    s2 = None
    for item in corpus:
        data = _as_channels_last(item).astype(np.int64)
        if channels is None:
            channels = data.shape[-1]
            s1 = np.zeros(channels, dtype=np.int64)
            s2 = np.zeros(channels, dtype=np.int64)
        elif data.shape[-1] != channels:
            raise StatsMismatch(f"corpus mixes {channels} and {data.shape[-1]} channels")
        flat = data.reshape(-1, channels)
        count += flat.shape[0]
        s1 += flat.sum(axis=0)
        s2 += (flat * flat).sum(axis=0)
    if count == 0:
        raise EmptyCorpus("corpus contains no DCT sites")
    mean = s1.astype(np.float64) / count
    var = s2.astype(np.float64) / count - mean * mean
    std = np.sqrt(np.maximum(var, 0.0))
    return NormStats(mean=mean, std=np.maximum(std, NORM_STD_FLOOR))
