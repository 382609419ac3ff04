"""
テスト共通のフィクスチャ

JPEG は OpenCV で画素から生成するものと、build_jpeg で係数から合成するものの2種類。
ネットワークは小さな構成（M=N=8, K=2, 特徴 16）で作る。
"""
import sys
from pathlib import Path

import cv2
import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import TlrcError  # noqa: E402
from src.jpeg import build_jpeg, coefficient_plane_shapes, parse_jpeg  # noqa: E402
from src.lossy.config import LossyConfig  # noqa: E402
from src.residual.config import ResidualConfig  # noqa: E402
from src.transcoder.model import ModelConfig, TranscoderModel  # noqa: E402

TINY_LOSSY = LossyConfig(latent_channels=8, hyper_channels=8)
TINY_RESIDUAL = ResidualConfig(mixtures=2, feature_channels=16, hidden_channels=16)


def tiny_model_config(direct: bool = False) -> ModelConfig:
    return ModelConfig(lossy=TINY_LOSSY, residual=TINY_RESIDUAL, direct=direct)


def smooth_pixels(height: int, width: int, channels: int = 3, seed: int = 0) -> np.ndarray:
    """グラデーションとノイズの画素画像（uint8）"""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 128 + 60 * np.sin(xx / 7.0) * np.cos(yy / 11.0)
    planes = [base + 20 * c + rng.normal(0, 6, size=base.shape) for c in range(channels)]
    img = np.clip(np.stack(planes, axis=-1), 0, 255).astype(np.uint8)
    return img[:, :, 0] if channels == 1 else img


def cv2_jpeg(pixels: np.ndarray, quality: int = 75) -> bytes:
    ok, buf = cv2.imencode(".jpg", pixels, [int(cv2.IMWRITE_JPEG_QUALITY), quality])
    assert ok
    return buf.tobytes()


def random_planes(width: int, height: int, sampling, seed: int = 0, spread: int = 6):
    """build_jpeg 用のランダム係数平面（DC は大きめ、AC は 0 付近）"""
    rng = np.random.default_rng(seed)
    planes = []
    for shape in coefficient_plane_shapes(width, height, sampling):
        plane = rng.laplace(0, spread / 4, size=shape).round().astype(np.int32)
        plane = np.clip(plane, -spread * 4, spread * 4)
        plane[0::8, 0::8] = rng.integers(-60, 60, size=(shape[0] // 8, shape[1] // 8))
        planes.append(plane)
    return planes


@pytest.fixture
def gray_jpeg() -> bytes:
    return cv2_jpeg(smooth_pixels(32, 40, channels=1), quality=90)


@pytest.fixture
def color444_jpeg() -> bytes:
    # OpenCV の既定（4:2:0）を避けるため係数から合成する
    planes = random_planes(24, 16, [(1, 1)] * 3, seed=3)
    return build_jpeg(planes, 24, 16, sampling=[(1, 1)] * 3, quality=90)


@pytest.fixture
def color420_jpeg() -> bytes:
    return cv2_jpeg(smooth_pixels(32, 32, channels=3, seed=1), quality=85)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture
def tiny_model() -> TranscoderModel:
    torch.manual_seed(0)
    return TranscoderModel(tiny_model_config()).eval()


@pytest.fixture
def direct_model() -> TranscoderModel:
    torch.manual_seed(0)
    return TranscoderModel(tiny_model_config(direct=True)).eval()


@pytest.fixture
def corpus_dir(tmp_path) -> Path:
    """学習・評価用の小さなコーパス（グレー 2 枚 + 4:2:0 2 枚）"""
    root = tmp_path / "corpus"
    root.mkdir()
    for i in range(2):
        (root / f"gray_{i}.jpg").write_bytes(cv2_jpeg(smooth_pixels(48, 48, channels=1, seed=i), 90))
        (root / f"color_{i}.jpg").write_bytes(cv2_jpeg(smooth_pixels(32, 48, channels=3, seed=10 + i), 85))
    return root


def flip_final_byte_bit(data: bytes) -> bytes:
    """EOI 直前のバイトの最下位ビットを反転する"""
    pos = data.rindex(b"\xff\xd9") - 1
    return data[:pos] + bytes([data[pos] ^ 0x01]) + data[pos + 1:]


@pytest.fixture
def nonstandard_padding_jpeg() -> bytes:
    """最終バイトの詰めビットが 1 でない JPEG（係数は元ファイルと同じ）"""
    for seed in range(16):
        data = cv2_jpeg(smooth_pixels(32, 40, channels=1, seed=seed), quality=90)
        flipped = flip_final_byte_bit(data)
        try:
            planes = parse_jpeg(flipped).coeff_planes
        except TlrcError:
            continue
        if all(np.array_equal(a, b) for a, b in zip(planes, parse_jpeg(data).coeff_planes)):
            return flipped
    raise AssertionError("no cv2 file with padding bits in its final byte")
