"""
ブランチ単位の符号化・復号

x（整数DCT画像 (H_b, W_b, 64·n)）
  → 正規化 → 16サイト単位にゼロ詰め → LossyCoder (ROUND) → (bytes_z, bytes_y)
  → x̂ を切り出して整数化 → r = x - x̂_int → 残差ストリーム
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch

from src.container.tlrc import BranchStreams
from src.dct.image import normalize
from src.errors import MalformedContainer, ShapeError
from src.lossy.latent_codec import decode_latents, encode_latents, reconstruct_int
from src.nn import QuantMode
from src.nn.ops import to_hwc, to_nchw
from src.residual.codec import (
    ablation_direct_mode,
    decode_residual,
    encode_residual,
    inverse_direct_mode,
)
from src.transcoder.model import Branch

logger = logging.getLogger(__name__)

PAD_MULTIPLE = 16


@dataclass
class BranchResult:
    """符号化結果と、評価用の中間値"""
    streams: BranchStreams
    x_hat_int: np.ndarray


def padded_size(h: int, w: int, multiple: int = PAD_MULTIPLE) -> Tuple[int, int]:
    return -(-h // multiple) * multiple, -(-w // multiple) * multiple


def pad_sites(x: np.ndarray, multiple: int = PAD_MULTIPLE) -> np.ndarray:
    """(H, W, C) の右下をゼロで埋めて multiple の倍数にする"""
    h, w = x.shape[:2]
    hp, wp = padded_size(h, w, multiple)
    if (hp, wp) == (h, w):
        return x
    return np.pad(x, ((0, hp - h), (0, wp - w), (0, 0)))


def _stack(images) -> np.ndarray:
    return np.concatenate([img.data for img in images], axis=2).astype(np.int64)


@torch.no_grad()
def lossy_reconstruction(branch: Branch, x: np.ndarray) -> Tuple[BranchStreams, np.ndarray]:
    """ROUND モードで潜在表現を符号化し、(ストリーム, x̂_int) を返す"""
    h, w = x.shape[:2]
    x_norm = pad_sites(normalize(x, branch.stats))
    bundle, x_hat = branch.lossy(to_nchw(x_norm), QuantMode.ROUND)
    bytes_z, bytes_y = encode_latents(bundle, branch.lossy.config.latent_bound)
    x_hat_int = _stack(reconstruct_int(to_hwc(x_hat)[:h, :w], branch.stats))
    return BranchStreams(branch=branch.name, z=bytes_z, y=bytes_y), x_hat_int


@torch.no_grad()
def decode_lossy(branch: Branch, streams: BranchStreams, shape: Tuple[int, int]) -> np.ndarray:
    h, w = shape
    hp, wp = padded_size(h, w)
    z_shape = (hp // PAD_MULTIPLE, wp // PAD_MULTIPLE)
    _, y_hat, _, _ = decode_latents(streams.z, streams.y, branch.lossy, z_shape)
    x_hat = branch.lossy.synthesis(y_hat)
    return _stack(reconstruct_int(to_hwc(x_hat)[:h, :w], branch.stats))


def encode_branch(branch: Branch, x: np.ndarray) -> BranchResult:
    """
    1ブランチぶんの DCT画像を符号化する

    Args:
        x: (H_b, W_b, 64·n) の整数配列（チェーン順に成分を連結したもの）
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 3 or x.shape[2] != branch.channels:
        raise ShapeError(f"branch {branch.name} expects (H_b, W_b, {branch.channels}): {x.shape}")
    if branch.lossy is None:
        residual = ablation_direct_mode(x, branch.residual)
        return BranchResult(BranchStreams(branch=branch.name, residual=residual), np.zeros_like(x))

    streams, x_hat_int = lossy_reconstruction(branch, x)
    residual = encode_residual(x - x_hat_int, x_hat_int, branch.residual)
    logger.debug(
        f"ブランチ {branch.name}: z={len(streams.z)}B y={len(streams.y)}B r={len(residual)}B"
    )
    return BranchResult(BranchStreams(branch.name, streams.z, streams.y, residual), x_hat_int)


def decode_branch(branch: Branch, streams: BranchStreams, shape: Tuple[int, int]) -> np.ndarray:
    """encode_branch の逆。戻り値は (H_b, W_b, 64·n) の int64 配列"""
    if streams.branch != branch.name:
        raise MalformedContainer(f"stream for branch {streams.branch} given to branch {branch.name}")
    h, w = shape
    if branch.lossy is None:
        return inverse_direct_mode(streams.residual, (h, w, branch.channels), branch.residual)
    x_hat_int = decode_lossy(branch, streams, shape)
    return x_hat_int + decode_residual(streams.residual, x_hat_int, branch.residual)
