"""
DCT画像モジュール
"""
from .image import (
    DctImage,
    NormStats,
    blocks_to_dct_image,
    compute_norm_stats,
    dct_image_to_blocks,
    denormalize,
    inverse_zigzag,
    normalize,
    stack_dct_images,
    zigzag_index,
)

__all__ = [
    "DctImage",
    "NormStats",
    "zigzag_index",
    "inverse_zigzag",
    "blocks_to_dct_image",
    "dct_image_to_blocks",
    "stack_dct_images",
    "normalize",
    "denormalize",
    "compute_norm_stats",
]
