"""
非可逆変換符号化モジュール（ハイパープライア付き変換符号化）
"""
from .config import LossyConfig
from .latent_codec import decode_latents, encode_latents, reconstruct_int
from .model import LatentBundle, LossyCoder
from .rate import rate_estimate

__all__ = [
    "LossyConfig",
    "LossyCoder",
    "LatentBundle",
    "rate_estimate",
    "encode_latents",
    "decode_latents",
    "reconstruct_int",
]
