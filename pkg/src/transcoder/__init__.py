"""
トランスコーダモジュール（JPEG ⇔ TLRC）
"""
from .manager import EncodeOutcome, RoundTrip, TranscoderManager, coefficient_psnr
from .model import MODE_PLAN, Branch, ModelConfig, TranscoderModel
from .pipeline import decode_branch, encode_branch

__all__ = [
    "MODE_PLAN",
    "ModelConfig",
    "Branch",
    "TranscoderModel",
    "TranscoderManager",
    "EncodeOutcome",
    "RoundTrip",
    "coefficient_psnr",
    "encode_branch",
    "decode_branch",
]
