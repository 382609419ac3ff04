"""
ニューラルネット基本演算モジュール（PyTorch autograd）
"""
from .gradcheck import GradCheckReport, grad_check
from .layers import GDN, Conv2d, ConvTranspose2d, LeakyReLU, MaskedConv2d
from .ops import (
    STRICT_PAST,
    QuantMode,
    conv2d,
    conv2d_transpose,
    gdn,
    igdn,
    leaky_relu,
    masked_conv2d,
    quantize,
)
from .optim import AdamState, adam_step

__all__ = [
    "STRICT_PAST",
    "QuantMode",
    "conv2d",
    "conv2d_transpose",
    "leaky_relu",
    "gdn",
    "igdn",
    "masked_conv2d",
    "quantize",
    "Conv2d",
    "ConvTranspose2d",
    "MaskedConv2d",
    "LeakyReLU",
    "GDN",
    "AdamState",
    "adam_step",
    "GradCheckReport",
    "grad_check",
]
