"""
残差符号化モジュール（コンテキスト + 再構成特徴 + 混合分布）
"""
from .codec import ablation_direct_mode, decode_residual, encode_residual, inverse_direct_mode
from .config import RESIDUAL_MAX, RESIDUAL_MIN, ResidualConfig
from .distributions import laplace_pmf, logistic_mixture_pmf
from .model import MixtureParams, ResidualCoder, autoregress_means, component_means, residual_rate

__all__ = [
    "RESIDUAL_MIN",
    "RESIDUAL_MAX",
    "ResidualConfig",
    "ResidualCoder",
    "MixtureParams",
    "autoregress_means",
    "component_means",
    "residual_rate",
    "logistic_mixture_pmf",
    "laplace_pmf",
    "encode_residual",
    "decode_residual",
    "ablation_direct_mode",
    "inverse_direct_mode",
]
