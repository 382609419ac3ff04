"""残差符号化器の構成"""
from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from src.config.settings import (
    RESIDUAL_FEATURE_CHANNELS,
    RESIDUAL_HIDDEN_CHANNELS,
    RESIDUAL_LOG_SCALE_MIN,
    RESIDUAL_MIXTURES,
    RESIDUAL_SCALE_FLOOR,
)

# 残差のアルファベット（クランプ済み係数範囲の差）
RESIDUAL_MIN = -4095
RESIDUAL_MAX = 4095

# 1成分あたりの係数チャネル数
BLOCK_CHANNELS = 64


class ResidualConfig(BaseModel):
    """
    ResidualCoder のアーキテクチャ設定

    n_components は成分チェーンの長さ（luma=1, chroma=2, ycc=3）。
    direct=True のときは分布をラプラス分布（K=1）に切り替える。
    """
    model_config = ConfigDict(frozen=True)

    n_components: int = Field(1, ge=1, le=3)
    mixtures: int = Field(RESIDUAL_MIXTURES, ge=1)
    feature_channels: int = Field(RESIDUAL_FEATURE_CHANNELS, gt=0)
    hidden_channels: int = Field(RESIDUAL_HIDDEN_CHANNELS, gt=0)
    context_kernel: int = Field(5, ge=3)
    scale_floor: float = Field(RESIDUAL_SCALE_FLOOR, gt=0)
    log_scale_min: float = RESIDUAL_LOG_SCALE_MIN
    direct: bool = False

    @property
    def effective_mixtures(self) -> int:
        return 1 if self.direct else self.mixtures

    @property
    def channels(self) -> int:
        """入力（x̂, r）のチャネル数"""
        return BLOCK_CHANNELS * self.n_components

    @property
    def params_per_component(self) -> int:
        """[π | μ | log-s | β_Y | β_Cr | β_Cb] の1成分ぶんのチャネル数"""
        return self.effective_mixtures * (1 + 5 * BLOCK_CHANNELS)

    @property
    def family(self) -> str:
        return "laplace" if self.direct else "logistic"
