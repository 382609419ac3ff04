"""非可逆変換符号化器の構成"""
from __future__ import annotations

from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.config.settings import (
    LATENT_BOUND,
    LOSSY_HYPER_CHANNELS,
    LOSSY_LATENT_CHANNELS,
    LOSSY_SCALE_FLOOR,
    TRAIN_LAMBDA,
)


class LossyConfig(BaseModel):
    """
    LossyCoder のアーキテクチャ設定

    analysis_kernels は解析変換3段（stride 2, 2, 1）のカーネルサイズ。
    合成変換はこれを逆順にたどる。
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    input_channels: int = Field(64, gt=0)
    latent_channels: int = Field(LOSSY_LATENT_CHANNELS, gt=0)
    hyper_channels: int = Field(LOSSY_HYPER_CHANNELS, gt=0)
    analysis_kernels: Tuple[int, int, int] = (5, 5, 3)
    hyper_kernel: int = 5
    scale_floor: float = Field(LOSSY_SCALE_FLOOR, gt=0)
    latent_bound: int = Field(LATENT_BOUND, gt=0)
    lmbda: float = Field(TRAIN_LAMBDA, gt=0, alias="lambda")

    @field_validator("analysis_kernels")
    @classmethod
    def _odd_kernels(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(k <= 0 or k % 2 == 0 for k in v):
            raise ValueError(f"kernel sizes must be odd and positive: {v}")
        return v

    @field_validator("hyper_kernel")
    @classmethod
    def _odd_hyper_kernel(cls, v: int) -> int:
        if v <= 0 or v % 2 == 0:
            raise ValueError(f"hyper kernel size must be odd and positive: {v}")
        return v

    @property
    def downsampling(self) -> int:
        """入力サイトから ẑ までの縮小率"""
        return 16
