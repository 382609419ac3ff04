"""学習・評価の構成"""
from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.settings import (
    TRAIN_BATCH_SIZE,
    TRAIN_CHECKPOINT_EVERY,
    TRAIN_LAMBDA,
    TRAIN_LOG_EVERY,
    TRAIN_LR_DECAY_AT,
    TRAIN_LR_DECAYED,
    TRAIN_LR_INITIAL,
    TRAIN_SEED,
    TRAIN_STEPS,
    TRAIN_TILE_SIZE,
    TRAIN_TILES_PER_IMAGE,
)
from src.transcoder.model import ModelConfig


class TrainPhase(str, Enum):
    LOSSY_PRETRAIN = "LOSSY_PRETRAIN"
    JOINT = "JOINT"


class TrainConfig(BaseModel):
    """
    学習設定

    JOINT フェーズは resume（事前学習済みモデル）か from_scratch=True が必要。
    direct=True は非可逆ブランチを持たないモデルを学習する（JOINT のみ）。
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    phase: TrainPhase = TrainPhase.JOINT
    corpus: Path
    out: Path
    lmbda: float = Field(TRAIN_LAMBDA, ge=0, alias="lambda")
    batch_size: int = Field(TRAIN_BATCH_SIZE, gt=0)
    tile_size: int = Field(TRAIN_TILE_SIZE, gt=0)
    tiles_per_image: int = Field(TRAIN_TILES_PER_IMAGE, gt=0)
    steps: int = Field(TRAIN_STEPS, ge=0)
    lr_initial: float = Field(TRAIN_LR_INITIAL, gt=0)
    lr_decayed: float = Field(TRAIN_LR_DECAYED, gt=0)
    lr_decay_at: float = Field(TRAIN_LR_DECAY_AT, ge=0, le=1)
    seed: int = TRAIN_SEED
    checkpoint_every: int = Field(TRAIN_CHECKPOINT_EVERY, gt=0)
    log_every: int = Field(TRAIN_LOG_EVERY, gt=0)
    resume: Optional[Path] = None
    from_scratch: bool = False
    direct: bool = False
    model: ModelConfig = ModelConfig()

    @field_validator("tile_size")
    @classmethod
    def _tile_multiple(cls, v: int) -> int:
        if v % 16:
            raise ValueError(f"tile size must be a multiple of 16 sites: {v}")
        return v

    @model_validator(mode="after")
    def _phase_rules(self) -> "TrainConfig":
        if self.phase == TrainPhase.JOINT and self.resume is None and not self.from_scratch and not self.direct:
            raise ValueError("JOINT training needs --resume with a pretrained model or --from-scratch")
        if self.direct and self.phase == TrainPhase.LOSSY_PRETRAIN:
            raise ValueError("direct mode has no lossy coder to pretrain")
        return self

    def lr_at(self, step: int) -> float:
        """ステップ step（0始まり）の学習率"""
        return self.lr_initial if step < int(self.lr_decay_at * self.steps) else self.lr_decayed

    def model_config_for_run(self) -> ModelConfig:
        lossy = self.model.lossy.model_copy(update={"lmbda": self.lmbda}) if self.lmbda > 0 else self.model.lossy
        return self.model.model_copy(update={"direct": self.direct, "lossy": lossy})
