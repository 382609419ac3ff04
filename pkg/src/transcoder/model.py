"""
トランスコーダのモデル

成分グループ（ブランチ）ごとに LossyCoder と ResidualCoder を1組ずつ持つ。

    luma   : Y                （64ch）
    chroma : Cr → Cb          （128ch）
    ycc    : Y → Cr → Cb      （192ch）

サンプリングとブランチの対応は gray→[luma], 444→[ycc], 420→[luma, chroma]。
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator
from torch import nn

from src.container.model_file import ModelRecord, model_hash, read_model, stats_hash, write_model
from src.dct.image import NormStats
from src.errors import ShapeMismatch, UnsupportedJpeg
from src.jpeg.types import SAMPLING_420, SAMPLING_444, SAMPLING_GRAY
from src.lossy.config import LossyConfig
from src.lossy.model import LossyCoder
from src.residual.config import BLOCK_CHANNELS, ResidualConfig
from src.residual.model import ResidualCoder

logger = logging.getLogger(__name__)

BRANCH_LUMA = "luma"
BRANCH_CHROMA = "chroma"
BRANCH_YCC = "ycc"

BRANCH_COMPONENTS = {BRANCH_LUMA: 1, BRANCH_CHROMA: 2, BRANCH_YCC: 3}

# サンプリング → (ブランチ, JPEG成分インデックスのチェーン順)。JPEG の成分順は Y, Cb, Cr
MODE_PLAN: Dict[str, Tuple[Tuple[str, Tuple[int, ...]], ...]] = {
    SAMPLING_GRAY: ((BRANCH_LUMA, (0,)),),
    SAMPLING_444: ((BRANCH_YCC, (0, 2, 1)),),
    SAMPLING_420: ((BRANCH_LUMA, (0,)), (BRANCH_CHROMA, (2, 1))),
}


class ModelConfig(BaseModel):
    """モデル全体の構成（モデルファイルの config レコード）"""
    model_config = ConfigDict(frozen=True)

    modes: Tuple[str, ...] = (SAMPLING_GRAY, SAMPLING_444, SAMPLING_420)
    lossy: LossyConfig = LossyConfig()
    residual: ResidualConfig = ResidualConfig()
    direct: bool = False

    @field_validator("modes")
    @classmethod
    def _known_modes(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [m for m in v if m not in MODE_PLAN]
        if unknown or not v:
            raise ValueError(f"unknown sampling modes: {unknown}")
        return tuple(dict.fromkeys(v))

    @property
    def branch_names(self) -> Tuple[str, ...]:
        names = []
        for mode in self.modes:
            for name, _ in MODE_PLAN[mode]:
                if name not in names:
                    names.append(name)
        return tuple(names)

    def lossy_for(self, branch: str) -> LossyConfig:
        return self.lossy.model_copy(update={"input_channels": BLOCK_CHANNELS * BRANCH_COMPONENTS[branch]})

    def residual_for(self, branch: str) -> ResidualConfig:
        return self.residual.model_copy(
            update={"n_components": BRANCH_COMPONENTS[branch], "direct": self.direct}
        )


class Branch(nn.Module):
    """1成分グループぶんの符号化器（direct モードでは lossy を持たない）"""

    def __init__(self, name: str, config: ModelConfig):
        super().__init__()
        self.name = name
        self.n_components = BRANCH_COMPONENTS[name]
        self.lossy: Optional[LossyCoder] = None if config.direct else LossyCoder(config.lossy_for(name))
        self.residual = ResidualCoder(config.residual_for(name))
        self.stats = NormStats.identity(BLOCK_CHANNELS * self.n_components)
        self.residual.set_stats(self.stats)

    @property
    def channels(self) -> int:
        return BLOCK_CHANNELS * self.n_components

    def set_stats(self, stats: NormStats) -> None:
        self.residual.set_stats(stats)
        self.stats = stats


class TranscoderModel(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.branches = nn.ModuleDict({name: Branch(name, self.config) for name in self.config.branch_names})
        self.metadata: Dict[str, Any] = {}

    def plan(self, mode: Optional[str]) -> Tuple[Tuple[Branch, Tuple[int, ...]], ...]:
        """
        サンプリングに対応する (ブランチ, 成分チェーン) の列

        Raises:
            UnsupportedJpeg: モデルが扱わないサンプリング
        """
        if mode is None or mode not in self.config.modes:
            raise UnsupportedJpeg(f"sampling mode {mode} is not supported by this model")
        return tuple((self.branches[name], chain) for name, chain in MODE_PLAN[mode])

    @property
    def stats(self) -> Dict[str, NormStats]:
        return {name: branch.stats for name, branch in self.branches.items()}

    # --- モデルファイル ---

    def to_record(self) -> ModelRecord:
        return ModelRecord(
            config=self.config.model_dump(mode="json"),
            stats=self.stats,
            tensors={k: v.detach().clone() for k, v in self.state_dict().items()},
            metadata=dict(self.metadata),
        )

    @classmethod
    def from_record(cls, record: ModelRecord) -> "TranscoderModel":
        """
        Raises:
            ShapeMismatch: テンソルの名前・形状が構成と一致しない
        """
        model = cls(ModelConfig.model_validate(record.config))
        expected = model.state_dict()
        missing = sorted(set(expected) - set(record.tensors))
        extra = sorted(set(record.tensors) - set(expected))
        if missing or extra:
            raise ShapeMismatch(f"parameter names differ from the config: missing={missing} extra={extra}")
        for name, t in record.tensors.items():
            if tuple(t.shape) != tuple(expected[name].shape):
                raise ShapeMismatch(
                    f"{name}: file shape {tuple(t.shape)} != config shape {tuple(expected[name].shape)}"
                )
        model.load_state_dict(record.tensors)
        for name, stats in record.stats.items():
            if name not in model.branches:
                raise ShapeMismatch(f"normalisation statistics for unknown branch {name}")
            if stats.channels != model.branches[name].channels:
                raise ShapeMismatch(f"{name}: statistics have {stats.channels} channels")
            model.branches[name].set_stats(stats)
        model.metadata = dict(record.metadata)
        model.eval()
        return model

    def to_bytes(self) -> bytes:
        return write_model(self.to_record())

    @classmethod
    def from_bytes(cls, data: bytes) -> "TranscoderModel":
        return cls.from_record(read_model(data))

    def identity_hash(self) -> bytes:
        return model_hash(self.to_record())

    def stats_hash(self) -> bytes:
        return stats_hash(self.stats)

    def parameter_count(self) -> int:
        return int(sum(p.numel() for p in self.parameters()))

