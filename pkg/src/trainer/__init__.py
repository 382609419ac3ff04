"""
学習・評価モジュール
"""
from .config import TrainConfig, TrainPhase
from .dataset import TileDataset, extract_tiles, ingest_corpus, list_jpegs
from .evaluation import (
    DatasetSummary,
    EvalReport,
    EvalRow,
    QpSweepReport,
    bit_saving,
    evaluate,
    evaluate_items,
    evaluate_items_async,
    load_baseline_sizes,
    qp_sweep,
    residual_share,
    summarize_datasets,
)
from .loss import LossTerms, branch_loss, joint_loss
from .trainer import TrainResult, train

__all__ = [
    "TrainConfig",
    "TrainPhase",
    "TileDataset",
    "extract_tiles",
    "ingest_corpus",
    "list_jpegs",
    "LossTerms",
    "branch_loss",
    "joint_loss",
    "TrainResult",
    "train",
    "EvalRow",
    "EvalReport",
    "QpSweepReport",
    "DatasetSummary",
    "bit_saving",
    "residual_share",
    "evaluate",
    "evaluate_items",
    "evaluate_items_async",
    "load_baseline_sizes",
    "qp_sweep",
    "summarize_datasets",
]
