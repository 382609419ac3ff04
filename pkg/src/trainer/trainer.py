"""
学習ループ

LOSSY_PRETRAIN: 非可逆変換符号化器だけを R_yz + λ·D で学習する
JOINT:          事前学習済みモデルを読み込み、全パラメータを R_yz + R_r + λ·D で学習する
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch

from src.errors import NonFiniteLoss
from src.nn import AdamState
from src.trainer.config import TrainConfig, TrainPhase
from src.trainer.dataset import TileDataset, ingest_corpus
from src.trainer.loss import branch_loss
from src.transcoder.model import TranscoderModel

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: TranscoderModel
    history: List[Dict[str, float]] = field(default_factory=list)
    steps: int = 0


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)


def trainable_parameters(model: TranscoderModel, phase: TrainPhase) -> List[torch.nn.Parameter]:
    """フェーズごとの更新対象（LOSSY_PRETRAIN では残差符号化器を含めない）"""
    if phase == TrainPhase.LOSSY_PRETRAIN:
        return [p for b in model.branches.values() if b.lossy is not None for p in b.lossy.parameters()]
    return list(model.parameters())


def build_model(config: TrainConfig, dataset: TileDataset) -> TranscoderModel:
    """resume があれば読み込み、なければ新規に作って正規化統計を設定する"""
    if config.resume is not None:
        model = TranscoderModel.from_bytes(Path(config.resume).read_bytes())
        if model.config.direct != config.direct:
            raise ValueError("resumed model and --direct flag disagree")
        logger.info(f"学習済みモデルを読み込みました: {config.resume}")
    else:
        model = TranscoderModel(config.model_config_for_run())
        for name, stats in dataset.stats.items():
            if name in model.branches:
                model.branches[name].set_stats(stats)
    return model


def _metadata(config: TrainConfig, dataset: TileDataset, step: int, last: Optional[Dict[str, float]]) -> dict:
    meta = {
        "phase": config.phase.value,
        "steps": step,
        "lambda": config.lmbda,
        "seed": config.seed,
        "batch_size": config.batch_size,
        "tile_size": config.tile_size,
        "corpus_digest": dataset.digest,
        "corpus_files": len(dataset.files),
        "corpus_skipped": dataset.skipped,
    }
    if last:
        meta["last_loss"] = last
    return meta


def _write_checkpoint(model: TranscoderModel, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(model.to_bytes())


def train(config: TrainConfig, dataset: Optional[TileDataset] = None) -> TrainResult:
    """
    学習を実行し、config.out にモデルファイルを書き出す

    Raises:
        EmptyCorpus: コーパスに使える画像がない
        NonFiniteLoss: 損失が発散した（直前の正常なチェックポイントを書き出してから送出）
    """
    seed_everything(config.seed)
    if dataset is None:
        dataset = ingest_corpus(
            config.corpus, config.model_config_for_run(), config.tile_size, config.tiles_per_image, config.seed
        )
    model = build_model(config, dataset)
    model.train()
    names = [n for n in dataset.branch_names if n in model.branches]
    if not names:
        raise ValueError("corpus has no tiles for any branch of the model")

    params = trainable_parameters(model, config.phase)
    optimizer = AdamState(params, lr=config.lr_initial)
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    out = Path(config.out)

    good_state = copy.deepcopy(model.state_dict())
    history: List[Dict[str, float]] = []
    logger.info(
        f"学習開始: phase={config.phase.value} steps={config.steps} λ={config.lmbda} "
        f"batch={config.batch_size} tile={config.tile_size} params={len(params)}"
    )

    batches = dataset.batches(config.batch_size, rng, names)
    for step in range(config.steps):
        name, batch = next(batches)
        terms = branch_loss(model.branches[name], batch, config.lmbda, config.phase, generator)
        record = {"step": float(step), **terms.as_floats()}
        if not math.isfinite(record["total"]):
            model.load_state_dict(good_state)
            model.metadata = _metadata(config, dataset, step, history[-1] if history else None)
            _write_checkpoint(model, out)
            logger.error(f"損失が発散しました (step {step})。直前のチェックポイントに戻しました: {out}")
            raise NonFiniteLoss(f"loss became {record['total']} at step {step}")

        optimizer.optimizer.zero_grad(set_to_none=True)
        terms.total.backward()
        lr = config.lr_at(step)
        optimizer.step(lr)
        record["lr"] = lr
        history.append(record)

        if (step + 1) % config.log_every == 0:
            logger.info(
                f"step {step + 1}/{config.steps} [{name}] total={record['total']:.4f} "
                f"R_yz={record['r_yz']:.4f} R_r={record['r_r']:.4f} D={record['d']:.2f} lr={lr:g}"
            )
        if (step + 1) % config.checkpoint_every == 0:
            good_state = copy.deepcopy(model.state_dict())
            model.metadata = _metadata(config, dataset, step + 1, record)
            _write_checkpoint(model, out)
            logger.info(f"チェックポイント保存: {out} (step {step + 1})")

    model.eval()
    model.metadata = _metadata(config, dataset, config.steps, history[-1] if history else None)
    _write_checkpoint(model, out)
    logger.info(f"✅ 学習完了: {out}")
    return TrainResult(model=model, history=history, steps=config.steps)
