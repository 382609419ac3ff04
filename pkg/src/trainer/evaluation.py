"""
評価ハーネス

コーパスの各画像を符号化・復号して可逆性を確かめ、BPP とビット削減率を集計する。
外部コーデック（Lepton / JPEG XL など）のサイズは JSON で受け取り、そのまま併記する。
"""
from __future__ import annotations

import asyncio
import csv
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
from pydantic import BaseModel, Field

from src.config.settings import EVAL_QPS, JPEG_SUFFIXES
from src.errors import LosslessViolation, MissingCorpusForQp
from src.trainer.dataset import corpus_items, list_jpegs
from src.transcoder.manager import RoundTrip, TranscoderManager

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
# 外部コーデック名 → ファイル名 → バイト数
BaselineSizes = Mapping[str, Mapping[str, int]]

PIXEL_SUFFIXES = (".png", ".bmp", ".ppm", ".pgm", ".tif", ".tiff")


def bits_per_pixel(n_bytes: int, pixels: int) -> float:
    return 8.0 * n_bytes / pixels if pixels else 0.0


def bit_saving(baseline_bpp: float, method_bpp: float) -> float:
    """ベースラインに対する削減率 [%]"""
    if baseline_bpp <= 0:
        raise ValueError("baseline bpp must be positive")
    return (baseline_bpp - method_bpp) / baseline_bpp * 100.0


def residual_share(lossy_bpp: float, residual_bpp: float) -> float:
    """残差ストリームの占める割合 [%]"""
    total = lossy_bpp + residual_bpp
    return residual_bpp / total * 100.0 if total > 0 else 0.0


class EvalRow(BaseModel):
    """1画像（またはコーパス全体）の評価値"""
    name: str
    pixels: int
    jpeg_bytes: int
    tlrc_bytes: int
    lossy_bytes: int = 0
    residual_bytes: int = 0
    jpeg_bpp: float
    tlrc_bpp: float
    bit_saving_pct: float
    lossy_bin_bpp: float
    residual_bin_bpp: float
    res_share_pct: float
    psnr: Optional[float] = None
    raw_scan_fallback: bool = False
    baselines_bpp: Dict[str, float] = Field(default_factory=dict)
    baseline_bytes: Dict[str, int] = Field(default_factory=dict)

    @classmethod
    def from_sizes(
        cls,
        name: str,
        pixels: int,
        jpeg_bytes: int,
        tlrc_bytes: int,
        lossy_bytes: int,
        residual_bytes: int,
        psnr: Optional[float] = None,
        raw_scan_fallback: bool = False,
        baseline_bytes: Optional[Mapping[str, int]] = None,
    ) -> "EvalRow":
        jpeg_bpp = bits_per_pixel(jpeg_bytes, pixels)
        tlrc_bpp = bits_per_pixel(tlrc_bytes, pixels)
        lossy_bpp = bits_per_pixel(lossy_bytes, pixels)
        residual_bpp = bits_per_pixel(residual_bytes, pixels)
        return cls(
            name=name,
            pixels=pixels,
            jpeg_bytes=jpeg_bytes,
            tlrc_bytes=tlrc_bytes,
            lossy_bytes=lossy_bytes,
            residual_bytes=residual_bytes,
            jpeg_bpp=jpeg_bpp,
            tlrc_bpp=tlrc_bpp,
            bit_saving_pct=bit_saving(jpeg_bpp, tlrc_bpp) if jpeg_bpp > 0 else 0.0,
            lossy_bin_bpp=lossy_bpp,
            residual_bin_bpp=residual_bpp,
            res_share_pct=residual_share(lossy_bpp, residual_bpp),
            psnr=psnr,
            raw_scan_fallback=raw_scan_fallback,
            baselines_bpp={k: bits_per_pixel(v, pixels) for k, v in (baseline_bytes or {}).items()},
            baseline_bytes=dict(baseline_bytes or {}),
        )

    @classmethod
    def from_roundtrip(cls, rt: RoundTrip, baseline_bytes: Optional[Mapping[str, int]] = None) -> "EvalRow":
        return cls.from_sizes(
            name=rt.name,
            pixels=rt.pixel_count,
            jpeg_bytes=rt.jpeg_bytes,
            tlrc_bytes=rt.container_bytes,
            lossy_bytes=rt.substreams["lossy"],
            residual_bytes=rt.substreams["residual"],
            psnr=rt.psnr,
            raw_scan_fallback=rt.raw_scan_fallback,
            baseline_bytes=baseline_bytes,
        )


class EvalReport(BaseModel):
    """画像ごとの行と、コーパス全体の行（総ビット数 / 総画素数）"""
    corpus: str
    model_hash: str = ""
    rows: List[EvalRow] = Field(default_factory=list)
    total: Optional[EvalRow] = None

    @classmethod
    def from_rows(cls, corpus: str, rows: Sequence[EvalRow], model_hash: str = "") -> "EvalReport":
        rows = list(rows)
        total = None
        if rows:
            baseline_names = set.intersection(*(set(r.baseline_bytes) for r in rows))
            baseline_bytes = {
                k: sum(r.baseline_bytes[k] for r in rows) for k in sorted(baseline_names)
            }
            psnrs = [r.psnr for r in rows if r.psnr is not None and np.isfinite(r.psnr)]
            total = EvalRow.from_sizes(
                name="TOTAL",
                pixels=sum(r.pixels for r in rows),
                jpeg_bytes=sum(r.jpeg_bytes for r in rows),
                tlrc_bytes=sum(r.tlrc_bytes for r in rows),
                lossy_bytes=sum(r.lossy_bytes for r in rows),
                residual_bytes=sum(r.residual_bytes for r in rows),
                psnr=float(np.mean(psnrs)) if psnrs else None,
                raw_scan_fallback=any(r.raw_scan_fallback for r in rows),
                baseline_bytes=baseline_bytes,
            )
        return cls(corpus=corpus, model_hash=model_hash, rows=rows, total=total)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def to_csv(self) -> str:
        rows = self.rows + ([self.total] if self.total else [])
        baselines = sorted({k for r in rows for k in r.baselines_bpp})
        scalar = [k for k in EvalRow.model_fields if k not in ("baselines_bpp", "baseline_bytes")]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(scalar + [f"{b}_bpp" for b in baselines])
        for r in rows:
            values = r.model_dump()
            writer.writerow([values[k] for k in scalar] + [r.baselines_bpp.get(b, "") for b in baselines])
        return buf.getvalue()

    def write(self, path: PathLike) -> None:
        """拡張子が .csv なら CSV、それ以外は JSON で保存する"""
        path = Path(path)
        path.write_text(self.to_csv() if path.suffix.lower() == ".csv" else self.to_json(), encoding="utf-8")


def load_baseline_sizes(path: PathLike) -> Dict[str, Dict[str, int]]:
    """{"lepton": {"a.jpg": 12345, ...}, ...} 形式の JSON を読む"""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
        raise ValueError("baseline sizes must map codec name to {file name: bytes}")
    return {codec: {name: int(n) for name, n in sizes.items()} for codec, sizes in raw.items()}


def _build_report(
    manager: TranscoderManager,
    results: Sequence[RoundTrip],
    corpus: str,
    baseline_sizes: Optional[BaselineSizes],
) -> EvalReport:
    rows = []
    for rt in results:
        if not rt.lossless:
            raise LosslessViolation(f"{rt.name}: decoded file differs from the original")
        baseline = {
            codec: sizes[rt.name] for codec, sizes in (baseline_sizes or {}).items() if rt.name in sizes
        }
        row = EvalRow.from_roundtrip(rt, baseline)
        logger.info(
            f"{row.name}: jpeg={row.jpeg_bpp:.3f} tlrc={row.tlrc_bpp:.3f} bpp "
            f"saving={row.bit_saving_pct:.2f}% residual={row.res_share_pct:.1f}%"
        )
        rows.append(row)
    return EvalReport.from_rows(corpus, rows, manager.model_hash.hex())


async def evaluate_items_async(
    manager: TranscoderManager,
    items: Sequence[Tuple[str, bytes]],
    corpus: str = "",
    baseline_sizes: Optional[BaselineSizes] = None,
) -> EvalReport:
    """
    (名前, JPEG) の列を評価する（実行中のイベントループから呼ぶ版）

    Raises:
        LosslessViolation: 往復で元のファイルに戻らない画像があった
    """
    results = await manager.evaluate_async(items)
    return _build_report(manager, results, corpus, baseline_sizes)


def evaluate_items(
    manager: TranscoderManager,
    items: Sequence[Tuple[str, bytes]],
    corpus: str = "",
    baseline_sizes: Optional[BaselineSizes] = None,
) -> EvalReport:
    """evaluate_items_async の同期版。イベントループの外から呼ぶこと"""
    return asyncio.run(evaluate_items_async(manager, items, corpus, baseline_sizes))


def evaluate(
    manager: TranscoderManager,
    corpus: Union[PathLike, Sequence[PathLike]],
    baseline_sizes: Optional[BaselineSizes] = None,
) -> EvalReport:
    """ディレクトリまたはファイル列を評価する"""
    if isinstance(corpus, (str, Path)):
        name, paths = str(corpus), list_jpegs(corpus)
    else:
        paths = [Path(p) for p in corpus]
        name = ",".join(p.name for p in paths)
    report = evaluate_items(manager, corpus_items(paths), name, baseline_sizes)
    if report.total:
        logger.info(
            f"✅ 評価完了: {len(report.rows)} images, jpeg={report.total.jpeg_bpp:.3f} "
            f"tlrc={report.total.tlrc_bpp:.3f} bpp, saving={report.total.bit_saving_pct:.2f}%"
        )
    return report


# ============================================================
# QP スイープ
# ============================================================

class QpRow(BaseModel):
    qp: int
    images: int
    jpeg_bpp: float
    tlrc_bpp: float
    bit_saving_pct: float
    res_share_pct: float
    source: str


class QpSweepReport(BaseModel):
    model_hash: str = ""
    rows: List[QpRow] = Field(default_factory=list)

    @property
    def jpeg_bpp_monotone(self) -> bool:
        bpp = [r.jpeg_bpp for r in sorted(self.rows, key=lambda r: r.qp)]
        return all(a <= b for a, b in zip(bpp, bpp[1:]))

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def reencode_sources(source_dir: PathLike, qp: int) -> List[Tuple[str, bytes]]:
    """画素画像を OpenCV で指定品質の baseline JPEG に符号化する"""
    items = []
    for path in sorted(Path(source_dir).iterdir()):
        if not path.is_file() or path.suffix.lower() not in PIXEL_SUFFIXES + tuple(s.lower() for s in JPEG_SUFFIXES):
            continue
        pixels = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if pixels is None:
            logger.warning(f"画像を読み込めないためスキップ: {path.name}")
            continue
        ok, buf = cv2.imencode(".jpg", pixels, [int(cv2.IMWRITE_JPEG_QUALITY), int(qp)])
        if not ok:
            logger.warning(f"JPEG 符号化に失敗: {path.name}")
            continue
        items.append((f"{path.stem}.jpg", buf.tobytes()))
    return items


def _qp_items(corpus_root: Path, qp: int, source_dir: Optional[Path]) -> Tuple[List[Tuple[str, bytes]], str]:
    for sub in (corpus_root / f"qp{qp}", corpus_root / str(qp)):
        if sub.is_dir():
            paths = list_jpegs(sub)
            if paths:
                return corpus_items(paths), str(sub)
    if source_dir is not None:
        items = reencode_sources(source_dir, qp)
        if items:
            return items, f"{source_dir} @ q{qp}"
    raise MissingCorpusForQp(f"no corpus for QP {qp} under {corpus_root}")


def qp_sweep(
    manager: TranscoderManager,
    corpus_root: PathLike,
    qps: Sequence[int] = tuple(EVAL_QPS),
    source_dir: Optional[PathLike] = None,
) -> QpSweepReport:
    """
    品質ごとのコーパスを同じモデルで評価する

    corpus_root/qp<Q>/ があればそれを使い、なければ source_dir の画素画像を品質 Q で符号化する。

    Raises:
        MissingCorpusForQp: どちらも見つからない品質があった
    """
    root = Path(corpus_root)
    source = Path(source_dir) if source_dir is not None else None
    rows = []
    for qp in sorted(qps):
        items, provenance = _qp_items(root, qp, source)
        report = evaluate_items(manager, items, provenance)
        total = report.total
        rows.append(QpRow(
            qp=qp,
            images=len(report.rows),
            jpeg_bpp=total.jpeg_bpp,
            tlrc_bpp=total.tlrc_bpp,
            bit_saving_pct=total.bit_saving_pct,
            res_share_pct=total.res_share_pct,
            source=provenance,
        ))
        logger.info(f"QP {qp}: jpeg={total.jpeg_bpp:.3f} tlrc={total.tlrc_bpp:.3f} saving={total.bit_saving_pct:.2f}%")
    sweep = QpSweepReport(model_hash=manager.model_hash.hex(), rows=rows)
    if not sweep.jpeg_bpp_monotone:
        logger.warning("JPEG の BPP が品質に対して単調増加になっていません（コーパスを確認してください）")
    return sweep


# ============================================================
# 複数データセットの比較
# ============================================================

class DatasetSummaryRow(BaseModel):
    dataset: str
    jpeg_bpp: float
    tlrc_bpp: float
    bit_saving_pct: float
    baselines_bpp: Dict[str, float] = Field(default_factory=dict)
    baselines_saving_pct: Dict[str, float] = Field(default_factory=dict)


class DatasetSummary(BaseModel):
    rows: List[DatasetSummaryRow] = Field(default_factory=list)
    average_saving_pct: float = 0.0
    average_baselines_saving_pct: Dict[str, float] = Field(default_factory=dict)


def summarize_datasets(reports: Mapping[str, EvalReport]) -> DatasetSummary:
    """データセットごとの削減率と、その単純平均"""
    rows = []
    for name, report in reports.items():
        if report.total is None:
            continue
        t = report.total
        rows.append(DatasetSummaryRow(
            dataset=name,
            jpeg_bpp=t.jpeg_bpp,
            tlrc_bpp=t.tlrc_bpp,
            bit_saving_pct=t.bit_saving_pct,
            baselines_bpp=dict(t.baselines_bpp),
            baselines_saving_pct={k: bit_saving(t.jpeg_bpp, v) for k, v in t.baselines_bpp.items()},
        ))
    if not rows:
        return DatasetSummary()
    codecs = set.intersection(*(set(r.baselines_saving_pct) for r in rows))
    return DatasetSummary(
        rows=rows,
        average_saving_pct=float(np.mean([r.bit_saving_pct for r in rows])),
        average_baselines_saving_pct={
            k: float(np.mean([r.baselines_saving_pct[k] for r in rows])) for k in sorted(codecs)
        },
    )
