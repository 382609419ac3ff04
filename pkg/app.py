"""
TLRC コマンドラインツール
JPEG の可逆トランスコード（符号化・復号）、学習、評価をサブコマンドで提供

終了コード: 0 正常 / 1 使い方の誤り / 2 データエラー / 3 可逆性の検証失敗
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from src.config.settings import EVAL_QPS, EVAL_WORKERS, LOG_LEVEL
from src.container.model_file import MODEL_MAGIC, model_hash, read_model
from src.container.tlrc import MAGIC, ContainerFlags, read_container
from src.errors import LosslessViolation, TlrcError
from src.trainer import (
    TrainConfig,
    TrainPhase,
    evaluate,
    load_baseline_sizes,
    qp_sweep,
    train,
)
from src.transcoder import TranscoderManager

# ロギング設定
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_LOSSLESS = 3

PHASES = {"lossy": TrainPhase.LOSSY_PRETRAIN, "joint": TrainPhase.JOINT}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse のエラーを終了コード 1 にする"""

    def error(self, message: str):
        raise UsageError(message)


# ============================================================
# サブコマンド
# ============================================================

def cmd_encode(args: argparse.Namespace) -> int:
    manager = TranscoderManager.from_file(args.model)
    size = manager.encode_file(args.input, args.output)
    original = Path(args.input).stat().st_size
    logger.info(f"{original} → {size} bytes ({100.0 * (original - size) / original:.2f}% 削減)")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    manager = TranscoderManager.from_file(args.model)
    manager.decode_file(args.input, args.output, verify=args.verify)
    if args.verify:
        logger.info("✅ 元ファイルとの照合に成功しました")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    options = {
        "phase": PHASES[args.phase],
        "corpus": args.data,
        "out": args.out,
        "resume": args.resume,
        "from_scratch": args.from_scratch,
        "direct": args.direct,
    }
    for key in ("seed", "steps", "batch_size", "tile_size", "lmbda"):
        value = getattr(args, key)
        if value is not None:
            options[key] = value
    result = train(TrainConfig(**options))
    if result.history:
        last = result.history[-1]
        logger.info(f"最終損失: total={last['total']:.4f} R_yz={last['r_yz']:.4f} R_r={last['r_r']:.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    manager = TranscoderManager.from_file(args.model, workers=args.workers or EVAL_WORKERS)
    baseline = load_baseline_sizes(args.baseline_sizes) if args.baseline_sizes else None
    report = evaluate(manager, args.corpus, baseline)
    if args.report:
        report.write(args.report)
        logger.info(f"レポート保存: {args.report}")
    else:
        print(report.to_json())
    return EXIT_OK


def cmd_qp_sweep(args: argparse.Namespace) -> int:
    manager = TranscoderManager.from_file(args.model)
    report = qp_sweep(manager, args.corpus_root, args.qps, args.source)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
        logger.info(f"レポート保存: {args.report}")
    else:
        print(report.to_json())
    return EXIT_OK


def inspect_bytes(data: bytes) -> dict:
    """コンテナまたはモデルファイルの概要を辞書にする"""
    if data[:4] == MAGIC:
        c = read_container(data)
        flags = [f.name for f in ContainerFlags if c.flags & f]
        return {
            "type": "container",
            "flags": flags,
            "width": c.width,
            "height": c.height,
            "sampling": c.sampling,
            "branches": [b.branch for b in c.branches],
            "substreams": c.substream_sizes(),
            "model_hash": c.model_hash.hex(),
            "stats_hash": c.stats_hash.hex(),
            "total_bytes": len(data),
        }
    if data[:4] == MODEL_MAGIC:
        record = read_model(data)
        return {
            "type": "model",
            "config": record.config,
            "metadata": record.metadata,
            "branches": sorted(record.stats),
            "tensors": len(record.tensors),
            "parameters": int(sum(t.numel() for t in record.tensors.values())),
            "model_hash": model_hash(record).hex(),
        }
    raise UsageError("file is neither a TLRC container nor a TLRM model")


def cmd_inspect(args: argparse.Namespace) -> int:
    print(json.dumps(inspect_bytes(Path(args.file).read_bytes()), indent=2, ensure_ascii=False))
    return EXIT_OK


# ============================================================
# 引数
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tlrc", description="JPEG lossless transcoder")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="JPEG → .tlrc")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help=".tlrc → JPEG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--model", required=True)
    p.add_argument("--verify", action="store_true", help="元ファイルの SHA-256 と照合する")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="モデルを学習する")
    p.add_argument("--phase", choices=sorted(PHASES), default="joint")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--resume", type=Path)
    p.add_argument("--from-scratch", action="store_true")
    p.add_argument("--direct", action="store_true", help="非可逆変換なしで残差符号化器だけを学習する")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--tile-size", type=int)
    p.add_argument("--lambda", dest="lmbda", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="コーパスを評価する")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", help="出力先（.json / .csv）")
    p.add_argument("--baseline-sizes", help="外部コーデックのサイズ JSON")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("qp-sweep", help="品質ごとのコーパスを評価する")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus-root", required=True)
    p.add_argument("--qps", type=int, nargs="+", default=list(EVAL_QPS))
    p.add_argument("--source", help="画素画像のディレクトリ（品質別コーパスがない場合に再符号化）")
    p.add_argument("--report")
    p.set_defaults(func=cmd_qp_sweep)

    p = sub.add_parser("inspect", help="コンテナ・モデルファイルの情報を表示する")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        logger.error(f"使い方の誤り: {e}")
        return EXIT_USAGE
    except (ValueError, ValidationError) as e:
        if isinstance(e, TlrcError):
            logger.error(f"データエラー: {e}")
            return EXIT_DATA
        logger.error(f"引数エラー: {e}")
        return EXIT_USAGE
    except LosslessViolation as e:
        logger.error(f"可逆性の検証に失敗しました: {e}")
        return EXIT_LOSSLESS
    except TlrcError as e:
        logger.error(f"データエラー: {e}")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"ファイルエラー: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
