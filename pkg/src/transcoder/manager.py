"""
トランスコーダ管理モジュール
JPEG ⇔ TLRC コンテナの変換と、複数ファイルの並列処理を提供
"""
import asyncio
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config.settings import EVAL_WORKERS
from src.container.tlrc import ContainerFlags, TlrcContainer, read_container, write_container
from src.dct.image import blocks_to_dct_image, dct_image_to_blocks
from src.errors import LosslessViolation, MalformedContainer, ModelMismatch
from src.jpeg import encode_scan, parse_headers, parse_jpeg, scan_geometry, verify_reencode
from src.jpeg.types import JpegImage
from src.jpeg.writer import EOI_BYTES, SOI_BYTES
from src.transcoder.model import TranscoderModel
from src.transcoder.pipeline import decode_branch, encode_branch

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class EncodeOutcome:
    """1ファイルの符号化結果（評価用の中間値を含む）"""
    container: TlrcContainer
    data: bytes
    image: JpegImage
    # ブランチ名 → (x, x̂_int)
    reconstructions: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


@dataclass
class RoundTrip:
    """符号化 → 復号の往復結果"""
    name: str
    jpeg_bytes: int
    container_bytes: int
    pixel_count: int
    substreams: Dict[str, int]
    lossless: bool
    raw_scan_fallback: bool
    psnr: Optional[float] = None


def coefficient_psnr(x: np.ndarray, x_hat: np.ndarray, peak: float = 4095.0) -> float:
    """DCT係数の PSNR（ピークは係数の値域幅）"""
    mse = float(np.mean((np.asarray(x, np.float64) - np.asarray(x_hat, np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


class TranscoderManager:
    """トランスコーダ管理クラス"""

    def __init__(self, model: TranscoderModel, workers: int = EVAL_WORKERS):
        if workers <= 0:
            raise ValueError("workers must be positive")
        self.model = model.eval()
        self.workers = workers
        self.model_hash = model.identity_hash()
        self.stats_hash = model.stats_hash()

    @classmethod
    def from_file(cls, path: PathLike, workers: int = EVAL_WORKERS) -> "TranscoderManager":
        model = TranscoderModel.from_bytes(Path(path).read_bytes())
        logger.info(f"モデル読み込み完了: {path} ({model.parameter_count()} parameters)")
        return cls(model, workers)

    # --- 符号化 ---

    def encode_detailed(self, data: bytes) -> EncodeOutcome:
        """
        JPEG をコンテナに変換する

        Raises:
            UnsupportedJpeg: 対象外のJPEG、またはモデルが扱わないサンプリング
            CorruptStream: JPEG が壊れている
        """
        data = bytes(data)
        image = parse_jpeg(data)
        mode = image.sampling_mode
        plan = self.model.plan(mode)
        report = verify_reencode(data, image)

        flags = ContainerFlags.COEFF_EXACT
        if self.model.config.direct:
            flags |= ContainerFlags.DIRECT_MODE
        branches = []
        reconstructions: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        raw_scan = b""
        if report.byte_exact:
            flags |= ContainerFlags.BYTE_EXACT
            dct = [blocks_to_dct_image(p, i) for i, p in enumerate(image.coeff_planes)]
            for branch, chain in plan:
                x = np.concatenate([dct[i].data for i in chain], axis=2).astype(np.int64)
                result = encode_branch(branch, x)
                branches.append(result.streams)
                reconstructions[branch.name] = (x, result.x_hat_int)
        else:
            logger.warning(f"再符号化が一致しないため生スキャンを格納します（不一致 {report.mismatch_count}B）")
            flags |= ContainerFlags.RAW_SCAN_FALLBACK
            raw_scan = image.original_scan_bytes

        container = TlrcContainer(
            flags=flags,
            width=image.frame.width,
            height=image.frame.height,
            sampling=mode,
            header_segments=image.header_segments,
            sos_segment=image.sos_segment,
            trailer=image.trailer,
            model_hash=self.model_hash,
            stats_hash=self.stats_hash,
            branches=tuple(branches),
            raw_scan=raw_scan,
            original_file_digest=image.original_file_digest,
        )
        return EncodeOutcome(container, write_container(container), image, reconstructions)

    def encode(self, data: bytes) -> bytes:
        return self.encode_detailed(data).data

    # --- 復号 ---

    def _check_model(self, c: TlrcContainer) -> None:
        if c.model_hash != self.model_hash:
            raise ModelMismatch("container was written with a different model")
        if c.stats_hash != self.stats_hash:
            raise ModelMismatch("container was written with different normalisation statistics")

    def decode_planes(self, c: TlrcContainer) -> Tuple[JpegImage, bytes]:
        """コンテナから係数平面を復元し、(JpegImage, スキャンバイト列) を返す"""
        if c.flags & ContainerFlags.RAW_SCAN_FALLBACK:
            image = parse_jpeg(header_bytes_of(c) + c.raw_scan + EOI_BYTES)
            return image, c.raw_scan

        self._check_model(c)
        headers = parse_headers(header_bytes_of(c))
        plan = self.model.plan(c.sampling)
        if len(plan) != len(c.branches):
            raise MalformedContainer(f"{len(c.branches)} branch streams for sampling {c.sampling}")
        blocks = scan_geometry(headers.frame, headers.scan_spec).blocks
        planes: List[Optional[np.ndarray]] = [None] * len(headers.frame.components)
        for streams, (branch, chain) in zip(c.branches, plan):
            x = decode_branch(branch, streams, blocks[chain[0]])
            for k, comp in enumerate(chain):
                planes[comp] = dct_image_to_blocks(x[:, :, 64 * k:64 * (k + 1)]).astype(np.int32)
        image = JpegImage.from_headers(headers, tuple(planes), trailer=c.trailer)
        return image, encode_scan(image)

    def decode(self, data: bytes, verify: bool = False) -> bytes:
        """
        コンテナを JPEG に戻す

        Args:
            verify: True なら元ファイルの SHA-256 と照合する

        Raises:
            ModelMismatch: 別のモデルで作成されたコンテナ
            LosslessViolation: verify=True で照合に失敗
        """
        c = read_container(data)
        _, scan = self.decode_planes(c)
        out = header_bytes_of(c) + scan + EOI_BYTES + c.trailer
        if verify and hashlib.sha256(out).digest() != c.original_file_digest:
            raise LosslessViolation("decoded file does not match the original digest")
        return out

    def roundtrip(self, data: bytes, name: str = "") -> RoundTrip:
        """符号化・復号して可逆性を確認する（評価用）"""
        outcome = self.encode_detailed(data)
        decoded = self.decode(outcome.data)
        lossless = decoded == bytes(data)
        psnr = None
        if outcome.reconstructions and not self.model.config.direct:
            x = np.concatenate([v[0].reshape(-1) for v in outcome.reconstructions.values()])
            x_hat = np.concatenate([v[1].reshape(-1) for v in outcome.reconstructions.values()])
            psnr = coefficient_psnr(x, x_hat)
        return RoundTrip(
            name=name,
            jpeg_bytes=len(data),
            container_bytes=len(outcome.data),
            pixel_count=outcome.image.pixel_count,
            substreams=outcome.container.substream_sizes(),
            lossless=lossless,
            raw_scan_fallback=bool(outcome.container.flags & ContainerFlags.RAW_SCAN_FALLBACK),
            psnr=psnr,
        )

    # --- ファイル ---

    def encode_file(self, src: PathLike, dst: PathLike) -> int:
        out = self.encode(Path(src).read_bytes())
        Path(dst).write_bytes(out)
        logger.info(f"符号化完了: {src} → {dst} ({len(out)} bytes)")
        return len(out)

    def decode_file(self, src: PathLike, dst: PathLike, verify: bool = False) -> int:
        out = self.decode(Path(src).read_bytes(), verify=verify)
        Path(dst).write_bytes(out)
        logger.info(f"復号完了: {src} → {dst} ({len(out)} bytes)")
        return len(out)

    # --- 並列処理 ---

    async def _gather(self, func, items: Sequence) -> List:
        semaphore = asyncio.Semaphore(self.workers)

        async def _run(item):
            async with semaphore:
                return await asyncio.to_thread(func, *item)

        return await asyncio.gather(*(_run(item) for item in items))

    async def encode_many(self, items: Sequence[bytes]) -> List[bytes]:
        return await self._gather(self.encode, [(d,) for d in items])

    async def decode_many(self, items: Sequence[bytes], verify: bool = False) -> List[bytes]:
        return await self._gather(self.decode, [(d, verify) for d in items])

    async def evaluate_async(self, items: Sequence[Tuple[str, bytes]]) -> List[RoundTrip]:
        """(名前, JPEG) の列を往復させる。結果は入力順"""
        return await self._gather(self.roundtrip, [(d, name) for name, d in items])


def header_bytes_of(c: TlrcContainer) -> bytes:
    return b"".join((SOI_BYTES, *c.header_segments, c.sos_segment))
