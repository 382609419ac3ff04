"""
JPEGの再構成と合成

serialize_jpeg / verify_reencode はパース結果からファイルを組み立て直し、
build_jpeg は係数平面から新しいベースラインJPEGを合成する（テスト・コーパス生成用）。
"""
from __future__ import annotations

import logging
import struct
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.dct.image import ZIGZAG_ORDER
from src.errors import CategoryOverflow
from src.jpeg.scan_codec import encode_planes, encode_scan, scan_geometry
from src.jpeg.tables import (
    STD_QUANT_CHROMA,
    STD_QUANT_LUMA,
    scaled_quant_table,
    standard_huffman_tables,
)
from src.jpeg.types import (
    FrameComponent,
    FrameHeader,
    HuffmanSpec,
    JpegHeaders,
    JpegImage,
    ScanSpec,
    VerificationReport,
)

logger = logging.getLogger(__name__)

SOI_BYTES = b"\xff\xd8"
EOI_BYTES = b"\xff\xd9"


def header_bytes(headers: JpegHeaders) -> bytes:
    """SOI + ヘッダーセグメント + SOS（parse_headers の入力形式）"""
    return b"".join((SOI_BYTES, *headers.header_segments, headers.sos_segment))


def serialize_jpeg(image: JpegImage, scan: bytes) -> bytes:
    """SOI + ヘッダーセグメント + SOS + スキャン + EOI + トレーラー"""
    return b"".join((
        SOI_BYTES,
        *image.header_segments,
        image.sos_segment,
        scan,
        EOI_BYTES,
        image.trailer,
    ))


def verify_reencode(original: bytes, image: JpegImage) -> VerificationReport:
    """
    再符号化で元ファイルがバイト単位で再現できるかを調べる

    mismatch_count は共通長内の不一致バイト数に長さの差を加えたもの。
    """
    try:
        rebuilt = serialize_jpeg(image, encode_scan(image))
    except CategoryOverflow as e:
        logger.warning(f"再符号化できません: {e}")
        return VerificationReport(byte_exact=False, mismatch_count=len(original))
    n = min(len(original), len(rebuilt))
    a = np.frombuffer(original, dtype=np.uint8, count=n)
    b = np.frombuffer(rebuilt, dtype=np.uint8, count=n)
    mismatch = int(np.count_nonzero(a != b)) + abs(len(original) - len(rebuilt))
    return VerificationReport(byte_exact=mismatch == 0, mismatch_count=mismatch)


# ============================================================
# 合成
# ============================================================

def coefficient_plane_shapes(
    width: int, height: int, sampling: Sequence[Tuple[int, int]]
) -> Tuple[Tuple[int, int], ...]:
    """
    build_jpeg に渡す係数平面の形状

    Args:
        sampling: 成分ごとの (h, v) サンプリング係数
    """
    frame = _frame(width, height, sampling)
    scan = _scan(len(sampling))
    geom = scan_geometry(frame, scan)
    return tuple((bv * 8, bh * 8) for bv, bh in geom.blocks)


def _frame(width: int, height: int, sampling: Sequence[Tuple[int, int]]) -> FrameHeader:
    comps = tuple(
        FrameComponent(id=i + 1, h_sampling=h, v_sampling=v, quant_table_id=0 if i == 0 else 1)
        for i, (h, v) in enumerate(sampling)
    )
    return FrameHeader(precision=8, height=height, width=width, components=comps)


def _scan(n: int) -> ScanSpec:
    ids = tuple(0 if i == 0 else 1 for i in range(n))
    return ScanSpec(component_indices=tuple(range(n)), dc_table_ids=ids, ac_table_ids=ids)


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _dqt(tables: Dict[int, Tuple[int, ...]]) -> bytes:
    payload = b""
    for tq in sorted(tables):
        zigzag = [tables[tq][int(ZIGZAG_ORDER[k])] for k in range(64)]
        payload += bytes([tq]) + bytes(zigzag)
    return _segment(0xDB, payload)


def _dht(tables: Dict[Tuple[int, int], HuffmanSpec]) -> bytes:
    payload = b""
    for (tc, th) in sorted(tables):
        spec = tables[(tc, th)]
        payload += bytes([(tc << 4) | th]) + bytes(spec.bits) + bytes(spec.values)
    return _segment(0xC4, payload)


def _sof0(frame: FrameHeader) -> bytes:
    payload = struct.pack(">BHHB", frame.precision, frame.height, frame.width, len(frame.components))
    for c in frame.components:
        payload += bytes([c.id, (c.h_sampling << 4) | c.v_sampling, c.quant_table_id])
    return _segment(0xC0, payload)


def _sos(frame: FrameHeader, scan: ScanSpec) -> bytes:
    payload = bytes([len(scan.component_indices)])
    for ci, td, ta in zip(scan.component_indices, scan.dc_table_ids, scan.ac_table_ids):
        payload += bytes([frame.components[ci].id, (td << 4) | ta])
    payload += bytes([scan.ss, scan.se, (scan.ah << 4) | scan.al])
    return _segment(0xDA, payload)


JFIF_APP0 = _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")


def build_jpeg(
    planes: Sequence[np.ndarray],
    width: int,
    height: int,
    sampling: Optional[Sequence[Tuple[int, int]]] = None,
    quality: int = 75,
    quant_tables: Optional[Dict[int, Tuple[int, ...]]] = None,
    huffman_tables: Optional[Dict[Tuple[int, int], HuffmanSpec]] = None,
    restart_interval: int = 0,
    comment: Optional[bytes] = None,
) -> bytes:
    """
    係数平面からベースラインJPEGファイルを合成する

    Args:
        planes: 成分ごとの係数平面（形状は coefficient_plane_shapes に従う）
        sampling: 成分ごとの (h, v)。省略時はすべて (1, 1)
        quality: quant_tables 省略時の標準テーブルの品質
        huffman_tables: 省略時は Annex K の標準テーブル
        restart_interval: 0 以外なら DRI を付与して RSTn を挿入
        comment: COM セグメントとして埋め込むバイト列

    Raises:
        CategoryOverflow: 係数がテーブルで符号化できない
    """
    n = len(planes)
    if n not in (1, 3):
        raise ValueError(f"build_jpeg supports 1 or 3 components: {n}")
    sampling = tuple(sampling) if sampling is not None else ((1, 1),) * n
    if len(sampling) != n:
        raise ValueError("sampling must list one (h, v) pair per component")
    if quant_tables is None:
        quant_tables = {0: scaled_quant_table(STD_QUANT_LUMA, quality)}
        if n > 1:
            quant_tables[1] = scaled_quant_table(STD_QUANT_CHROMA, quality)
    if huffman_tables is None:
        huffman_tables = standard_huffman_tables()
        if n == 1:
            huffman_tables = {k: v for k, v in huffman_tables.items() if k[1] == 0}

    frame = _frame(width, height, sampling)
    scan = _scan(n)
    scan_bytes = encode_planes(planes, frame, scan, huffman_tables, restart_interval)

    segments = [JFIF_APP0]
    if comment is not None:
        segments.append(_segment(0xFE, comment))
    segments += [_dqt(quant_tables), _sof0(frame), _dht(huffman_tables)]
    if restart_interval:
        segments.append(_segment(0xDD, struct.pack(">H", restart_interval)))
    segments.append(_sos(frame, scan))
    return SOI_BYTES + b"".join(segments) + scan_bytes + EOI_BYTES
