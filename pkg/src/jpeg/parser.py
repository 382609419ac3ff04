"""
ベースラインJPEGパーサー

マーカーセグメントをそのままのバイト列で保持しつつ、フレーム・テーブル・
スキャン指定を読み取り、スキャンを量子化DCT係数平面へ復号する。
"""
from __future__ import annotations

import hashlib
import logging
import re
import struct
from typing import Dict, List, Optional, Tuple

from src.config.settings import JPEG_MAX_COMPONENTS
from src.dct.image import ZIGZAG_ORDER
from src.errors import CorruptStream, UnsupportedJpeg
from src.jpeg.scan_codec import decode_scan
from src.jpeg.types import FrameComponent, FrameHeader, HuffmanSpec, JpegHeaders, JpegImage, ScanSpec

logger = logging.getLogger(__name__)

SOI = 0xD8
EOI = 0xD9
SOS = 0xDA
DQT = 0xDB
DHT = 0xC4
DRI = 0xDD
DNL = 0xDC
DAC = 0xCC
SOF_BASELINE = (0xC0, 0xC1)
# 対象外の SOF（プログレッシブ、可逆、階層、算術符号）
SOF_UNSUPPORTED = {
    0xC2: "progressive",
    0xC3: "lossless",
    0xC5: "hierarchical",
    0xC6: "hierarchical progressive",
    0xC7: "hierarchical lossless",
    0xC9: "arithmetic-coded",
    0xCA: "arithmetic-coded progressive",
    0xCB: "arithmetic-coded lossless",
    0xCD: "arithmetic-coded hierarchical",
    0xCE: "arithmetic-coded hierarchical progressive",
    0xCF: "arithmetic-coded hierarchical lossless",
}

# スキャンの終端: 0x00（スタッフィング）、RSTn、フィルバイト以外が続く 0xFF
_SCAN_END = re.compile(rb"\xff[^\x00\xd0-\xd7\xff]")


def _parse_frame(payload: bytes) -> FrameHeader:
    if len(payload) < 6:
        raise CorruptStream("SOF segment too short")
    precision, height, width, n = struct.unpack(">BHHB", payload[:6])
    if precision != 8:
        raise UnsupportedJpeg(f"{precision}-bit sample precision is not supported")
    if n < 1 or n > JPEG_MAX_COMPONENTS:
        raise UnsupportedJpeg(f"{n} components are not supported")
    if height == 0:
        raise UnsupportedJpeg("frame height defined by DNL is not supported")
    if width == 0:
        raise CorruptStream("frame width is zero")
    if len(payload) < 6 + 3 * n:
        raise CorruptStream("SOF segment too short for its component count")
    comps = []
    for i in range(n):
        cid, hv, tq = payload[6 + 3 * i: 9 + 3 * i]
        h, v = hv >> 4, hv & 0x0F
        if not (1 <= h <= 4 and 1 <= v <= 4) or tq > 3:
            raise CorruptStream(f"invalid sampling/quant table for component {cid}")
        comps.append(FrameComponent(id=cid, h_sampling=h, v_sampling=v, quant_table_id=tq))
    if len({c.id for c in comps}) != n:
        raise CorruptStream("duplicate component ids in frame header")
    return FrameHeader(precision=precision, height=height, width=width, components=tuple(comps))


def _parse_dqt(payload: bytes, tables: Dict[int, Tuple[int, ...]]) -> None:
    pos = 0
    while pos < len(payload):
        pq, tq = payload[pos] >> 4, payload[pos] & 0x0F
        pos += 1
        if pq == 0:
            raw = payload[pos:pos + 64]
            pos += 64
            entries = list(raw)
        elif pq == 1:
            raw = payload[pos:pos + 128]
            pos += 128
            entries = list(struct.unpack(">64H", raw)) if len(raw) == 128 else []
        else:
            raise CorruptStream(f"invalid DQT precision {pq}")
        if len(entries) != 64 or tq > 3:
            raise CorruptStream("truncated or invalid DQT segment")
        if min(entries) < 1:
            raise CorruptStream("quantization table entry 0")
        if max(entries) > 255:
            raise UnsupportedJpeg("quantization table entries above 255 are not supported")
        natural = [0] * 64
        for k, q in enumerate(entries):
            natural[int(ZIGZAG_ORDER[k])] = q
        tables[tq] = tuple(natural)


def _parse_dht(payload: bytes, tables: Dict[Tuple[int, int], HuffmanSpec]) -> None:
    pos = 0
    while pos < len(payload):
        if pos + 17 > len(payload):
            raise CorruptStream("truncated DHT segment")
        tc, th = payload[pos] >> 4, payload[pos] & 0x0F
        bits = tuple(payload[pos + 1:pos + 17])
        count = sum(bits)
        values = tuple(payload[pos + 17:pos + 17 + count])
        if tc > 1 or th > 3 or len(values) != count:
            raise CorruptStream("invalid DHT segment")
        tables[(tc, th)] = HuffmanSpec(bits=bits, values=values)
        pos += 17 + count


def _parse_sos(payload: bytes, frame: FrameHeader) -> ScanSpec:
    if not payload:
        raise CorruptStream("empty SOS segment")
    ns = payload[0]
    if len(payload) != 1 + 2 * ns + 3:
        raise CorruptStream("SOS segment length does not match its component count")
    ids = [c.id for c in frame.components]
    indices, dc_ids, ac_ids = [], [], []
    for i in range(ns):
        cs, t = payload[1 + 2 * i], payload[2 + 2 * i]
        if cs not in ids:
            raise CorruptStream(f"scan references unknown component {cs}")
        indices.append(ids.index(cs))
        dc_ids.append(t >> 4)
        ac_ids.append(t & 0x0F)
    ss, se, a = payload[1 + 2 * ns: 4 + 2 * ns]
    if ss != 0 or se != 63 or a != 0:
        raise UnsupportedJpeg("spectral selection / successive approximation is not baseline")
    if ns != len(frame.components):
        raise UnsupportedJpeg("multi-scan (non-interleaved) files are not supported")
    if len(set(indices)) != ns:
        raise CorruptStream("scan lists a component twice")
    return ScanSpec(
        component_indices=tuple(indices),
        dc_table_ids=tuple(dc_ids),
        ac_table_ids=tuple(ac_ids),
        ss=ss,
        se=se,
        ah=a >> 4,
        al=a & 0x0F,
    )


def _read_headers(data: bytes) -> Tuple[JpegHeaders, int]:
    """SOI から SOS までを読み、ヘッダーとスキャン開始位置を返す"""
    if len(data) < 4 or data[0] != 0xFF or data[1] != SOI:
        raise CorruptStream("input does not start with SOI")

    header_segments: List[bytes] = []
    quant_tables: Dict[int, Tuple[int, ...]] = {}
    huffman_tables: Dict[Tuple[int, int], HuffmanSpec] = {}
    restart_interval = 0
    frame: Optional[FrameHeader] = None
    pos = 2

    while True:
        seg_start = pos
        # マーカー前のフィルバイト
        while pos < len(data) and data[pos] == 0xFF:
            pos += 1
        if pos == seg_start or pos >= len(data):
            raise CorruptStream(f"expected marker at offset {seg_start}")
        marker = data[pos]
        pos += 1
        if marker == EOI:
            raise CorruptStream("EOI before any scan")
        if 0xD0 <= marker <= 0xD7 or marker in (0x00, 0x01, SOI):
            raise CorruptStream(f"unexpected marker 0xFF{marker:02X} in header")
        if pos + 2 > len(data):
            raise CorruptStream("truncated marker segment")
        (length,) = struct.unpack(">H", data[pos:pos + 2])
        end = pos + length
        if length < 2 or end > len(data):
            raise CorruptStream(f"marker 0xFF{marker:02X} length exceeds file")
        payload = data[pos + 2:end]
        raw = data[seg_start:end]
        pos = end

        if marker in SOF_UNSUPPORTED:
            raise UnsupportedJpeg(f"{SOF_UNSUPPORTED[marker]} JPEG is not supported")
        if marker == DAC:
            raise UnsupportedJpeg("arithmetic coding conditioning is not supported")
        if marker == DNL:
            raise UnsupportedJpeg("DNL marker is not supported")
        if marker in SOF_BASELINE:
            if frame is not None:
                raise CorruptStream("more than one SOF segment")
            frame = _parse_frame(payload)
        elif marker == DQT:
            _parse_dqt(payload, quant_tables)
        elif marker == DHT:
            _parse_dht(payload, huffman_tables)
        elif marker == DRI:
            if len(payload) != 2:
                raise CorruptStream("invalid DRI segment")
            (restart_interval,) = struct.unpack(">H", payload)
        elif marker == SOS:
            if frame is None:
                raise CorruptStream("SOS before SOF")
            scan_spec = _parse_sos(payload, frame)
            sos_segment = raw
            break
        header_segments.append(raw)

    for comp in frame.components:
        if comp.quant_table_id not in quant_tables:
            raise CorruptStream(f"quantization table {comp.quant_table_id} referenced before definition")

    headers = JpegHeaders(
        header_segments=tuple(header_segments),
        frame=frame,
        quant_tables=quant_tables,
        huffman_tables=huffman_tables,
        restart_interval=restart_interval,
        scan_spec=scan_spec,
        sos_segment=sos_segment,
    )
    return headers, pos


def parse_headers(data: bytes) -> JpegHeaders:
    """
    SOI + ヘッダーセグメント + SOS だけのバイト列を解析する（コンテナからの復元用）

    Raises:
        UnsupportedJpeg, CorruptStream: parse_jpeg と同じ
    """
    headers, pos = _read_headers(bytes(data))
    if pos != len(data):
        raise CorruptStream(f"{len(data) - pos} unexpected bytes after the SOS segment")
    return headers


def parse_jpeg(data: bytes) -> JpegImage:
    """
    ベースラインJPEGを解析する

    Args:
        data: JPEGファイルの内容

    Returns:
        JpegImage（係数は DC 絶対値の量子化DCT係数）

    Raises:
        UnsupportedJpeg: プログレッシブ・算術符号・12bit・成分数超過・マルチスキャン
        CorruptStream: マーカー不正、テーブル未定義、スキャン途中での終端
    """
    data = bytes(data)
    headers, pos = _read_headers(data)
    frame = headers.frame

    match = _SCAN_END.search(data, pos)
    if match is None:
        raise CorruptStream("scan is truncated (no EOI)")
    if data[match.start() + 1] != EOI:
        raise UnsupportedJpeg(
            f"marker 0xFF{data[match.start() + 1]:02X} after the first scan (multi-scan or DNL)"
        )
    original_scan_bytes = data[pos:match.start()]
    trailer = data[match.end():]

    planes = decode_scan(
        original_scan_bytes.rstrip(b"\xff"),
        frame,
        headers.scan_spec,
        headers.huffman_tables,
        headers.restart_interval,
    )
    logger.debug(
        f"JPEG解析完了: {frame.width}x{frame.height}, 成分数={len(frame.components)}, "
        f"RST={headers.restart_interval}, trailer={len(trailer)}B"
    )
    return JpegImage.from_headers(
        headers,
        planes,
        original_scan_bytes=original_scan_bytes,
        original_file_digest=hashlib.sha256(data).digest(),
        trailer=trailer,
    )
