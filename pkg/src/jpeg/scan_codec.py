"""
ベースラインJPEGのエントロピー符号化セグメント（スキャン）の復号と再符号化

復号は16bit先読み表によるハフマン復号、符号化はバイトスタッフィング・
1ビット埋め・RSTn マーカー挿入まで含めて標準エンコーダと同じ手順で行う。
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.dct.image import ZIGZAG_ORDER
from src.errors import CategoryOverflow, CorruptStream
from src.jpeg.tables import HuffmanCodec, huffman_codec
from src.jpeg.types import DC_MAX, DC_MIN, FrameHeader, HuffmanSpec, JpegImage, ScanSpec

logger = logging.getLogger(__name__)

# RSTn（直前の 0xFF フィルバイトを含む）
_RST_PATTERN = re.compile(rb"\xff+([\xd0-\xd7])")
# スタッフィングされていない 0xFF（= スキャン途中の不正マーカー）
_BARE_FF_PATTERN = re.compile(rb"\xff(?:[^\x00]|$)")

_ZIGZAG = [int(v) for v in ZIGZAG_ORDER]
_PAD = b"\xff" * 8


@dataclass(frozen=True)
class ScanGeometry:
    """スキャン内の MCU 配置と成分ごとのブロック数"""
    interleaved: bool
    mcus_x: int
    mcus_y: int
    # フレームの成分順
    blocks: Tuple[Tuple[int, int], ...]  # (blocks_v, blocks_h)
    sampling: Tuple[Tuple[int, int], ...]  # (v, h)

    @property
    def mcu_count(self) -> int:
        return self.mcus_x * self.mcus_y


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def scan_geometry(frame: FrameHeader, scan: ScanSpec) -> ScanGeometry:
    """フレームとスキャン指定から MCU 数とブロック数を求める"""
    h_max, v_max = frame.h_max, frame.v_max
    interleaved = len(scan.component_indices) > 1
    sampling = tuple((c.v_sampling, c.h_sampling) for c in frame.components)
    if interleaved:
        mcus_x = _ceil_div(frame.width, 8 * h_max)
        mcus_y = _ceil_div(frame.height, 8 * v_max)
        blocks = tuple((mcus_y * v, mcus_x * h) for v, h in sampling)
        return ScanGeometry(True, mcus_x, mcus_y, blocks, sampling)
    # 非インターリーブ（単一成分）: MCU = 1ブロック
    blocks_list = []
    for c in frame.components:
        bh = _ceil_div(_ceil_div(frame.width * c.h_sampling, h_max), 8)
        bv = _ceil_div(_ceil_div(frame.height * c.v_sampling, v_max), 8)
        blocks_list.append((bv, bh))
    ci = scan.component_indices[0]
    bv, bh = blocks_list[ci]
    return ScanGeometry(False, bh, bv, tuple(blocks_list), sampling)


def _mcu_layout(geom: ScanGeometry, scan: ScanSpec) -> List[Tuple[int, int, int]]:
    """1 MCU 内のブロック列 (成分, MCU内の行オフセット, 列オフセット)"""
    if not geom.interleaved:
        return [(scan.component_indices[0], 0, 0)]
    layout = []
    for ci in scan.component_indices:
        v, h = geom.sampling[ci]
        for dv in range(v):
            for dh in range(h):
                layout.append((ci, dv, dh))
    return layout


def _resolve_codecs(
    scan: ScanSpec, tables: Dict[Tuple[int, int], HuffmanSpec]
) -> Tuple[Dict[int, HuffmanCodec], Dict[int, HuffmanCodec]]:
    dc_codecs: Dict[int, HuffmanCodec] = {}
    ac_codecs: Dict[int, HuffmanCodec] = {}
    for ci, td, ta in zip(scan.component_indices, scan.dc_table_ids, scan.ac_table_ids):
        if (0, td) not in tables or (1, ta) not in tables:
            raise CorruptStream(f"Huffman table referenced before definition: component {ci}")
        dc_codecs[ci] = huffman_codec(tables[(0, td)])
        ac_codecs[ci] = huffman_codec(tables[(1, ta)])
    return dc_codecs, ac_codecs


def _interval_count(mcu_count: int, restart_interval: int) -> int:
    if restart_interval <= 0:
        return 1
    return _ceil_div(mcu_count, restart_interval)


def split_restart_intervals(scan_bytes: bytes) -> List[bytes]:
    """RSTn で区切り、各区間のスタッフィングを解除したデータを返す"""
    pieces: List[bytes] = []
    start = 0
    expected = 0
    for match in _RST_PATTERN.finditer(scan_bytes):
        marker = match.group(1)[0] - 0xD0
        if marker != expected:
            raise CorruptStream(f"restart marker out of sequence: RST{marker}, expected RST{expected}")
        expected = (expected + 1) & 7
        pieces.append(scan_bytes[start:match.start()])
        start = match.end()
    pieces.append(scan_bytes[start:])
    out = []
    for piece in pieces:
        if _BARE_FF_PATTERN.search(piece):
            raise CorruptStream("unexpected marker inside entropy-coded segment")
        out.append(piece.replace(b"\xff\x00", b"\xff"))
    return out


def _decode_interval(
    data: bytes,
    mcu_start: int,
    mcu_stop: int,
    geom: ScanGeometry,
    layout: List[Tuple[int, int, int]],
    dc_codecs: Dict[int, HuffmanCodec],
    ac_codecs: Dict[int, HuffmanCodec],
    coeffs: List[np.ndarray],
) -> None:
    buf = data + _PAD
    limit = len(data) * 8
    pos = 0
    pred = {ci: 0 for ci, _, _ in layout}
    zigzag = _ZIGZAG
    for mcu in range(mcu_start, mcu_stop):
        my, mx = divmod(mcu, geom.mcus_x)
        for ci, dv, dh in layout:
            v, h = geom.sampling[ci] if geom.interleaved else (1, 1)
            by, bx = my * v + dv, mx * h + dh
            block = coeffs[ci][by, bx]
            dc_lookup = dc_codecs[ci].lookup
            ac_lookup = ac_codecs[ci].lookup

            # --- DC ---
            i = pos >> 3
            peek = (((buf[i] << 16) | (buf[i + 1] << 8) | buf[i + 2]) >> (8 - (pos & 7))) & 0xFFFF
            entry = dc_lookup[peek]
            if entry is None:
                raise CorruptStream(f"invalid DC Huffman code at bit {pos}")
            pos += entry[0]
            size = entry[1]
            if size > 11:
                raise CorruptStream(f"DC category {size} exceeds 8-bit baseline limit")
            diff = 0
            if size:
                i = pos >> 3
                peek = (((buf[i] << 16) | (buf[i + 1] << 8) | buf[i + 2]) >> (8 - (pos & 7))) & 0xFFFF
                diff = peek >> (16 - size)
                pos += size
                if diff < (1 << (size - 1)):
                    diff -= (1 << size) - 1
            dc = pred[ci] + diff
            if not DC_MIN <= dc <= DC_MAX:
                raise CorruptStream(f"DC value {dc} out of range")
            pred[ci] = dc
            block[0] = dc

            # --- AC ---
            k = 1
            while k < 64:
                i = pos >> 3
                peek = (((buf[i] << 16) | (buf[i + 1] << 8) | buf[i + 2]) >> (8 - (pos & 7))) & 0xFFFF
                entry = ac_lookup[peek]
                if entry is None:
                    raise CorruptStream(f"invalid AC Huffman code at bit {pos}")
                pos += entry[0]
                rs = entry[1]
                run, size = rs >> 4, rs & 0x0F
                if size == 0:
                    if run == 15:
                        k += 16
                        continue
                    break  # EOB
                if size > 10:
                    raise CorruptStream(f"AC category {size} exceeds 8-bit baseline limit")
                k += run
                if k > 63:
                    raise CorruptStream("AC run overflows the block")
                i = pos >> 3
                peek = (((buf[i] << 16) | (buf[i + 1] << 8) | buf[i + 2]) >> (8 - (pos & 7))) & 0xFFFF
                val = peek >> (16 - size)
                pos += size
                if val < (1 << (size - 1)):
                    val -= (1 << size) - 1
                block[zigzag[k]] = val
                k += 1
            if k > 64:
                raise CorruptStream("AC zero run overflows the block")
            if pos > limit:
                raise CorruptStream("Huffman decode ran past the end of the segment")


def decode_scan(
    scan_bytes: bytes,
    frame: FrameHeader,
    scan: ScanSpec,
    tables: Dict[Tuple[int, int], HuffmanSpec],
    restart_interval: int,
) -> Tuple[np.ndarray, ...]:
    """
    スキャンを復号して成分ごとの係数平面を返す

    Returns:
        フレーム成分順の (blocks_v*8, blocks_h*8) int32 配列。DC は絶対値
    """
    geom = scan_geometry(frame, scan)
    layout = _mcu_layout(geom, scan)
    dc_codecs, ac_codecs = _resolve_codecs(scan, tables)

    # (blocks_v, blocks_h, 64) 自然順で保持し、最後に平面へ並べる
    coeffs = [np.zeros((bv, bh, 64), dtype=np.int32) for bv, bh in geom.blocks]
    intervals = split_restart_intervals(scan_bytes)
    expected = _interval_count(geom.mcu_count, restart_interval)
    if len(intervals) != expected:
        raise CorruptStream(f"scan has {len(intervals)} restart intervals, expected {expected}")
    step = restart_interval if restart_interval > 0 else geom.mcu_count
    for n, data in enumerate(intervals):
        start = n * step
        stop = min(start + step, geom.mcu_count)
        _decode_interval(data, start, stop, geom, layout, dc_codecs, ac_codecs, coeffs)

    planes = []
    for arr in coeffs:
        bv, bh = arr.shape[:2]
        planes.append(np.ascontiguousarray(
            arr.reshape(bv, bh, 8, 8).transpose(0, 2, 1, 3).reshape(bv * 8, bh * 8)
        ))
    return tuple(planes)


class _BitWriter:
    """MSB 優先のビット書き込み（0xFF の後に 0x00 を挿入）"""

    def __init__(self) -> None:
        self.out = bytearray()
        self._acc = 0
        self._n = 0

    def write(self, code: int, length: int) -> None:
        self._acc = (self._acc << length) | code
        self._n += length
        while self._n >= 8:
            self._n -= 8
            byte = (self._acc >> self._n) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self._acc &= (1 << self._n) - 1

    def pad(self) -> None:
        """最終バイトの残りを1ビットで埋める"""
        if self._n:
            fill = 8 - self._n
            self.write((1 << fill) - 1, fill)


def _emit(writer: _BitWriter, codec: HuffmanCodec, symbol: int, what: str) -> None:
    code = codec.encode(symbol)
    if code is None:
        raise CategoryOverflow(f"{what} symbol 0x{symbol:02X} is not encodable with this Huffman table")
    writer.write(*code)


def _encode_block(
    writer: _BitWriter, block: Sequence[int], diff: int, dc: HuffmanCodec, ac: HuffmanCodec
) -> None:
    size = abs(diff).bit_length()
    if size > 11:
        raise CategoryOverflow(f"DC difference {diff} needs category {size}")
    _emit(writer, dc, size, "DC")
    if size:
        writer.write(diff if diff >= 0 else diff + (1 << size) - 1, size)
    run = 0
    for k in range(1, 64):
        val = block[_ZIGZAG[k]]
        if val == 0:
            run += 1
            continue
        while run > 15:
            _emit(writer, ac, 0xF0, "AC")
            run -= 16
        size = abs(val).bit_length()
        if size > 10:
            raise CategoryOverflow(f"AC value {val} needs category {size}")
        _emit(writer, ac, (run << 4) | size, "AC")
        writer.write(val if val >= 0 else val + (1 << size) - 1, size)
        run = 0
    if run:
        _emit(writer, ac, 0x00, "AC")


def encode_planes(
    planes: Sequence[np.ndarray],
    frame: FrameHeader,
    scan: ScanSpec,
    tables: Dict[Tuple[int, int], HuffmanSpec],
    restart_interval: int,
) -> bytes:
    """係数平面をベースラインのハフマン符号でスキャンに符号化する"""
    geom = scan_geometry(frame, scan)
    layout = _mcu_layout(geom, scan)
    dc_codecs, ac_codecs = _resolve_codecs(scan, tables)

    blocks: Dict[int, List[List[List[int]]]] = {}
    for ci in scan.component_indices:
        bv, bh = geom.blocks[ci]
        plane = np.asarray(planes[ci])
        if plane.shape != (bv * 8, bh * 8):
            raise CorruptStream(f"component {ci} plane shape {plane.shape} != {(bv * 8, bh * 8)}")
        arr = plane.reshape(bv, 8, bh, 8).transpose(0, 2, 1, 3).reshape(bv, bh, 64)
        blocks[ci] = arr.tolist()

    writer = _BitWriter()
    step = restart_interval if restart_interval > 0 else geom.mcu_count
    n_intervals = _interval_count(geom.mcu_count, restart_interval)
    for n in range(n_intervals):
        pred = {ci: 0 for ci in scan.component_indices}
        for mcu in range(n * step, min((n + 1) * step, geom.mcu_count)):
            my, mx = divmod(mcu, geom.mcus_x)
            for ci, dv, dh in layout:
                v, h = geom.sampling[ci] if geom.interleaved else (1, 1)
                block = blocks[ci][my * v + dv][mx * h + dh]
                dc = int(block[0])
                _encode_block(writer, block, dc - pred[ci], dc_codecs[ci], ac_codecs[ci])
                pred[ci] = dc
        writer.pad()
        if n + 1 < n_intervals:
            writer.out.extend((0xFF, 0xD0 + (n & 7)))
    return bytes(writer.out)


def encode_scan(image: JpegImage) -> bytes:
    """JpegImage の係数をそのテーブルで再符号化したスキャンを返す"""
    return encode_planes(
        image.coeff_planes, image.frame, image.scan_spec, image.huffman_tables, image.restart_interval
    )
