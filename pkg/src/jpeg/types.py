"""ベースラインJPEGの解析結果を保持するデータ型"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

# 8bitベースラインの係数範囲（DCはカテゴリ11、ACはカテゴリ10まで）
DC_MIN, DC_MAX = -2048, 2047
AC_MIN, AC_MAX = -1023, 1023

SAMPLING_GRAY = "gray"
SAMPLING_444 = "444"
SAMPLING_420 = "420"


@dataclass(frozen=True)
class FrameComponent:
    id: int
    h_sampling: int
    v_sampling: int
    quant_table_id: int


@dataclass(frozen=True)
class FrameHeader:
    precision: int
    height: int
    width: int
    components: Tuple[FrameComponent, ...]

    @property
    def h_max(self) -> int:
        return max(c.h_sampling for c in self.components)

    @property
    def v_max(self) -> int:
        return max(c.v_sampling for c in self.components)


@dataclass(frozen=True)
class HuffmanSpec:
    """DHTで定義されたハフマンテーブル（長さ別の符号数とシンボル列）"""
    bits: Tuple[int, ...]
    values: Tuple[int, ...]


@dataclass(frozen=True)
class ScanSpec:
    """SOSで指定された成分順とテーブル割り当て"""
    component_indices: Tuple[int, ...]
    dc_table_ids: Tuple[int, ...]
    ac_table_ids: Tuple[int, ...]
    ss: int = 0
    se: int = 63
    ah: int = 0
    al: int = 0


@dataclass(frozen=True)
class JpegHeaders:
    """SOI から SOS までのヘッダー部（スキャンを含まない）"""
    header_segments: Tuple[bytes, ...]
    frame: FrameHeader
    quant_tables: Dict[int, Tuple[int, ...]]
    huffman_tables: Dict[Tuple[int, int], HuffmanSpec]
    restart_interval: int
    scan_spec: ScanSpec
    sos_segment: bytes

    @property
    def sampling(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((c.h_sampling, c.v_sampling) for c in self.frame.components)


@dataclass(frozen=True)
class JpegImage:
    """
    解析済みベースラインJPEG

    coeff_planes は成分ごとに (blocks_v*8, blocks_h*8) の整数行列で、
    各8x8ブロックに量子化DCT係数を自然順（行, 列）で保持する。
    DCは差分を解決した絶対値。
    """
    header_segments: Tuple[bytes, ...]
    frame: FrameHeader
    quant_tables: Dict[int, Tuple[int, ...]]
    huffman_tables: Dict[Tuple[int, int], HuffmanSpec]
    restart_interval: int
    scan_spec: ScanSpec
    sos_segment: bytes
    coeff_planes: Tuple[np.ndarray, ...]
    original_scan_bytes: bytes
    original_file_digest: bytes
    trailer: bytes = b""
    interleaved: Optional[bool] = field(default=None)

    def __post_init__(self) -> None:
        for plane in self.coeff_planes:
            plane.setflags(write=False)
        if self.interleaved is None:
            object.__setattr__(self, "interleaved", len(self.scan_spec.component_indices) > 1)

    @property
    def pixel_count(self) -> int:
        return self.frame.width * self.frame.height

    @property
    def n_components(self) -> int:
        return len(self.frame.components)

    @property
    def sampling_mode(self) -> Optional[str]:
        """gray / 444 / 420（色差が互いに同サイズで輝度より小さい場合）。対象外は None"""
        if self.n_components == 1:
            return SAMPLING_GRAY
        if self.n_components != 3:
            return None
        shapes = [p.shape for p in self.coeff_planes]
        if shapes[0] == shapes[1] == shapes[2]:
            return SAMPLING_444
        if shapes[1] == shapes[2]:
            return SAMPLING_420
        return None

    @property
    def headers(self) -> JpegHeaders:
        return JpegHeaders(
            header_segments=self.header_segments,
            frame=self.frame,
            quant_tables=self.quant_tables,
            huffman_tables=self.huffman_tables,
            restart_interval=self.restart_interval,
            scan_spec=self.scan_spec,
            sos_segment=self.sos_segment,
        )

    @classmethod
    def from_headers(
        cls,
        headers: JpegHeaders,
        planes: Tuple[np.ndarray, ...],
        original_scan_bytes: bytes = b"",
        original_file_digest: bytes = b"",
        trailer: bytes = b"",
    ) -> "JpegImage":
        return cls(
            header_segments=headers.header_segments,
            frame=headers.frame,
            quant_tables=headers.quant_tables,
            huffman_tables=headers.huffman_tables,
            restart_interval=headers.restart_interval,
            scan_spec=headers.scan_spec,
            sos_segment=headers.sos_segment,
            coeff_planes=tuple(np.asarray(p, dtype=np.int32) for p in planes),
            original_scan_bytes=original_scan_bytes,
            original_file_digest=original_file_digest,
            trailer=trailer,
        )

    def with_planes(self, planes: Tuple[np.ndarray, ...]) -> "JpegImage":
        """係数だけを差し替えたコピーを返す"""
        return JpegImage(
            header_segments=self.header_segments,
            frame=self.frame,
            quant_tables=self.quant_tables,
            huffman_tables=self.huffman_tables,
            restart_interval=self.restart_interval,
            scan_spec=self.scan_spec,
            sos_segment=self.sos_segment,
            coeff_planes=tuple(np.array(p, dtype=np.int32) for p in planes),
            original_scan_bytes=self.original_scan_bytes,
            original_file_digest=self.original_file_digest,
            trailer=self.trailer,
            interleaved=self.interleaved,
        )


@dataclass(frozen=True)
class VerificationReport:
    byte_exact: bool
    mismatch_count: int
