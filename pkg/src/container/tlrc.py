"""
TLRC コンテナ（.tlrc）

レイアウト（すべてリトルエンディアン、区切り文字なし）:

    magic "TLRC" | version u16 | flags u16
    width u32 | height u32 | sampling u8
    header segments: count u16, (len u32, bytes)*
    sos segment: len u32, bytes
    trailer: len u32, bytes
    model hash 32B | norm-stats hash 32B
    branches: count u8, (branch u8, z len u32, z, y len u32, y, residual len u32, residual)*
    raw scan: len u32, bytes
    original file digest 32B
    crc32 u32（ここまでの全バイト）
"""
from __future__ import annotations

import binascii
import logging
import struct
from dataclasses import dataclass, field
from enum import IntFlag
from typing import Dict, List, Tuple

from src.errors import ChecksumMismatch, MalformedContainer, VersionError
from src.jpeg.types import SAMPLING_420, SAMPLING_444, SAMPLING_GRAY

logger = logging.getLogger(__name__)

MAGIC = b"TLRC"
VERSION = 1

PREAMBLE_FORMAT = "<4sHHIIB"
PREAMBLE_SIZE = struct.calcsize(PREAMBLE_FORMAT)
HASH_SIZE = 32
CHECKSUM_FORMAT = "<I"
CHECKSUM_SIZE = struct.calcsize(CHECKSUM_FORMAT)

SAMPLING_CODES = {SAMPLING_GRAY: 0, SAMPLING_444: 1, SAMPLING_420: 2}
BRANCH_CODES = {"luma": 0, "chroma": 1, "ycc": 2}


class ContainerFlags(IntFlag):
    BYTE_EXACT = 0x1
    COEFF_EXACT = 0x2
    RAW_SCAN_FALLBACK = 0x4
    DIRECT_MODE = 0x8


KNOWN_FLAGS = (
    ContainerFlags.BYTE_EXACT
    | ContainerFlags.COEFF_EXACT
    | ContainerFlags.RAW_SCAN_FALLBACK
    | ContainerFlags.DIRECT_MODE
)


@dataclass(frozen=True)
class BranchStreams:
    """1ブランチぶんのサブストリーム（DIRECT_MODE では residual のみ）"""
    branch: str
    z: bytes = b""
    y: bytes = b""
    residual: bytes = b""


@dataclass(frozen=True)
class TlrcContainer:
    flags: ContainerFlags
    width: int
    height: int
    sampling: str
    header_segments: Tuple[bytes, ...]
    sos_segment: bytes
    trailer: bytes
    model_hash: bytes
    stats_hash: bytes
    branches: Tuple[BranchStreams, ...] = ()
    raw_scan: bytes = b""
    original_file_digest: bytes = field(default=b"\x00" * HASH_SIZE)

    def substream_sizes(self) -> Dict[str, int]:
        """サブストリームごとのバイト数（lossy = z + y、residual は残差）"""
        sizes = {"z": 0, "y": 0, "residual": 0, "raw_scan": len(self.raw_scan)}
        for b in self.branches:
            sizes["z"] += len(b.z)
            sizes["y"] += len(b.y)
            sizes["residual"] += len(b.residual)
        sizes["lossy"] = sizes["z"] + sizes["y"]
        return sizes


def pack_blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def write_container(c: TlrcContainer) -> bytes:
    """
    コンテナをバイト列にする

    Raises:
        ValueError: フラグやフィールドが矛盾している
    """
    flags = ContainerFlags(c.flags)
    if flags & ContainerFlags.RAW_SCAN_FALLBACK and not c.raw_scan:
        raise ValueError("RAW_SCAN_FALLBACK requires a raw scan blob")
    if c.sampling not in SAMPLING_CODES:
        raise ValueError(f'Invalid "sampling" value "{c.sampling}"')
    for h in (c.model_hash, c.stats_hash, c.original_file_digest):
        if len(h) != HASH_SIZE:
            raise ValueError(f"hashes must be {HASH_SIZE} bytes")

    parts: List[bytes] = [
        struct.pack(PREAMBLE_FORMAT, MAGIC, VERSION, int(flags), c.width, c.height, SAMPLING_CODES[c.sampling]),
        struct.pack("<H", len(c.header_segments)),
    ]
    parts.extend(pack_blob(seg) for seg in c.header_segments)
    parts += [pack_blob(c.sos_segment), pack_blob(c.trailer), c.model_hash, c.stats_hash]
    parts.append(struct.pack("<B", len(c.branches)))
    for b in c.branches:
        if b.branch not in BRANCH_CODES:
            raise ValueError(f'Invalid "branch" value "{b.branch}"')
        parts += [
            struct.pack("<B", BRANCH_CODES[b.branch]),
            pack_blob(b.z),
            pack_blob(b.y),
            pack_blob(b.residual),
        ]
    parts += [pack_blob(c.raw_scan), c.original_file_digest]
    body = b"".join(parts)
    return body + struct.pack(CHECKSUM_FORMAT, binascii.crc32(body))


class BlobReader:
    """先頭から順に切り出す。範囲外は MalformedContainer"""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def cut(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedContainer(f"container ends inside a field at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.cut(struct.calcsize(fmt)))

    def blob(self) -> bytes:
        (n,) = self.unpack("<I")
        return self.cut(n)


def _lookup(table: Dict[str, int], code: int, what: str) -> str:
    for name, value in table.items():
        if value == code:
            return name
    raise MalformedContainer(f"unknown {what} code {code}")


def read_container(data: bytes) -> TlrcContainer:
    """
    Raises:
        MalformedContainer: マジック不一致・途中で終わっている・余分なバイト
        ChecksumMismatch: crc32 が一致しない
        VersionError: 未知のバージョンまたはフラグ
    """
    data = bytes(data)
    if len(data) < PREAMBLE_SIZE + CHECKSUM_SIZE:
        raise MalformedContainer("container is too short")
    if data[:4] != MAGIC:
        raise MalformedContainer("not a TLRC container")
    body, tail = data[:-CHECKSUM_SIZE], data[-CHECKSUM_SIZE:]
    (expected,) = struct.unpack(CHECKSUM_FORMAT, tail)
    if binascii.crc32(body) != expected:
        raise ChecksumMismatch("container checksum does not match")

    r = BlobReader(body)
    _, version, flags, width, height, sampling = r.unpack(PREAMBLE_FORMAT)
    if version != VERSION:
        raise VersionError(f"unsupported container version {version}")
    if flags & ~int(KNOWN_FLAGS):
        raise VersionError(f"unknown container flags 0x{flags:04X}")
    (n_segments,) = r.unpack("<H")
    header_segments = tuple(r.blob() for _ in range(n_segments))
    sos_segment = r.blob()
    trailer = r.blob()
    model_hash = r.cut(HASH_SIZE)
    stats_hash = r.cut(HASH_SIZE)
    (n_branches,) = r.unpack("<B")
    branches = []
    for _ in range(n_branches):
        (code,) = r.unpack("<B")
        branches.append(BranchStreams(
            branch=_lookup(BRANCH_CODES, code, "branch"), z=r.blob(), y=r.blob(), residual=r.blob()
        ))
    raw_scan = r.blob()
    digest = r.cut(HASH_SIZE)
    if r.pos != len(body):
        raise MalformedContainer(f"{len(body) - r.pos} trailing bytes in container")

    flags = ContainerFlags(flags)
    if flags & ContainerFlags.RAW_SCAN_FALLBACK and not raw_scan:
        raise MalformedContainer("RAW_SCAN_FALLBACK set without a raw scan blob")
    return TlrcContainer(
        flags=flags,
        width=width,
        height=height,
        sampling=_lookup(SAMPLING_CODES, sampling, "sampling"),
        header_segments=header_segments,
        sos_segment=sos_segment,
        trailer=trailer,
        model_hash=model_hash,
        stats_hash=stats_hash,
        branches=tuple(branches),
        raw_scan=raw_scan,
        original_file_digest=digest,
    )
