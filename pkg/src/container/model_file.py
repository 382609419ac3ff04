"""
モデルファイル（.tlrm）

    magic "TLRM" | version u16
    config: len u32, UTF-8 JSON
    metadata: len u32, UTF-8 JSON
    norm stats: count u8, (name len u8, name, channels u32, mean f64*, std f64*)*
    tensors: count u32, (name len u16, name, ndim u8, dims u32*, data f32*)*
    crc32 u32

テンソルは行優先・リトルエンディアンの float32 で、ビットパターンをそのまま保存する。
"""
from __future__ import annotations

import binascii
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
import torch
from torch import Tensor

from src.container.tlrc import CHECKSUM_FORMAT, CHECKSUM_SIZE, BlobReader, pack_blob
from src.dct.image import NormStats
from src.errors import ChecksumMismatch, MalformedContainer, ShapeMismatch, VersionError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"TLRM"
MODEL_VERSION = 1


@dataclass
class ModelRecord:
    """モデルファイルの中身（ネットワークの組み立ては呼び出し側が行う）"""
    config: Dict[str, Any]
    stats: Dict[str, NormStats]
    tensors: Dict[str, Tensor]
    metadata: Dict[str, Any] = field(default_factory=dict)


def _json(obj: Dict[str, Any]) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _stats_bytes(stats: Dict[str, NormStats]) -> bytes:
    parts = [struct.pack("<B", len(stats))]
    for name in sorted(stats):
        s = stats[name]
        raw = name.encode("ascii")
        parts += [
            struct.pack("<B", len(raw)), raw,
            struct.pack("<I", s.channels),
            s.mean.astype("<f8").tobytes(),
            s.std.astype("<f8").tobytes(),
        ]
    return b"".join(parts)


def _tensor_bytes(tensors: Dict[str, Tensor]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().to(torch.float32).contiguous()
        raw = name.encode("utf-8")
        parts += [
            struct.pack("<H", len(raw)), raw,
            struct.pack("<B", t.dim()),
            struct.pack(f"<{t.dim()}I", *t.shape),
            t.numpy().astype("<f4").tobytes(),
        ]
    return b"".join(parts)


def stats_hash(stats: Dict[str, NormStats]) -> bytes:
    return hashlib.sha256(_stats_bytes(stats)).digest()


def model_hash(record: ModelRecord) -> bytes:
    """設定と重みから決まる識別子（学習メタデータは含めない）"""
    return hashlib.sha256(_json(record.config) + _tensor_bytes(record.tensors)).digest()


def write_model(record: ModelRecord) -> bytes:
    body = b"".join((
        MODEL_MAGIC,
        struct.pack("<H", MODEL_VERSION),
        pack_blob(_json(record.config)),
        pack_blob(_json(record.metadata)),
        _stats_bytes(record.stats),
        _tensor_bytes(record.tensors),
    ))
    return body + struct.pack(CHECKSUM_FORMAT, binascii.crc32(body))


def read_model(data: bytes) -> ModelRecord:
    """
    Raises:
        MalformedContainer: マジック不一致・構造不正
        ChecksumMismatch: crc32 が一致しない
        VersionError: 未知のバージョン
        ShapeMismatch: テンソルのデータ長が形状と合わない、または名前の重複
    """
    data = bytes(data)
    if len(data) < 6 + CHECKSUM_SIZE or data[:4] != MODEL_MAGIC:
        raise MalformedContainer("not a TLRM model file")
    body = data[:-CHECKSUM_SIZE]
    (expected,) = struct.unpack(CHECKSUM_FORMAT, data[-CHECKSUM_SIZE:])
    if binascii.crc32(body) != expected:
        raise ChecksumMismatch("model file checksum does not match")

    r = BlobReader(body)
    r.cut(4)
    (version,) = r.unpack("<H")
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model file version {version}")
    try:
        config = json.loads(r.blob().decode("utf-8"))
        metadata = json.loads(r.blob().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedContainer(f"model file config is not valid JSON: {e}") from e

    stats: Dict[str, NormStats] = {}
    (n_stats,) = r.unpack("<B")
    for _ in range(n_stats):
        (n,) = r.unpack("<B")
        name = r.cut(n).decode("ascii")
        (channels,) = r.unpack("<I")
        mean = np.frombuffer(r.cut(8 * channels), dtype="<f8").astype(np.float64)
        std = np.frombuffer(r.cut(8 * channels), dtype="<f8").astype(np.float64)
        stats[name] = NormStats(mean=mean, std=std)

    tensors: Dict[str, Tensor] = {}
    (n_tensors,) = r.unpack("<I")
    for _ in range(n_tensors):
        (n,) = r.unpack("<H")
        name = r.cut(n).decode("utf-8")
        if name in tensors:
            raise ShapeMismatch(f"tensor {name} appears twice")
        (ndim,) = r.unpack("<B")
        shape: List[int] = list(r.unpack(f"<{ndim}I")) if ndim else []
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(r.cut(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
        tensors[name] = torch.from_numpy(values.copy())
    if r.pos != len(body):
        raise MalformedContainer(f"{len(body) - r.pos} trailing bytes in model file")
    return ModelRecord(config=config, stats=stats, tensors=tensors, metadata=metadata)
