"""
ファイル形式モジュール（.tlrc コンテナ / .tlrm モデルファイル）
"""
from .model_file import ModelRecord, model_hash, read_model, stats_hash, write_model
from .tlrc import BranchStreams, ContainerFlags, TlrcContainer, read_container, write_container

__all__ = [
    "ContainerFlags",
    "BranchStreams",
    "TlrcContainer",
    "write_container",
    "read_container",
    "ModelRecord",
    "write_model",
    "read_model",
    "model_hash",
    "stats_hash",
]
