"""
ベースラインJPEG入出力モジュール
"""
from .parser import parse_headers, parse_jpeg
from .scan_codec import decode_scan, encode_scan, scan_geometry
from .tables import standard_huffman_tables
from .types import (
    SAMPLING_420,
    SAMPLING_444,
    SAMPLING_GRAY,
    JpegHeaders,
    JpegImage,
    VerificationReport,
)
from .writer import (
    build_jpeg,
    coefficient_plane_shapes,
    header_bytes,
    serialize_jpeg,
    verify_reencode,
)

__all__ = [
    "SAMPLING_GRAY",
    "SAMPLING_444",
    "SAMPLING_420",
    "JpegHeaders",
    "JpegImage",
    "VerificationReport",
    "parse_headers",
    "parse_jpeg",
    "decode_scan",
    "encode_scan",
    "scan_geometry",
    "serialize_jpeg",
    "header_bytes",
    "verify_reencode",
    "build_jpeg",
    "coefficient_plane_shapes",
    "standard_huffman_tables",
]
