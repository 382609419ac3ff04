"""
エントロピー符号化モジュール（整数CDF + レンジコーダ）
"""
from .cdf import PRECISION, TOTAL, QuantizedCdf, quantize_cdf, quantize_cdf_batch
from .range_coder import RangeDecoder, RangeEncoder, rc_decode, rc_encode
from .windowed import (
    decode_windowed,
    encode_windowed,
    scale_extent,
    tail_absorbed_pmf,
    window_bounds,
    window_grid,
)

__all__ = [
    "PRECISION",
    "TOTAL",
    "QuantizedCdf",
    "quantize_cdf",
    "quantize_cdf_batch",
    "RangeEncoder",
    "RangeDecoder",
    "rc_encode",
    "rc_decode",
    "scale_extent",
    "window_bounds",
    "window_grid",
    "tail_absorbed_pmf",
    "encode_windowed",
    "decode_windowed",
]
