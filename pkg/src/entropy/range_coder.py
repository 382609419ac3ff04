"""
レンジコーダ

64bit の low（桁上がり付き）と 32bit の range を持つ LZMA 方式の整数レンジコーダ。
出力はシンボル列と整数CDF列だけで決まり、浮動小数点の状態を持たない。
"""
from __future__ import annotations

import logging
from typing import Callable, List, Sequence

import numpy as np

from src.entropy.cdf import PRECISION, TOTAL, QuantizedCdf
from src.errors import StreamCorrupt

logger = logging.getLogger(__name__)

MASK32 = 0xFFFFFFFF
TOP = 1 << 24
# 生ビットを1回で符号化する最大ビット数
MAX_RAW_BITS = 16


class RangeEncoder:
    """
    レンジ符号化器

    先頭の常に 0 となるバイトは出力しない。finish() で 4 バイトを掃き出すので、
    空のストリームは 4 バイトになる。
    """

    def __init__(self) -> None:
        self._low = 0
        self._range = MASK32
        self._cache = 0
        self._cache_size = 1
        self._skip_first = True
        self._out = bytearray()
        self._finished = False

    def _shift_low(self) -> None:
        low = self._low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self._cache
            while True:
                if self._skip_first:
                    self._skip_first = False
                else:
                    self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self._low = (low << 8) & MASK32

    def encode(self, start: int, width: int, precision: int = PRECISION) -> None:
        """区間 [start, start+width) / 2^precision を符号化する"""
        total = 1 << precision
        if width < 1 or start < 0 or start + width > total:
            raise ValueError(f"invalid interval [{start}, {start + width}) for precision {precision}")
        r = self._range >> precision
        self._low += r * start
        if start + width < total:
            self._range = r * width
        else:
            # 最後のシンボルは切り捨て分も含める
            self._range -= r * start
        while self._range < TOP:
            self._range <<= 8
            self._shift_low()

    def encode_symbol(self, value: int, cdf: QuantizedCdf) -> None:
        start, width = cdf.interval(value)
        self.encode(start, width)

    def encode_bits(self, value: int, nbits: int) -> None:
        """value を nbits の一様分布で符号化する（16bit を超える場合は分割）"""
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        while nbits > 0:
            n = min(nbits, MAX_RAW_BITS)
            nbits -= n
            self.encode((value >> nbits) & ((1 << n) - 1), 1, n)

    def finish(self) -> bytes:
        if not self._finished:
            for _ in range(5):
                self._shift_low()
            self._finished = True
        return bytes(self._out)


class RangeDecoder:
    """RangeEncoder の出力を復号する。ストリーム終端を越えると StreamCorrupt"""

    def __init__(self, data: bytes) -> None:
        self._data = bytes(data)
        self._pos = 0
        self._range = MASK32
        self._code = 0
        self._r = 0
        self._total = TOTAL
        for _ in range(4):
            self._code = (self._code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise StreamCorrupt("range decoder read past the end of the stream")
        b = self._data[self._pos]
        self._pos += 1
        return b

    @property
    def bytes_consumed(self) -> int:
        return self._pos

    def decode_target(self, precision: int = PRECISION) -> int:
        """次のシンボルの累積頻度位置（update の前に呼ぶ）"""
        self._total = 1 << precision
        self._r = self._range >> precision
        return min(self._code // self._r, self._total - 1)

    def update(self, start: int, width: int) -> None:
        r = self._r
        self._code -= r * start
        if start + width < self._total:
            self._range = r * width
        else:
            self._range -= r * start
        if not 0 <= self._code < self._range:
            raise StreamCorrupt("range decoder lost synchronisation")
        while self._range < TOP:
            self._code = ((self._code << 8) | self._next_byte()) & MASK32
            self._range <<= 8

    def decode_symbol(self, cdf: QuantizedCdf) -> int:
        target = self.decode_target()
        i = int(np.searchsorted(cdf.cumulative, target, side="right")) - 1
        start = int(cdf.cumulative[i])
        self.update(start, int(cdf.cumulative[i + 1]) - start)
        return i + cdf.offset

    def decode_index(self, cumulative: np.ndarray) -> int:
        """累積頻度表（offset 0）からシンボル番号を復号する"""
        target = self.decode_target()
        i = int(np.searchsorted(cumulative, target, side="right")) - 1
        start = int(cumulative[i])
        self.update(start, int(cumulative[i + 1]) - start)
        return i

    def decode_bits(self, nbits: int) -> int:
        value = 0
        while nbits > 0:
            n = min(nbits, MAX_RAW_BITS)
            nbits -= n
            v = self.decode_target(n)
            self.update(v, 1)
            value = (value << n) | v
        return value


def rc_encode(symbols: Sequence[int], cdfs: Sequence[QuantizedCdf]) -> bytes:
    """シンボル列をシンボルごとの CDF で符号化する"""
    if len(symbols) != len(cdfs):
        raise ValueError(f"{len(symbols)} symbols but {len(cdfs)} CDFs")
    enc = RangeEncoder()
    for value, cdf in zip(symbols, cdfs):
        enc.encode_symbol(value, cdf)
    return enc.finish()


def rc_decode(data: bytes, count: int, cdf_provider: Callable[[int], QuantizedCdf]) -> List[int]:
    """
    count 個のシンボルを復号する

    cdf_provider(i) は i 番目のシンボルの CDF を返す。適応モデルでは
    それまでに復号した値を閉包で参照してよい。
    """
    dec = RangeDecoder(data)
    return [dec.decode_symbol(cdf_provider(i)) for i in range(count)]
