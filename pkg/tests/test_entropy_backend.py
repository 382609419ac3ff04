"""
エントロピー符号化のテスト
"""
import numpy as np
import pytest

from src.entropy import (
    TOTAL,
    RangeDecoder,
    RangeEncoder,
    decode_windowed,
    encode_windowed,
    quantize_cdf,
    quantize_cdf_batch,
    rc_decode,
    rc_encode,
    scale_extent,
    tail_absorbed_pmf,
    window_bounds,
    window_grid,
)
from src.entropy.cdf import MAX_ALPHABET
from src.errors import AlphabetTooLarge, StreamCorrupt


def _random_pmf(rng, size):
    p = rng.gamma(0.3, size=size) + 1e-12
    return p / p.sum()


class TestQuantizedCdf:
    @pytest.mark.parametrize("size", [1, 2, 17, 300, 4096])
    def test_invariants(self, size):
        rng = np.random.default_rng(size)
        cdf = quantize_cdf(_random_pmf(rng, size))
        cum = cdf.cumulative
        assert cum[0] == 0 and cum[-1] == TOTAL
        assert np.all(np.diff(cum) >= 1)
        assert cdf.size == size

    def test_tiny_probabilities_get_width_one(self):
        pmf = np.array([1.0 - 2e-12, 1e-12, 1e-12])
        assert quantize_cdf(pmf).widths.tolist()[1:] == [1, 1]

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        pmf = np.stack([_random_pmf(rng, 9) for _ in range(5)])
        batch = quantize_cdf_batch(pmf)
        for row, p in zip(batch, pmf):
            np.testing.assert_array_equal(row, quantize_cdf(p).cumulative)

    def test_alphabet_too_large(self):
        with pytest.raises(AlphabetTooLarge):
            quantize_cdf(np.full(MAX_ALPHABET + 1, 1.0 / (MAX_ALPHABET + 1)))

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            quantize_cdf(np.array([0.5, 0.6]))

    def test_offset_interval(self):
        cdf = quantize_cdf(np.array([0.25, 0.5, 0.25]), offset=-1)
        assert cdf.interval(-1)[0] == 0
        with pytest.raises(ValueError):
            cdf.interval(2)


class TestRangeCoder:
    def test_empty_stream(self):
        assert len(rc_encode([], [])) == 4

    def test_round_trip_mixed_alphabets(self):
        rng = np.random.default_rng(1)
        cdfs = [quantize_cdf(_random_pmf(rng, int(rng.integers(1, 50)))) for _ in range(2000)]
        symbols = [int(rng.choice(c.size, p=c.widths / TOTAL)) for c in cdfs]
        data = rc_encode(symbols, cdfs)
        assert rc_decode(data, len(symbols), lambda i: cdfs[i]) == symbols

    def test_million_binary_symbols(self):
        rng = np.random.default_rng(2)
        cdf = quantize_cdf(np.array([0.9, 0.1]))
        symbols = (rng.random(1_000_000) < 0.1).astype(int)
        enc = RangeEncoder()
        cum = cdf.cumulative
        for s in symbols:
            enc.encode(int(cum[s]), int(cum[s + 1] - cum[s]))
        data = enc.finish()
        dec = RangeDecoder(data)
        decoded = np.array([dec.decode_index(cum) for _ in range(symbols.size)])
        np.testing.assert_array_equal(decoded, symbols)

    def test_length_close_to_ideal(self):
        rng = np.random.default_rng(3)
        cdfs = [quantize_cdf(_random_pmf(rng, 32)) for _ in range(5000)]
        symbols = [int(rng.choice(32, p=c.widths / TOTAL)) for c in cdfs]
        ideal = sum(c.bits(s) for s, c in zip(symbols, cdfs))
        actual = 8 * len(rc_encode(symbols, cdfs))
        assert actual <= ideal * 1.02 + 64

    @pytest.mark.parametrize("seed", [None, 6])
    def test_uniform_four_symbol_length(self, seed):
        cdf = quantize_cdf(np.full(4, 0.25))
        if seed is None:
            symbols = [0] * 10_000
        else:
            symbols = np.random.default_rng(seed).integers(0, 4, size=10_000).tolist()
        data = rc_encode(symbols, [cdf] * len(symbols))
        assert 2499 <= len(data) <= 2520
        assert rc_decode(data, len(symbols), lambda i: cdf) == symbols

    def test_raw_bits(self):
        enc = RangeEncoder()
        values = [(0, 1), (5, 3), (0xABCDE, 20), (1, 16)]
        for v, n in values:
            enc.encode_bits(v, n)
        dec = RangeDecoder(enc.finish())
        assert [dec.decode_bits(n) for _, n in values] == [v for v, _ in values]

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        cdfs = [quantize_cdf(_random_pmf(rng, 8)) for _ in range(500)]
        symbols = [int(rng.integers(0, 8)) for _ in cdfs]
        assert rc_encode(symbols, cdfs) == rc_encode(symbols, cdfs)

    def test_truncated_stream(self):
        cdf = quantize_cdf(np.full(256, 1 / 256))
        data = rc_encode(list(range(256)) * 4, [cdf] * 1024)
        with pytest.raises(StreamCorrupt):
            rc_decode(data[:100], 1024, lambda i: cdf)


class TestWindowed:
    def test_bounds_stay_in_alphabet(self):
        center = np.array([-4095.0, 0.3, 4094.6, 10.0])
        lo, width = window_bounds(center, scale_extent(np.array([1.0, 2.0, 0.5, 300.0])), -4095, 4095)
        assert width <= 2 * 128 + 1
        assert np.all(lo >= -4095) and np.all(lo + width - 1 <= 4095)

    def test_small_alphabet_is_fully_covered(self):
        lo, width = window_bounds(np.array([0.0]), np.array([50.0]), -3, 3)
        assert width == 7 and lo[0] == -3

    def test_tail_absorbed_pmf_sums_to_one(self):
        inner = np.array([[0.1, 0.4, 0.8, 0.95]])
        pmf = tail_absorbed_pmf(inner)
        assert pmf.shape == (1, 5)
        assert abs(pmf.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(pmf[0], [0.1, 0.3, 0.4, 0.15, 0.05])

    def test_round_trip_with_escapes(self):
        rng = np.random.default_rng(5)
        n = 400
        center = rng.normal(0, 20, size=n)
        scale = rng.uniform(0.3, 3.0, size=n)
        lo, width = window_bounds(center, scale_extent(scale), -4095, 4095)
        grid = window_grid(lo, width)
        t = (grid[:, 1:] - 0.5 - center[:, None]) / scale[:, None]
        pmf = tail_absorbed_pmf(1.0 / (1.0 + np.exp(-t)))
        values = np.rint(center + rng.laplace(0, 2, size=n)).astype(np.int64)
        values[::37] = rng.integers(-4095, 4096, size=values[::37].size)  # 窓外の値
        values[0], values[1] = -4095, 4095

        enc = RangeEncoder()
        encode_windowed(enc, values, lo, pmf, -4095, 4095)
        dec = RangeDecoder(enc.finish())
        np.testing.assert_array_equal(decode_windowed(dec, lo, pmf, -4095, 4095), values)

    def test_value_outside_alphabet(self):
        lo, width = window_bounds(np.zeros(1), np.ones(1), -10, 10)
        pmf = np.full((1, width), 1.0 / width)
        with pytest.raises(ValueError):
            encode_windowed(RangeEncoder(), np.array([11]), lo, pmf, -10, 10)
