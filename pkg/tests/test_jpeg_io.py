"""
JPEG入出力のテスト
"""
import hashlib

import cv2
import numpy as np
import pytest

from src.errors import CorruptStream, UnsupportedJpeg
from src.jpeg import (
    SAMPLING_420,
    SAMPLING_444,
    SAMPLING_GRAY,
    build_jpeg,
    decode_scan,
    encode_scan,
    header_bytes,
    parse_headers,
    parse_jpeg,
    serialize_jpeg,
    verify_reencode,
)
from tests.conftest import cv2_jpeg, random_planes, smooth_pixels


class TestParse:
    def test_gray(self, gray_jpeg):
        image = parse_jpeg(gray_jpeg)
        assert image.sampling_mode == SAMPLING_GRAY
        assert image.frame.width == 40 and image.frame.height == 32
        assert image.coeff_planes[0].shape == (32, 40)
        assert image.original_file_digest == hashlib.sha256(gray_jpeg).digest()

    def test_sampling_modes(self, color444_jpeg, color420_jpeg):
        assert parse_jpeg(color444_jpeg).sampling_mode == SAMPLING_444
        image = parse_jpeg(color420_jpeg)
        assert image.sampling_mode == SAMPLING_420
        assert image.coeff_planes[0].shape == (32, 32)
        assert image.coeff_planes[1].shape == image.coeff_planes[2].shape == (16, 16)

    def test_synthetic_coefficients_survive(self):
        planes = random_planes(24, 16, [(1, 1)] * 3, seed=5)
        image = parse_jpeg(build_jpeg(planes, 24, 16, sampling=[(1, 1)] * 3))
        for got, want in zip(image.coeff_planes, planes):
            np.testing.assert_array_equal(got, want)

    def test_progressive_is_unsupported(self):
        ok, buf = cv2.imencode(
            ".jpg", smooth_pixels(32, 32), [int(cv2.IMWRITE_JPEG_QUALITY), 80, int(cv2.IMWRITE_JPEG_PROGRESSIVE), 1]
        )
        assert ok
        with pytest.raises(UnsupportedJpeg):
            parse_jpeg(buf.tobytes())

    def test_missing_soi(self):
        with pytest.raises(CorruptStream):
            parse_jpeg(b"\x00\x01\x02\x03")

    def test_truncated_scan(self, gray_jpeg):
        with pytest.raises(CorruptStream):
            parse_jpeg(gray_jpeg[: len(gray_jpeg) // 2])

    def test_trailer_is_kept(self, gray_jpeg):
        data = gray_jpeg + b"camera-trailer"
        image = parse_jpeg(data)
        assert image.trailer == b"camera-trailer"
        assert verify_reencode(data, image).byte_exact


class TestReencode:
    @pytest.mark.parametrize("quality", [55, 75, 95])
    def test_cv2_files_are_byte_exact(self, quality):
        data = cv2_jpeg(smooth_pixels(40, 56, seed=quality), quality)
        image = parse_jpeg(data)
        report = verify_reencode(data, image)
        assert report.byte_exact
        assert report.mismatch_count == 0

    def test_scan_round_trip_with_restart_markers(self):
        planes = random_planes(32, 32, [(2, 2), (1, 1), (1, 1)], seed=7)
        data = build_jpeg(planes, 32, 32, sampling=[(2, 2), (1, 1), (1, 1)], restart_interval=1)
        image = parse_jpeg(data)
        assert image.restart_interval == 1
        assert serialize_jpeg(image, encode_scan(image)) == data
        decoded = decode_scan(
            image.original_scan_bytes, image.frame, image.scan_spec, image.huffman_tables, image.restart_interval
        )
        for got, want in zip(decoded, planes):
            np.testing.assert_array_equal(got, want)

    def test_changed_coefficients_change_bytes(self, gray_jpeg):
        image = parse_jpeg(gray_jpeg)
        plane = image.coeff_planes[0].copy()
        plane[0, 0] += 1
        changed = image.with_planes((plane,))
        assert not verify_reencode(gray_jpeg, changed).byte_exact

    def test_nonstandard_padding_bits(self, nonstandard_padding_jpeg):
        image = parse_jpeg(nonstandard_padding_jpeg)
        report = verify_reencode(nonstandard_padding_jpeg, image)
        assert report.byte_exact is False
        assert report.mismatch_count >= 1


class TestHeaders:
    def test_parse_headers_round_trip(self, color420_jpeg):
        image = parse_jpeg(color420_jpeg)
        headers = parse_headers(header_bytes(image.headers))
        assert headers.frame == image.frame
        assert headers.quant_tables == image.quant_tables
        assert headers.sampling == image.headers.sampling

    def test_parse_headers_rejects_scan_bytes(self, gray_jpeg):
        image = parse_jpeg(gray_jpeg)
        with pytest.raises(CorruptStream):
            parse_headers(header_bytes(image.headers) + b"\x12\x34")
