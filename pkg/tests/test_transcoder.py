"""
トランスコーダ（JPEG ⇔ TLRC）の結合テスト
"""
import dataclasses

import numpy as np
import pytest
import torch

from src.container import ContainerFlags, read_container, write_container
from src.errors import LosslessViolation, ModelMismatch, UnsupportedJpeg
from src.jpeg import build_jpeg
from src.jpeg.types import VerificationReport
from src.transcoder import TranscoderManager, TranscoderModel
from src.transcoder import manager as manager_module
from tests.conftest import random_planes, tiny_model_config


@pytest.fixture
def manager(tiny_model) -> TranscoderManager:
    return TranscoderManager(tiny_model, workers=2)


@pytest.fixture
def direct_manager(direct_model) -> TranscoderManager:
    return TranscoderManager(direct_model, workers=2)


@pytest.mark.parametrize("fixture, branches", [
    ("gray_jpeg", ["luma"]),
    ("color444_jpeg", ["ycc"]),
    ("color420_jpeg", ["luma", "chroma"]),
])
def test_round_trip(manager, request, fixture, branches):
    data = request.getfixturevalue(fixture)
    encoded = manager.encode(data)
    c = read_container(encoded)
    assert c.flags == ContainerFlags.BYTE_EXACT | ContainerFlags.COEFF_EXACT
    assert [b.branch for b in c.branches] == branches
    assert all(b.z and b.y and b.residual for b in c.branches)
    assert manager.decode(encoded, verify=True) == data


SYNTHETIC_SAMPLINGS = (
    ((1, 1),),
    ((1, 1),) * 3,
    ((2, 2), (1, 1), (1, 1)),
    ((2, 1), (1, 1), (1, 1)),
)


def synthetic_jpeg(seed: int) -> bytes:
    """乱数で作ったベースラインJPEG（サンプリング・サイズ・品質・RST・係数の広がりを変える）"""
    rng = np.random.default_rng(seed)
    sampling = SYNTHETIC_SAMPLINGS[seed % len(SYNTHETIC_SAMPLINGS)]
    if seed % 5 == 0:
        # 1 MCU 未満
        width, height = (int(v) for v in rng.integers(1, 8 * sampling[0][0] + 1, size=2))
    else:
        width, height = (int(v) for v in rng.integers(1, 70, size=2))
    spread = 200 if seed % 7 == 0 else int(rng.integers(2, 12))
    planes = random_planes(width, height, sampling, seed=seed, spread=spread)
    return build_jpeg(
        planes, width, height,
        sampling=sampling,
        quality=int(rng.integers(5, 100)),
        restart_interval=int(rng.choice([0, 0, 1, 3])),
    )


@pytest.mark.parametrize("seed", range(50))
def test_synthetic_round_trip(manager, seed):
    data = synthetic_jpeg(seed)
    encoded = manager.encode(data)
    assert read_container(encoded).flags & ContainerFlags.BYTE_EXACT
    assert manager.decode(encoded, verify=True) == data


@pytest.mark.parametrize("fixture", ["gray_jpeg", "color420_jpeg"])
def test_direct_mode_round_trip(direct_manager, request, fixture):
    data = request.getfixturevalue(fixture)
    encoded = direct_manager.encode(data)
    c = read_container(encoded)
    assert c.flags & ContainerFlags.DIRECT_MODE
    assert all(not b.z and not b.y and b.residual for b in c.branches)
    assert direct_manager.decode(encoded, verify=True) == data


def test_encoding_is_deterministic(manager, tiny_model, color420_jpeg):
    first = manager.encode(color420_jpeg)
    assert manager.encode(color420_jpeg) == first
    reloaded = TranscoderManager(TranscoderModel.from_bytes(tiny_model.to_bytes()))
    assert reloaded.encode(color420_jpeg) == first
    assert reloaded.decode(first) == color420_jpeg


def test_other_model_is_rejected(manager, gray_jpeg):
    torch.manual_seed(1)
    other = TranscoderManager(TranscoderModel(tiny_model_config()))
    with pytest.raises(ModelMismatch):
        other.decode(manager.encode(gray_jpeg))


def test_verify_detects_digest_mismatch(manager, gray_jpeg):
    c = read_container(manager.encode(gray_jpeg))
    tampered = write_container(dataclasses.replace(c, original_file_digest=b"\x00" * 32))
    assert manager.decode(tampered) == gray_jpeg
    with pytest.raises(LosslessViolation):
        manager.decode(tampered, verify=True)


def test_raw_scan_fallback(manager, gray_jpeg, monkeypatch):
    monkeypatch.setattr(
        manager_module, "verify_reencode",
        lambda data, image: VerificationReport(byte_exact=False, mismatch_count=3),
    )
    encoded = manager.encode(gray_jpeg)
    c = read_container(encoded)
    assert c.flags & ContainerFlags.RAW_SCAN_FALLBACK
    assert not c.flags & ContainerFlags.BYTE_EXACT
    assert c.branches == () and c.raw_scan
    assert manager.decode(encoded, verify=True) == gray_jpeg


def test_nonstandard_padding_uses_raw_scan(manager, nonstandard_padding_jpeg):
    encoded = manager.encode(nonstandard_padding_jpeg)
    c = read_container(encoded)
    assert c.flags & ContainerFlags.RAW_SCAN_FALLBACK
    assert c.flags & ContainerFlags.COEFF_EXACT
    assert not c.flags & ContainerFlags.BYTE_EXACT
    assert manager.decode(encoded, verify=True) == nonstandard_padding_jpeg


def test_unsupported_mode(color420_jpeg):
    torch.manual_seed(0)
    gray_only = TranscoderModel(tiny_model_config().model_copy(update={"modes": ("gray",)}))
    assert list(gray_only.branches) == ["luma"]
    with pytest.raises(UnsupportedJpeg):
        TranscoderManager(gray_only).encode(color420_jpeg)


def test_roundtrip_report(manager, color420_jpeg):
    result = manager.roundtrip(color420_jpeg, name="sample")
    assert result.name == "sample"
    assert result.lossless and not result.raw_scan_fallback
    assert result.jpeg_bytes == len(color420_jpeg)
    assert result.pixel_count == 32 * 32
    assert result.substreams["lossy"] == result.substreams["z"] + result.substreams["y"]
    assert result.psnr is not None and result.psnr > 0


def test_files(manager, gray_jpeg, tmp_path):
    src = tmp_path / "in.jpg"
    src.write_bytes(gray_jpeg)
    size = manager.encode_file(src, tmp_path / "out.tlrc")
    assert size == (tmp_path / "out.tlrc").stat().st_size
    manager.decode_file(tmp_path / "out.tlrc", tmp_path / "back.jpg", verify=True)
    assert (tmp_path / "back.jpg").read_bytes() == gray_jpeg


def test_from_file(tiny_model, gray_jpeg, tmp_path):
    path = tmp_path / "model.tlrm"
    path.write_bytes(tiny_model.to_bytes())
    loaded = TranscoderManager.from_file(path)
    assert loaded.model_hash == tiny_model.identity_hash()
    assert loaded.decode(TranscoderManager(tiny_model).encode(gray_jpeg)) == gray_jpeg


def test_workers_must_be_positive(tiny_model):
    with pytest.raises(ValueError):
        TranscoderManager(tiny_model, workers=0)


@pytest.mark.asyncio
async def test_batch_operations_keep_order(manager, gray_jpeg, color420_jpeg, color444_jpeg):
    inputs = [gray_jpeg, color420_jpeg, color444_jpeg]
    encoded = await manager.encode_many(inputs)
    assert encoded == [manager.encode(d) for d in inputs]
    assert await manager.decode_many(encoded, verify=True) == inputs

    results = await manager.evaluate_async([("a", gray_jpeg), ("b", color420_jpeg)])
    assert [r.name for r in results] == ["a", "b"]
    assert all(r.lossless for r in results)
