"""
コマンドライン（app.py）のテスト
"""
import dataclasses
import json

import pytest

import app
from src.container import read_container, write_container


@pytest.fixture
def model_path(tmp_path, tiny_model):
    path = tmp_path / "model.tlrm"
    path.write_bytes(tiny_model.to_bytes())
    return path


@pytest.fixture
def jpeg_path(tmp_path, color420_jpeg):
    path = tmp_path / "photo.jpg"
    path.write_bytes(color420_jpeg)
    return path


def test_encode_decode(model_path, jpeg_path, tmp_path):
    tlrc = tmp_path / "photo.tlrc"
    back = tmp_path / "back.jpg"
    assert app.main(["encode", str(jpeg_path), str(tlrc), "--model", str(model_path)]) == app.EXIT_OK
    assert app.main(["decode", str(tlrc), str(back), "--model", str(model_path), "--verify"]) == app.EXIT_OK
    assert back.read_bytes() == jpeg_path.read_bytes()


def test_usage_errors(tmp_path):
    assert app.main([]) == app.EXIT_USAGE
    assert app.main(["compress", "a", "b"]) == app.EXIT_USAGE
    assert app.main(["encode", "a.jpg"]) == app.EXIT_USAGE
    # JOINT には --resume か --from-scratch が必要
    assert app.main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "m.tlrm")]) == app.EXIT_USAGE
    assert app.main(["train", "--phase", "lossy", "--data", str(tmp_path), "--out", "m", "--tile-size", "20"]) \
        == app.EXIT_USAGE


def test_data_errors(model_path, jpeg_path, tmp_path):
    assert app.main(["encode", str(tmp_path / "missing.jpg"), str(tmp_path / "x"), "--model", str(model_path)]) \
        == app.EXIT_DATA

    tlrc = tmp_path / "photo.tlrc"
    app.main(["encode", str(jpeg_path), str(tlrc), "--model", str(model_path)])
    data = bytearray(tlrc.read_bytes())
    data[30] ^= 0xFF
    tlrc.write_bytes(bytes(data))
    assert app.main(["decode", str(tlrc), str(tmp_path / "o.jpg"), "--model", str(model_path)]) == app.EXIT_DATA


def test_verify_failure(model_path, jpeg_path, tmp_path):
    tlrc = tmp_path / "photo.tlrc"
    app.main(["encode", str(jpeg_path), str(tlrc), "--model", str(model_path)])
    c = read_container(tlrc.read_bytes())
    tlrc.write_bytes(write_container(dataclasses.replace(c, original_file_digest=b"\x01" * 32)))
    args = ["decode", str(tlrc), str(tmp_path / "o.jpg"), "--model", str(model_path)]
    assert app.main(args) == app.EXIT_OK
    assert app.main(args + ["--verify"]) == app.EXIT_LOSSLESS


def test_inspect(model_path, jpeg_path, tmp_path, tiny_model, capsys):
    tlrc = tmp_path / "photo.tlrc"
    app.main(["encode", str(jpeg_path), str(tlrc), "--model", str(model_path)])

    info = app.inspect_bytes(tlrc.read_bytes())
    assert info["type"] == "container"
    assert info["flags"] == ["BYTE_EXACT", "COEFF_EXACT"]
    assert info["sampling"] == "420" and info["branches"] == ["luma", "chroma"]
    assert info["model_hash"] == tiny_model.identity_hash().hex()
    assert info["total_bytes"] == tlrc.stat().st_size

    info = app.inspect_bytes(model_path.read_bytes())
    assert info["type"] == "model"
    assert info["parameters"] == sum(t.numel() for t in tiny_model.state_dict().values())
    assert info["branches"] == ["chroma", "luma", "ycc"]

    capsys.readouterr()
    assert app.main(["inspect", str(model_path)]) == app.EXIT_OK
    assert json.loads(capsys.readouterr().out)["type"] == "model"

    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"GIF89a")
    assert app.main(["inspect", str(junk)]) == app.EXIT_USAGE


def test_eval_report(model_path, corpus_dir, tmp_path):
    report = tmp_path / "report.csv"
    assert app.main(["eval", "--model", str(model_path), "--corpus", str(corpus_dir),
                     "--report", str(report), "--workers", "2"]) == app.EXIT_OK
    lines = report.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6 and lines[-1].startswith("TOTAL,")
