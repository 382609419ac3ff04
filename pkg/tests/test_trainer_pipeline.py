"""
学習・評価パイプラインのテスト
"""
import json

import cv2
import numpy as np
import pytest
import torch

from src.container.model_file import read_model
from src.dct.image import blocks_to_dct_image, compute_norm_stats
from src.errors import EmptyCorpus, LosslessViolation, MissingCorpusForQp, NonFiniteLoss
from src.jpeg import parse_jpeg
from src.trainer import (
    EvalReport,
    EvalRow,
    LossTerms,
    TrainConfig,
    TrainPhase,
    bit_saving,
    branch_loss,
    evaluate,
    evaluate_items,
    evaluate_items_async,
    extract_tiles,
    ingest_corpus,
    joint_loss,
    list_jpegs,
    load_baseline_sizes,
    qp_sweep,
    residual_share,
    summarize_datasets,
    train,
)
from src.trainer import trainer as trainer_module
from src.transcoder import TranscoderManager, TranscoderModel
from tests.conftest import cv2_jpeg, smooth_pixels, tiny_model_config


def train_config(corpus, out, **overrides) -> TrainConfig:
    options = dict(
        corpus=corpus,
        out=out,
        phase=TrainPhase.JOINT,
        from_scratch=True,
        steps=4,
        batch_size=2,
        tile_size=16,
        tiles_per_image=2,
        log_every=2,
        checkpoint_every=100,
        model=tiny_model_config(),
    )
    options.update(overrides)
    return TrainConfig(**options)


# ============================================================
# 損失と指標
# ============================================================

class TestLossAndMetrics:
    def test_joint_loss(self):
        assert joint_loss(1.0, 2.0, 100.0, 0.03) == pytest.approx(6.0)
        assert joint_loss(1.0, 2.0, 100.0, 0.03, TrainPhase.LOSSY_PRETRAIN) == pytest.approx(4.0)

    def test_bit_saving(self):
        assert bit_saving(3.392, 2.665) == pytest.approx(21.43, abs=0.01)
        assert bit_saving(3.392, 2.777) == pytest.approx(18.13, abs=0.05)
        assert bit_saving(3.392, 2.834) == pytest.approx(16.45, abs=0.01)
        with pytest.raises(ValueError):
            bit_saving(0.0, 1.0)

    def test_residual_share(self):
        assert residual_share(0.77, 3.23) == pytest.approx(80.75)
        assert residual_share(0.0, 0.0) == 0.0

    def test_branch_loss_terms(self, tiny_model):
        branch = tiny_model.branches["luma"]
        batch = np.random.default_rng(0).integers(-20, 20, size=(2, 16, 16, 64))
        gen = torch.Generator().manual_seed(0)
        terms = branch_loss(branch, batch, 0.03, TrainPhase.JOINT, gen)
        assert isinstance(terms, LossTerms)
        values = terms.as_floats()
        assert values["r_yz"] > 0 and values["r_r"] > 0 and values["d"] > 0
        assert values["total"] == pytest.approx(values["r_yz"] + values["r_r"] + 0.03 * values["d"], rel=1e-5)

        pre = branch_loss(branch, batch, 0.03, TrainPhase.LOSSY_PRETRAIN, torch.Generator().manual_seed(0))
        assert float(pre.r_r) == 0.0

    def test_direct_branch_loss(self, direct_model):
        batch = np.random.default_rng(0).integers(-20, 20, size=(1, 16, 16, 64))
        terms = branch_loss(direct_model.branches["luma"], batch, 0.03)
        assert float(terms.r_yz) == 0.0 and float(terms.d) == 0.0
        assert float(terms.total) == pytest.approx(float(terms.r_r))


# ============================================================
# 設定
# ============================================================

class TestTrainConfig:
    def test_joint_needs_start_point(self, tmp_path):
        with pytest.raises(ValueError):
            train_config(tmp_path, tmp_path / "m.tlrm", from_scratch=False)
        train_config(tmp_path, tmp_path / "m.tlrm", from_scratch=False, resume=tmp_path / "p.tlrm")
        train_config(tmp_path, tmp_path / "m.tlrm", from_scratch=False, direct=True)

    def test_direct_cannot_pretrain(self, tmp_path):
        with pytest.raises(ValueError):
            train_config(tmp_path, tmp_path / "m.tlrm", phase=TrainPhase.LOSSY_PRETRAIN, direct=True)

    def test_tile_size_multiple_of_16(self, tmp_path):
        with pytest.raises(ValueError):
            train_config(tmp_path, tmp_path / "m.tlrm", tile_size=20)

    def test_lambda_alias_and_schedule(self, tmp_path):
        cfg = TrainConfig(**{"lambda": 0.1}, corpus=tmp_path, out=tmp_path / "m", from_scratch=True, steps=100)
        assert cfg.lmbda == 0.1
        assert cfg.model_config_for_run().lossy.lmbda == 0.1
        assert cfg.lr_at(89) == cfg.lr_initial
        assert cfg.lr_at(90) == cfg.lr_decayed


# ============================================================
# コーパス
# ============================================================

class TestCorpus:
    def test_list_jpegs(self, corpus_dir):
        (corpus_dir / "notes.txt").write_text("x")
        assert [p.name for p in list_jpegs(corpus_dir)] == ["color_0.jpg", "color_1.jpg", "gray_0.jpg", "gray_1.jpg"]
        with pytest.raises(EmptyCorpus):
            list_jpegs(corpus_dir / "missing")

    def test_extract_tiles_pads_small_images(self):
        x = np.ones((5, 20, 64), dtype=np.int64)
        tiles = extract_tiles(x, 16, 3, np.random.default_rng(0))
        assert tiles.shape == (3, 16, 16, 64)
        assert tiles[:, 5:].sum() == 0
        assert np.all(tiles[:, :5] == 1)

    def test_ingest(self, corpus_dir):
        ok, buf = cv2.imencode(".jpg", smooth_pixels(32, 32, channels=1),
                               [int(cv2.IMWRITE_JPEG_QUALITY), 80, int(cv2.IMWRITE_JPEG_PROGRESSIVE), 1])
        assert ok
        (corpus_dir / "progressive.jpg").write_bytes(buf.tobytes())

        ds = ingest_corpus(corpus_dir, tiny_model_config(), tile=16, tiles_per_image=2, seed=0)
        assert ds.skipped == 1
        assert "progressive.jpg" not in ds.files and len(ds.files) == 4
        assert ds.tiles["luma"].shape == (8, 16, 16, 64)
        assert ds.tiles["chroma"].shape == (4, 16, 16, 128)
        assert "ycc" not in ds.branch_names
        assert ds.stats["luma"].channels == 64 and ds.stats["chroma"].channels == 128
        assert len(ds) == 12

    def test_stats_use_whole_images(self, corpus_dir):
        ds = ingest_corpus(corpus_dir, tiny_model_config(), tile=16, tiles_per_image=1)
        lumas = [blocks_to_dct_image(parse_jpeg(p.read_bytes()).coeff_planes[0]) for p in list_jpegs(corpus_dir)]
        expected = compute_norm_stats(lumas)
        np.testing.assert_allclose(ds.stats["luma"].mean, expected.mean)
        np.testing.assert_allclose(ds.stats["luma"].std, expected.std)

    def test_ingest_is_deterministic(self, corpus_dir):
        a = ingest_corpus(corpus_dir, tiny_model_config(), tile=16, tiles_per_image=2, seed=3)
        b = ingest_corpus(corpus_dir, tiny_model_config(), tile=16, tiles_per_image=2, seed=3)
        assert a.digest == b.digest
        for name in a.tiles:
            np.testing.assert_array_equal(a.tiles[name], b.tiles[name])

    def test_batches_cycle_branches(self, corpus_dir):
        ds = ingest_corpus(corpus_dir, tiny_model_config(), tile=16, tiles_per_image=2, seed=0)
        stream = ds.batches(3, np.random.default_rng(0))
        drawn = [next(stream) for _ in range(4)]
        assert [name for name, _ in drawn] == list(ds.branch_names) * 2
        for name, batch in drawn:
            assert batch.shape == (3,) + ds.tiles[name].shape[1:]

        only_luma = ds.batches(5, np.random.default_rng(0), names=["luma"])
        assert [next(only_luma)[0] for _ in range(3)] == ["luma"] * 3
        with pytest.raises(ValueError):
            next(ds.batches(2, np.random.default_rng(0), names=[]))

    def test_empty_corpus(self, tmp_path):
        with pytest.raises(EmptyCorpus):
            ingest_corpus(tmp_path)
        ok, buf = cv2.imencode(".jpg", smooth_pixels(16, 16, channels=1),
                               [int(cv2.IMWRITE_JPEG_QUALITY), 80, int(cv2.IMWRITE_JPEG_PROGRESSIVE), 1])
        (tmp_path / "only_progressive.jpg").write_bytes(buf.tobytes())
        with pytest.raises(EmptyCorpus):
            ingest_corpus(tmp_path, tiny_model_config())


# ============================================================
# 学習
# ============================================================

class TestTraining:
    def test_joint_from_scratch(self, corpus_dir, tmp_path):
        out = tmp_path / "joint.tlrm"
        result = train(train_config(corpus_dir, out))
        assert result.steps == 4 and len(result.history) == 4
        assert all(np.isfinite(r["total"]) for r in result.history)
        record = read_model(out.read_bytes())
        assert record.metadata["phase"] == "JOINT"
        assert record.metadata["steps"] == 4
        assert record.metadata["corpus_files"] == 4
        reloaded = TranscoderModel.from_bytes(out.read_bytes())
        assert reloaded.identity_hash() == result.model.identity_hash()

    def test_same_seed_same_model(self, corpus_dir, tmp_path):
        train(train_config(corpus_dir, tmp_path / "a.tlrm", seed=7))
        train(train_config(corpus_dir, tmp_path / "b.tlrm", seed=7))
        assert (tmp_path / "a.tlrm").read_bytes() == (tmp_path / "b.tlrm").read_bytes()

    def test_pretrain_then_joint(self, corpus_dir, tmp_path):
        pre_cfg = train_config(corpus_dir, tmp_path / "pre.tlrm", phase=TrainPhase.LOSSY_PRETRAIN, seed=5)
        pre = train(pre_cfg)
        assert all(r["r_r"] == 0.0 for r in pre.history)

        torch.manual_seed(5)
        initial = TranscoderModel(pre_cfg.model_config_for_run()).state_dict()
        trained = pre.model.state_dict()
        residual = [k for k in initial if ".residual." in k]
        lossy = [k for k in initial if ".lossy." in k]
        assert residual and lossy
        assert all(torch.equal(initial[k], trained[k]) for k in residual)
        assert any(not torch.equal(initial[k], trained[k]) for k in lossy)

        joint = train(train_config(corpus_dir, tmp_path / "joint.tlrm", from_scratch=False,
                                   resume=tmp_path / "pre.tlrm"))
        assert all(r["r_r"] > 0 for r in joint.history)
        assert joint.model.stats_hash() == pre.model.stats_hash()

    def test_direct_training(self, corpus_dir, tmp_path):
        result = train(train_config(corpus_dir, tmp_path / "direct.tlrm", from_scratch=False, direct=True))
        assert result.model.config.direct
        assert all(r["r_yz"] == 0.0 and r["d"] == 0.0 for r in result.history)

    def test_resume_must_match_direct_flag(self, corpus_dir, tmp_path):
        train(train_config(corpus_dir, tmp_path / "a.tlrm", steps=1))
        with pytest.raises(ValueError):
            train(train_config(corpus_dir, tmp_path / "b.tlrm", from_scratch=False, direct=True,
                               resume=tmp_path / "a.tlrm"))

    def test_non_finite_loss(self, corpus_dir, tmp_path, monkeypatch):
        real = trainer_module.branch_loss
        calls = []

        def diverging(*args, **kwargs):
            terms = real(*args, **kwargs)
            calls.append(1)
            if len(calls) == 3:
                nan = torch.tensor(float("nan"))
                return LossTerms(r_yz=terms.r_yz, r_r=terms.r_r, d=terms.d, total=nan)
            return terms

        monkeypatch.setattr(trainer_module, "branch_loss", diverging)
        out = tmp_path / "m.tlrm"
        with pytest.raises(NonFiniteLoss):
            train(train_config(corpus_dir, out))
        record = read_model(out.read_bytes())
        assert record.metadata["steps"] == 2


# ============================================================
# 評価
# ============================================================

@pytest.fixture
def manager(tiny_model) -> TranscoderManager:
    return TranscoderManager(tiny_model, workers=2)


class TestEvaluation:
    def test_report(self, manager, corpus_dir, tmp_path):
        sizes = {"lepton": {"gray_0.jpg": 100, "gray_1.jpg": 110, "color_0.jpg": 90, "color_1.jpg": 95}}
        path = tmp_path / "baseline.json"
        path.write_text(json.dumps(sizes))
        report = evaluate(manager, corpus_dir, load_baseline_sizes(path))

        assert [r.name for r in report.rows] == ["color_0.jpg", "color_1.jpg", "gray_0.jpg", "gray_1.jpg"]
        total = report.total
        assert total.pixels == 2 * 48 * 48 + 2 * 32 * 48
        assert total.tlrc_bytes == sum(r.tlrc_bytes for r in report.rows)
        assert total.tlrc_bpp == pytest.approx(8.0 * total.tlrc_bytes / total.pixels)
        assert total.baselines_bpp["lepton"] == pytest.approx(8.0 * 395 / total.pixels)
        assert report.model_hash == manager.model_hash.hex()
        assert all(r.psnr is not None for r in report.rows)

        report.write(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("name,") and lines[0].endswith(",lepton_bpp")
        assert len(lines) == 6 and lines[-1].startswith("TOTAL,")

        report.write(tmp_path / "r.json")
        again = EvalReport.model_validate_json((tmp_path / "r.json").read_text(encoding="utf-8"))
        assert again == report

    def test_lossless_violation(self, manager, gray_jpeg, monkeypatch):
        monkeypatch.setattr(manager, "decode", lambda data, verify=False: b"not the original")
        with pytest.raises(LosslessViolation):
            evaluate_items(manager, [("g.jpg", gray_jpeg)])

    @pytest.mark.asyncio
    async def test_evaluate_inside_event_loop(self, manager, gray_jpeg, color420_jpeg, monkeypatch):
        items = [("g.jpg", gray_jpeg), ("c.jpg", color420_jpeg)]
        report = await evaluate_items_async(manager, items, "inline", {"lepton": {"g.jpg": 100}})
        assert [r.name for r in report.rows] == ["g.jpg", "c.jpg"]
        assert report.corpus == "inline"
        assert "lepton" in report.rows[0].baselines_bpp and not report.rows[1].baselines_bpp

        monkeypatch.setattr(manager, "decode", lambda data, verify=False: b"not the original")
        with pytest.raises(LosslessViolation):
            await evaluate_items_async(manager, items)

    def test_bad_baseline_file(self, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps({"lepton": 12}))
        with pytest.raises(ValueError):
            load_baseline_sizes(path)

    def test_qp_sweep(self, manager, tmp_path):
        root = tmp_path / "qp"
        for qp in (55, 95):
            d = root / f"qp{qp}"
            d.mkdir(parents=True)
            (d / "a.jpg").write_bytes(cv2_jpeg(smooth_pixels(16, 16, channels=1), qp))
        source = tmp_path / "source"
        source.mkdir()
        cv2.imwrite(str(source / "b.png"), smooth_pixels(16, 16, channels=1))

        report = qp_sweep(manager, root, [95, 75, 55], source)
        assert [r.qp for r in report.rows] == [55, 75, 95]
        assert report.rows[1].source.endswith("@ q75")
        assert report.rows[0].source.endswith("qp55")
        assert report.jpeg_bpp_monotone

        with pytest.raises(MissingCorpusForQp):
            qp_sweep(manager, root, [65])

    def test_summarize_datasets(self):
        def report(name, tlrc, lepton):
            row = EvalRow.from_sizes(name, 8000, 3392, tlrc, 300, tlrc - 400, baseline_bytes={"lepton": lepton})
            return EvalReport.from_rows(name, [row])

        summary = summarize_datasets({"a": report("a", 2665, 2777), "b": report("b", 2834, 2834)})
        assert [r.dataset for r in summary.rows] == ["a", "b"]
        assert summary.rows[0].bit_saving_pct == pytest.approx(21.43, abs=0.01)
        assert summary.rows[0].baselines_saving_pct["lepton"] == pytest.approx(18.13, abs=0.05)
        assert summary.average_saving_pct == pytest.approx((21.43 + 16.45) / 2, abs=0.01)
        assert summary.average_baselines_saving_pct["lepton"] == pytest.approx((18.13 + 16.45) / 2, abs=0.05)
