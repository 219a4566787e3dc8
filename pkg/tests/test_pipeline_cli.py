import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from audioanomaly import embedding, ingest, pipeline
from audioanomaly.cli import main
from audioanomaly.config import RunConfig
from audioanomaly.pipeline import DatasetProvider, PipelineError, cache_key, cache_path

from conftest import SR, tone_clip, write_clip


class TestMelForWaveform:
    def test_frame_count_for_ten_seconds(self):
        w = ingest.Waveform(samples=np.zeros(160000), sample_rate_hz=SR)
        mel = pipeline.mel_for_waveform(w, RunConfig().dsp)
        assert mel.values_db.shape == (64, 626)

    def test_wrong_sample_rate_rejected(self):
        w = ingest.Waveform(samples=np.zeros(8000), sample_rate_hz=8000)
        with pytest.raises(PipelineError, match="sample rate"):
            pipeline.mel_for_waveform(w, RunConfig().dsp)


class TestCacheKey:
    def test_stable(self):
        cfg = RunConfig()
        assert cache_key("identity", cfg.dsp, cfg.render) == cache_key(
            "identity", cfg.dsp, cfg.render
        )

    def test_changes_with_parameters(self, tmp_path):
        cfg = RunConfig()
        base = cache_key("identity", cfg.dsp, cfg.render)
        assert cache_key("alexnet", cfg.dsp, cfg.render) != base
        assert cache_key("identity", {**cfg.dsp, "hop": 512}, cfg.render) != base
        assert cache_key("identity", cfg.dsp, {**cfg.render, "stride": 16}) != base

    def test_changes_with_graph_content(self, tmp_path):
        cfg = RunConfig()
        g1 = tmp_path / "a.onnx"
        g2 = tmp_path / "b.onnx"
        g1.write_bytes(b"weights-v1")
        g2.write_bytes(b"weights-v2")
        k1 = cache_key("resnet18", cfg.dsp, cfg.render, graph_path=g1)
        k2 = cache_key("resnet18", cfg.dsp, cfg.render, graph_path=g2)
        assert k1 != k2

    def test_path_layout(self):
        p = cache_path("cache", "fan", "M0", "identity", "abcd")
        assert p.name == "fan_M0_identity_abcd.fch"


class TestDatasetProvider:
    def _provider(self, small_corpus, tmp_path):
        cfg = RunConfig(dataset_root=str(small_corpus), cache_dir=str(tmp_path / "cache"),
                        workers=1)
        return DatasetProvider(cfg)

    def test_features_built_then_reused(self, small_corpus, tmp_path):
        provider = self._provider(small_corpus, tmp_path)
        m1 = provider.features_for("identity", "fan", "M0")
        # 20 clips x 3 patches (129-frame clips, width 64, stride 32)
        assert m1.n_rows == 60 and m1.dim == 64
        files = list((tmp_path / "cache").glob("*.fch"))
        assert len(files) == 1
        mtime = files[0].stat().st_mtime_ns
        m2 = provider.features_for("identity", "fan", "M0")
        assert files[0].stat().st_mtime_ns == mtime  # cache hit, no rebuild
        np.testing.assert_array_equal(m1.values, m2.values)

    def test_values_float32_consistent(self, small_corpus, tmp_path):
        # first (freshly built) and later (cache read) results must agree
        # bit for bit, so the provider always serves the f32-quantized rows
        provider = self._provider(small_corpus, tmp_path)
        m = provider.features_for("identity", "fan", "M0")
        np.testing.assert_array_equal(
            m.values, m.values.astype(np.float32).astype(np.float64)
        )

    def test_index_for_missing_group(self, small_corpus, tmp_path):
        provider = self._provider(small_corpus, tmp_path)
        with pytest.raises(PipelineError, match="no clips"):
            provider.index_for("pump", "M2")

    def test_worker_count_does_not_change_features(self, small_corpus, tmp_path):
        cfg1 = RunConfig(dataset_root=str(small_corpus),
                         cache_dir=str(tmp_path / "c1"), workers=1)
        cfg4 = RunConfig(dataset_root=str(small_corpus),
                         cache_dir=str(tmp_path / "c4"), workers=4)
        m1 = DatasetProvider(cfg1).features_for("identity", "fan", "M0")
        m4 = DatasetProvider(cfg4).features_for("identity", "fan", "M0")
        np.testing.assert_array_equal(m1.values, m4.values)
        assert m1.row_meta == m4.row_meta


class TestCli:
    @pytest.fixture()
    def runner(self):
        return CliRunner()

    def _index(self, runner, corpus, out):
        return runner.invoke(main, ["--out", str(out), "index", str(corpus)])

    def test_index_writes_manifest(self, runner, small_corpus, tmp_path):
        manifest = tmp_path / "manifest.tsv"
        result = self._index(runner, small_corpus, manifest)
        assert result.exit_code == 0, result.output
        assert "fan/M0/normal: 14" in result.output
        assert "fan/M0/anomalous: 6" in result.output
        entries = ingest.read_manifest(manifest)
        assert len(entries) == 20

    def test_index_missing_root_fails_cleanly(self, runner, tmp_path):
        result = self._index(runner, tmp_path / "nope", tmp_path / "m.tsv")
        assert result.exit_code != 0
        assert "Error" in result.output

    def test_featurize_and_idempotent_skip(self, runner, small_corpus, tmp_path):
        manifest = tmp_path / "manifest.tsv"
        assert self._index(runner, small_corpus, manifest).exit_code == 0
        cache = tmp_path / "cache"
        args = ["--cache-dir", str(cache), "featurize",
                "--manifest", str(manifest), "--root", str(small_corpus)]
        first = runner.invoke(main, args)
        assert first.exit_code == 0, first.output
        assert "60 rows of d=64" in first.output
        second = runner.invoke(main, args)
        assert second.exit_code == 0
        assert "cache present, skipped" in second.output

    def _featurized(self, runner, small_corpus, tmp_path):
        manifest = tmp_path / "manifest.tsv"
        self._index(runner, small_corpus, manifest)
        cache = tmp_path / "cache"
        runner.invoke(main, ["--cache-dir", str(cache), "featurize",
                             "--manifest", str(manifest), "--root", str(small_corpus)])
        (cache_file,) = cache.glob("*.fch")
        return manifest, cache_file

    def test_fit_writes_model_and_standardizer(self, runner, small_corpus, tmp_path):
        _, cache_file = self._featurized(runner, small_corpus, tmp_path)
        model_path = tmp_path / "kde.adm"
        result = runner.invoke(main, ["--out", str(model_path), "fit",
                                      "--cache", str(cache_file), "--model", "kde"])
        assert result.exit_code == 0, result.output
        assert model_path.exists()
        assert (tmp_path / "kde.adm.std").exists()
        std = embedding.load_standardizer(tmp_path / "kde.adm.std")
        assert len(std.mean) == 64

    def test_score_writes_sorted_tsv(self, runner, small_corpus, tmp_path):
        manifest, cache_file = self._featurized(runner, small_corpus, tmp_path)
        model_path = tmp_path / "kde.adm"
        # a wide bandwidth makes the density reflect the neighbourhood
        # rather than each row's own kernel (we score the training clips)
        cfg_path = tmp_path / "fit.yaml"
        cfg_path.write_text(yaml.safe_dump({"hyper": {"kde": {"bandwidth": 5.0}}}))
        runner.invoke(main, ["--config", str(cfg_path), "--out", str(model_path),
                             "fit", "--cache", str(cache_file), "--model", "kde"])
        scores_path = tmp_path / "scores.tsv"
        result = runner.invoke(main, ["--out", str(scores_path), "score",
                                      "--model", str(model_path),
                                      "--cache", str(cache_file),
                                      "--manifest", str(manifest)])
        assert result.exit_code == 0, result.output
        lines = scores_path.read_text().splitlines()
        assert lines[0] == "clip_scores_version: 1"
        rows = [line.split("\t") for line in lines[2:]]
        assert len(rows) == 20
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)
        anom = [float(r[3]) for r in rows if r[1] == "anomalous"]
        normal = [float(r[3]) for r in rows if r[1] == "normal"]
        assert len(anom) == 6 and len(normal) == 14
        assert np.mean(anom) > np.mean(normal)

    def test_score_missing_clip_errors(self, runner, small_corpus, tmp_path):
        manifest, cache_file = self._featurized(runner, small_corpus, tmp_path)
        model_path = tmp_path / "kde.adm"
        runner.invoke(main, ["--out", str(model_path), "fit",
                             "--cache", str(cache_file), "--model", "kde"])
        entries = list(ingest.read_manifest(manifest))
        ghost = ingest.RecordingMeta(path="fan/id_00/normal/99999999.wav",
                                     machine_type="fan", machine_id="M0",
                                     label="normal")
        ingest.write_manifest(entries + [ghost], manifest)
        result = runner.invoke(main, ["score", "--model", str(model_path),
                                      "--cache", str(cache_file),
                                      "--manifest", str(manifest)])
        assert result.exit_code != 0
        assert "missing from cache" in result.output

    def test_evaluate_end_to_end_and_resume(self, runner, small_corpus, tmp_path):
        cfg = {
            "dataset_root": str(small_corpus),
            "cache_dir": str(tmp_path / "cache"),
            "extractors": ["identity"],
            "models": ["kde"],
            "machines": [["fan", "M0"]],
            "seeds": [0, 1],
            "n_test_normal": 4,
            "workers": 1,
        }
        cfg_path = tmp_path / "run.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg))
        out_dir = tmp_path / "out"
        args = ["--config", str(cfg_path), "--out", str(out_dir), "evaluate"]
        first = runner.invoke(main, args)
        assert first.exit_code == 0, first.output
        report = (out_dir / "report.json").read_text()
        assert (out_dir / "report.txt").exists()
        assert "fan/M0 identity+kde" in first.output
        second = runner.invoke(main, args)
        assert second.exit_code == 0
        assert (out_dir / "report.json").read_text() == report  # resumed, unchanged

    def test_render_debug(self, runner, tmp_path):
        rng = np.random.default_rng(0)
        wav = tmp_path / "clip.wav"
        write_clip(wav, tone_clip(rng, duration_s=2.06))
        out_dir = tmp_path / "dbg"
        result = runner.invoke(main, ["--out", str(out_dir), "render-debug",
                                      "--wav", str(wav)])
        assert result.exit_code == 0, result.output
        assert (out_dir / "clip.mels").exists()
        ppms = sorted(out_dir.glob("clip_*.ppm"))
        assert [p.name for p in ppms] == [
            "clip_00000.ppm", "clip_00032.ppm", "clip_00064.ppm"
        ]
        assert ppms[0].read_bytes().startswith(b"P6\n64 64\n255\n")
