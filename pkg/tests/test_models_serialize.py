import struct

import numpy as np
import pytest

from audioanomaly import models
from audioanomaly.models.serialize import ModelFileError


def _fitted_models():
    rng = np.random.default_rng(0)
    X = np.vstack([
        rng.standard_normal((150, 4)),
        rng.normal(3.0, 0.5, (150, 4)),
    ])
    return X, {
        "gmm": models.gmm_fit(X, K=5, seed=0),
        "bgmm": models.vbgmm_fit(X, K=5, seed=0),
        "iforest": models.iforest_fit(X, n_trees=8, seed=0),
        "ocsvm": models.ocsvm_fit(X, nu=0.1, seed=0),
        "kde": models.kde_fit(X),
    }


class TestRoundTrip:
    def test_scores_bit_identical_after_reload(self, tmp_path):
        X, fitted = _fitted_models()
        rng = np.random.default_rng(1)
        probes = rng.standard_normal((100, 4))
        for kind, model in fitted.items():
            path = tmp_path / f"{kind}.adm"
            models.save_model(model, path)
            back = models.load_model(path)
            assert type(back) is type(model)
            np.testing.assert_array_equal(model.score(probes), back.score(probes))

    def test_forest_nodes_exact(self, tmp_path):
        _, fitted = _fitted_models()
        path = tmp_path / "f.adm"
        models.save_model(fitted["iforest"], path)
        back = models.load_model(path)
        assert len(back.trees) == len(fitted["iforest"].trees)
        for ta, tb in zip(fitted["iforest"].trees, back.trees):
            np.testing.assert_array_equal(ta.features, tb.features)
            np.testing.assert_array_equal(ta.thresholds, tb.thresholds)
            np.testing.assert_array_equal(ta.left, tb.left)
            np.testing.assert_array_equal(ta.right, tb.right)
            np.testing.assert_array_equal(ta.sizes, tb.sizes)


class TestErrors:
    def _gmm_file(self, tmp_path):
        rng = np.random.default_rng(2)
        model = models.gmm_fit(rng.standard_normal((50, 2)), K=2, seed=0)
        path = tmp_path / "m.adm"
        models.save_model(model, path)
        return path

    def test_bad_magic(self, tmp_path):
        path = self._gmm_file(tmp_path)
        data = path.read_bytes()
        path.write_bytes(b"NOPE" + data[4:])
        with pytest.raises(ModelFileError, match="magic"):
            models.load_model(path)

    def test_bad_version(self, tmp_path):
        path = self._gmm_file(tmp_path)
        data = bytearray(path.read_bytes())
        data[4:6] = struct.pack("<H", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFileError, match="version"):
            models.load_model(path)

    def test_unknown_kind_tag(self, tmp_path):
        path = self._gmm_file(tmp_path)
        data = bytearray(path.read_bytes())
        data[6] = 200
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFileError, match="kind"):
            models.load_model(path)

    def test_truncated(self, tmp_path):
        path = self._gmm_file(tmp_path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ModelFileError, match="truncated"):
            models.load_model(path)

    def test_unknown_model_type(self, tmp_path):
        with pytest.raises(ModelFileError, match="unknown model type"):
            models.save_model(object(), tmp_path / "x.adm")


class TestFitModelDispatch:
    def test_all_kinds(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((120, 3))
        for kind in models.MODEL_KINDS:
            hyper = {"K": 4} if kind in ("gmm", "bgmm") else {}
            if kind == "ocsvm":
                hyper = {"nu": 0.1}
            model = models.fit_model(kind, X, seed=0, **hyper)
            scores = model.score(X)
            assert scores.shape == (120,)
            assert np.all(np.isfinite(scores))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            models.fit_model("dbscan", np.zeros((10, 2)))
