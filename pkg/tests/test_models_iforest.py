import numpy as np
import pytest

from audioanomaly.models import average_path_length, iforest_fit, iforest_score
from audioanomaly.models.iforest import EULER_GAMMA, IForestError


class TestAveragePathLength:
    def test_c2(self):
        assert average_path_length(np.array(2.0)) == pytest.approx(
            2.0 * EULER_GAMMA - 1.0
        )
        assert average_path_length(np.array(2.0)) == pytest.approx(0.15443, abs=1e-5)

    def test_degenerate_sizes_are_zero(self):
        np.testing.assert_array_equal(average_path_length(np.array([0.0, 1.0])), [0, 0])

    def test_formula_values(self):
        n = np.array([3.0, 10.0, 256.0])
        expected = 2.0 * (np.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        np.testing.assert_allclose(average_path_length(n), expected, rtol=1e-12)

    def test_monotone_increasing(self):
        vals = average_path_length(np.arange(2.0, 500.0))
        assert np.all(np.diff(vals) > 0)


class TestIForestFit:
    def test_determinism(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((300, 4))
        a = iforest_fit(X, n_trees=8, seed=3)
        b = iforest_fit(X, n_trees=8, seed=3)
        for ta, tb in zip(a.trees, b.trees):
            np.testing.assert_array_equal(ta.features, tb.features)
            np.testing.assert_array_equal(ta.thresholds, tb.thresholds)

    def test_depth_cap(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((600, 3))
        psi = 64
        model = iforest_fit(X, n_trees=16, psi=psi, seed=0)
        cap = int(np.ceil(np.log2(psi)))

        def depth(tree, node=0, d=0):
            if tree.features[node] < 0:
                return d
            return max(depth(tree, tree.left[node], d + 1),
                       depth(tree, tree.right[node], d + 1))

        assert max(depth(t) for t in model.trees) <= cap

    def test_thresholds_within_subsample_range(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-3.0, 7.0, (500, 2))
        model = iforest_fit(X, n_trees=8, seed=0)
        for t in model.trees:
            internal = t.features >= 0
            assert np.all(t.thresholds[internal] >= X.min())
            assert np.all(t.thresholds[internal] <= X.max())

    def test_identical_points_all_scores_equal(self):
        X = np.ones((50, 3))
        model = iforest_fit(X, n_trees=16, seed=0)
        for t in model.trees:
            assert np.all(t.features == -1)  # no valid split anywhere
        s = iforest_score(model, X)
        assert np.all(s == s[0])

    def test_small_n_uses_replacement(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((20, 2))  # N < psi
        model = iforest_fit(X, n_trees=4, psi=256, seed=0)
        assert model.trees[0].sizes[0] == 256

    def test_too_few_points(self):
        with pytest.raises(IForestError):
            iforest_fit(np.zeros((1, 2)))


class TestIForestScore:
    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((400, 3))
        model = iforest_fit(X, n_trees=32, seed=0)
        s = iforest_score(model, np.vstack([X, np.full((1, 3), 100.0)]))
        assert np.all(s > 0.0) and np.all(s <= 1.0)

    def test_outlier_above_blob_median(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            blob = rng.standard_normal((500, 2))
            outlier = np.array([[12.0, -12.0]])
            model = iforest_fit(np.vstack([blob, outlier]), n_trees=64, seed=seed)
            assert model.score(outlier)[0] > np.median(model.score(blob))

    def test_score_is_half_when_path_equals_c_psi(self):
        # single-node trees: every path length is 0 + c(psi), giving
        # E[h] = c(psi) and a score of exactly 0.5
        X = np.ones((300, 2))
        model = iforest_fit(X, n_trees=8, psi=256, seed=0)
        s = iforest_score(model, np.zeros((1, 2)))
        assert s[0] == pytest.approx(0.5, abs=1e-12)

    def test_dim_mismatch(self):
        rng = np.random.default_rng(5)
        model = iforest_fit(rng.standard_normal((50, 3)), n_trees=4, seed=0)
        with pytest.raises(IForestError, match="mismatch"):
            iforest_score(model, np.zeros((1, 2)))
