import json

import numpy as np
import pytest

from eigenuq import forest
from eigenuq.forest import ForestFormatError, ForestHyperparams


def toy_data(n=400, seed=7):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 4))
    y1 = np.sin(3 * X[:, 0]) + 0.5 * X[:, 1] ** 2
    y2 = X[:, 2] * X[:, 3]
    Y = np.column_stack([y1, y2]) + 0.01 * rng.normal(size=(n, 2))
    return X, Y


HP = ForestHyperparams(max_depth=6, min_samples_split=4, max_features=3, n_trees=20)


class TestHyperparams:
    def test_positive_required(self):
        for field in ("max_depth", "min_samples_split", "max_features", "n_trees"):
            kwargs = dict(max_depth=3, min_samples_split=2, max_features=2, n_trees=5)
            kwargs[field] = 0
            with pytest.raises(ValueError):
                ForestHyperparams(**kwargs)

    def test_presets(self):
        assert forest.HYPERPARAMS_P.max_depth == 6
        assert forest.HYPERPARAMS_P.min_samples_split == 6
        assert forest.HYPERPARAMS_P.max_features == 3
        assert forest.HYPERPARAMS_P.n_trees == 30
        assert forest.HYPERPARAMS_PCORR.max_depth == 9
        assert forest.HYPERPARAMS_PCORR.n_trees == 15
        assert forest.HYPERPARAMS_PCORR_ANGLES.n_trees == 30


class TestFit:
    def test_deterministic_refit(self):
        X, Y = toy_data()
        f1 = forest.fit(X, Y, HP)
        f2 = forest.fit(X, Y, HP)
        Q = np.random.default_rng(1).uniform(-1, 1, size=(100, 4))
        assert np.array_equal(f1.predict(Q), f2.predict(Q))

    def test_seed_changes_model(self):
        X, Y = toy_data()
        f1 = forest.fit(X, Y, HP)
        hp2 = ForestHyperparams(
            max_depth=HP.max_depth,
            min_samples_split=HP.min_samples_split,
            max_features=HP.max_features,
            n_trees=HP.n_trees,
            seed=99,
        )
        f2 = forest.fit(X, Y, hp2)
        Q = np.random.default_rng(1).uniform(-1, 1, size=(100, 4))
        assert not np.array_equal(f1.predict(Q), f2.predict(Q))

    def test_beats_mean_predictor(self):
        X, Y = toy_data(n=600, seed=3)
        Xte, Yte = toy_data(n=200, seed=4)
        fitted = forest.fit(X, Y, HP)
        forest_mse = forest.mse(fitted, Xte, Yte)
        mean_mse = float(np.mean((Y.mean(axis=0) - Yte) ** 2))
        assert forest_mse < 0.5 * mean_mse

    def test_constant_target_yields_constant_prediction(self):
        X, _ = toy_data(n=100)
        Y = np.full((100, 1), 3.25)
        fitted = forest.fit(X, Y, HP)
        assert np.allclose(fitted.predict(X), 3.25, atol=1e-12)

    def test_predict_shape_and_feature_check(self):
        X, Y = toy_data()
        fitted = forest.fit(X, Y, HP)
        out = fitted.predict(X[:10])
        assert out.shape == (10, 2)
        with pytest.raises(ValueError, match="expected 4 features"):
            fitted.predict(np.zeros((3, 7)))

    def test_batch_matches_scalar_prediction(self):
        X, Y = toy_data()
        fitted = forest.fit(X, Y, HP)
        tree = fitted.trees[0]
        batch = tree.predict_batch(X[:50])
        for i in range(50):
            assert np.array_equal(batch[i], tree.predict_one(X[i]))


class TestSerialization:
    def test_save_load_round_trip(self, tmp_path):
        X, Y = toy_data()
        fitted = forest.fit(X, Y, HP, feature_names=list("abcd"), target_names=["u", "v"])
        path = tmp_path / "forest.json"
        forest.save(fitted, path)
        loaded = forest.load(path)
        assert loaded.feature_names == list("abcd")
        assert loaded.target_names == ["u", "v"]
        assert loaded.hyperparams == fitted.hyperparams
        Q = np.random.default_rng(2).uniform(-1, 1, size=(200, 4))
        assert np.array_equal(loaded.predict(Q), fitted.predict(Q))

    def test_schema_version_stamped(self, tmp_path):
        X, Y = toy_data(n=60)
        fitted = forest.fit(X, Y, HP)
        path = tmp_path / "forest.json"
        forest.save(fitted, path)
        doc = json.loads(path.read_text())
        assert doc["version"] == forest.SCHEMA_VERSION

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        with pytest.raises(ForestFormatError):
            forest.load(path)
        path.write_text("not json at all")
        with pytest.raises(ForestFormatError):
            forest.load(path)

    def test_load_rejects_wrong_schema_version(self, tmp_path):
        X, Y = toy_data(n=60)
        fitted = forest.fit(X, Y, HP)
        path = tmp_path / "forest.json"
        forest.save(fitted, path)
        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(ForestFormatError):
            forest.load(path)
