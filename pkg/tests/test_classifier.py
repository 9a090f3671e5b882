import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import NearestCentroid, finite_difference_gradients
from wildloop.classifier import (
    HeadModel,
    TrainConfig,
    cold_start,
    gradient,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    train,
    warm_start,
)
from wildloop.errors import DimensionMismatch, EmptyTrainingSet, UnknownLabel
from wildloop.ingest import LabelSpace

SPACE = LabelSpace(("empty", "red_fox", "roe_deer", "wild_boar", "european_hare"))


def random_batch(rng, n=16, dim=10, g=5):
    X = rng.standard_normal((n, dim))
    labels = [SPACE.classes[k] for k in rng.integers(0, g, size=n)]
    return X, labels


class TestPredictScores:
    def test_zero_params_uniform(self):
        head = cold_start(SPACE, 6)
        head.weights[:] = 0.0
        scores = predict_scores(head, np.zeros(6))
        assert np.allclose(scores, 1.0 / len(SPACE))

    def test_bias_closed_form(self):
        # bias (10, 0, ..., 0), zero weights: score_0 = e^10 / (e^10 + g - 1)
        head = cold_start(SPACE, 4)
        head.weights[:] = 0.0
        head.bias[:] = 0.0
        head.bias[0] = 10.0
        scores = predict_scores(head, np.ones(4))
        g = len(SPACE)
        expected = math.exp(10.0) / (math.exp(10.0) + g - 1)
        assert abs(scores[0] - expected) < 1e-12

    def test_shift_invariance(self, rng):
        head = cold_start(SPACE, 8, TrainConfig(seed=3))
        x = rng.standard_normal(8)
        base = predict_scores(head, x)
        head.bias += 123.456
        assert np.allclose(predict_scores(head, x), base, atol=1e-12)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_normalized_and_positive(self, seed):
        rng = np.random.default_rng(seed)
        head = cold_start(SPACE, 7, TrainConfig(seed=seed))
        scores = predict_scores(head, rng.standard_normal(7) * 10)
        assert abs(scores.sum() - 1.0) <= 1e-9
        assert (scores > 0).all()

    def test_dimension_mismatch(self):
        head = cold_start(SPACE, 5)
        with pytest.raises(DimensionMismatch):
            predict_scores(head, np.zeros(7))


class TestGradient:
    def _fd_check(self, head, X, labels, tol=1e-5):
        loss, grads = gradient(head, X, labels)
        names = ["weights", "bias"] + (
            ["hidden_weights", "hidden_bias"] if head.hidden_weights is not None else []
        )
        arrays = [getattr(head, n) for n in names]
        fd = finite_difference_gradients(lambda: gradient(head, X, labels)[0], arrays)
        for name, analytic, numeric in zip(names, (grads[n] for n in names), fd):
            denom = np.maximum(np.abs(numeric), 1e-8)
            rel = np.max(np.abs(analytic - numeric) / denom)
            assert rel < tol, f"{name}: max relative error {rel}"

    def test_matches_finite_differences(self, rng):
        head = cold_start(SPACE, 10, TrainConfig(seed=8, l2=1e-3))
        X, labels = random_batch(rng, n=16, dim=10)
        self._fd_check(head, X, labels)

    def test_hidden_layer_matches_finite_differences(self, rng):
        head = cold_start(SPACE, 6, TrainConfig(seed=8, l2=1e-3, hidden_units=4))
        X, labels = random_batch(rng, n=12, dim=6)
        self._fd_check(head, X, labels)

    def test_perfect_prediction_zero_gradient(self):
        # Saturated correct logits, no ridge: gradient vanishes.
        head = cold_start(SPACE, len(SPACE), TrainConfig(l2=0.0))
        head.weights = np.eye(len(SPACE)) * 50.0
        head.bias[:] = 0.0
        X = np.eye(len(SPACE))
        labels = list(SPACE.classes)
        _, grads = gradient(head, X, labels)
        assert np.linalg.norm(grads["weights"]) < 1e-8
        assert np.linalg.norm(grads["bias"]) < 1e-8

    def test_duplicated_batch_same_gradient(self, rng):
        head = cold_start(SPACE, 9, TrainConfig(seed=1))
        X, labels = random_batch(rng, n=8, dim=9)
        _, g1 = gradient(head, X, labels)
        _, g2 = gradient(head, np.vstack([X, X]), labels + labels)
        assert np.allclose(g1["weights"], g2["weights"], atol=1e-12)
        assert np.allclose(g1["bias"], g2["bias"], atol=1e-12)


class TestTrain:
    def test_separable_clusters(self, small_project, small_runtime):
        # Oracle first: nearest-centroid must already separate this data.
        provider = small_runtime.registry.get("synth")
        store = provider.store
        dataset = small_project.dataset
        X, labels = [], []
        for crop_id in store.crop_ids:
            image_id = crop_id.split("#")[0]
            X.append(store.get(crop_id).astype(np.float64))
            labels.append(dataset.images[image_id].label)
        X = np.asarray(X)
        oracle_pred = NearestCentroid().fit(X, labels).predict(X)
        oracle_acc = np.mean([p == t for p, t in zip(oracle_pred, labels)])
        assert oracle_acc >= 0.99

        head = cold_start(dataset.label_space, X.shape[1], TrainConfig(epochs=30, seed=2))
        trained, curve = train(head, X, labels)
        scores = predict_scores(trained, X)
        pred = [dataset.label_space.classes[k] for k in np.argmax(scores, axis=1)]
        acc = np.mean([p == t for p, t in zip(pred, labels)])
        assert acc >= 0.99
        assert all(np.isfinite(v) for v in curve)

    def test_zero_learning_rate_keeps_parameters(self, rng):
        X, labels = random_batch(rng, n=1, dim=5)
        for l2 in (0.0, 1e-2):
            head = cold_start(SPACE, 5, TrainConfig(learning_rate=0.0, epochs=1, l2=l2, seed=4))
            before_w, before_b = head.weights.copy(), head.bias.copy()
            trained, _ = train(head, X, labels)
            assert np.array_equal(trained.weights, before_w)
            assert np.array_equal(trained.bias, before_b)

    def test_unknown_class_rejected(self, rng):
        head = cold_start(SPACE, 5)
        X = rng.standard_normal((3, 5))
        with pytest.raises(UnknownLabel):
            train(head, X, ["red_fox", "unicorn", "empty"])

    def test_empty_training_set(self):
        head = cold_start(SPACE, 5)
        with pytest.raises(EmptyTrainingSet):
            train(head, np.zeros((0, 5)), [])

    def test_deterministic(self, rng):
        X, labels = random_batch(rng, n=64, dim=6)
        cfg = TrainConfig(epochs=5, seed=11)
        a, _ = train(cold_start(SPACE, 6, cfg), X, labels)
        b, _ = train(cold_start(SPACE, 6, cfg), X, labels)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_full_batch_loss_non_increasing(self, rng):
        # Full-batch GD below the stability bound: the objective is monotone.
        X, labels = random_batch(rng, n=80, dim=6)
        cfg = TrainConfig(learning_rate=0.05, epochs=25, batch_size=80, seed=0,
                          class_weighting="none")
        _, curve = train(cold_start(SPACE, 6, cfg), X, labels)
        diffs = np.diff(curve)
        assert (diffs <= 1e-12).all(), f"loss increased: {curve}"

    def test_loss_finite_throughout(self, rng):
        X, labels = random_batch(rng, n=40, dim=4)
        _, curve = train(cold_start(SPACE, 4, TrainConfig(epochs=10, seed=1)), X, labels)
        assert np.isfinite(curve).all()


class TestWarmStart:
    def test_identical_spaces_copy_everything(self):
        source = cold_start(SPACE, 7, TrainConfig(seed=5))
        source.weights += 1.5
        source.bias += 0.25
        head = warm_start(source, SPACE, 7)
        assert np.array_equal(head.weights, source.weights)
        assert np.array_equal(head.bias, source.bias)
        assert head.provenance.startswith("warm")

    def test_disjoint_spaces_equal_cold(self):
        # Every label space contains "empty", so a truly disjoint source
        # needs a custom reserved-name-free construction: bypass by testing
        # the contract on the non-shared rows instead.
        src_space = LabelSpace(("empty", "red_fox"))
        src = cold_start(src_space, 4, TrainConfig(seed=9))
        src.weights += 2.0
        dst_space = LabelSpace(("empty", "lynx"))
        warm = warm_start(src, dst_space, 4)
        cold = cold_start(dst_space, 4, TrainConfig(seed=9))
        # "empty" overlaps and copies from the source; "lynx" is new and
        # must match the cold initializer bit for bit.
        assert np.array_equal(warm.weights[1], cold.weights[1])
        assert warm.bias[1] == cold.bias[1]
        assert np.array_equal(warm.weights[0], src.weights[0])
        assert warm.provenance.startswith("warm")
        assert cold.provenance == "cold"

    def test_overlap_rows_bit_equal(self):
        src = cold_start(SPACE, 6, TrainConfig(seed=2))
        src.weights += np.arange(6)
        src.bias += 0.5
        new_space = LabelSpace(("empty", "red_fox", "lynx"))
        warm = warm_start(src, new_space, 6, source_ref="ckpt_0003.bin")
        for name in ("empty", "red_fox"):
            assert np.array_equal(
                warm.weights[new_space.index(name)], src.weights[SPACE.index(name)]
            )
            assert warm.bias[new_space.index(name)] == src.bias[SPACE.index(name)]
        assert warm.provenance == "warm:ckpt_0003.bin"

    def test_dim_mismatch(self):
        src = cold_start(SPACE, 6)
        with pytest.raises(DimensionMismatch):
            warm_start(src, SPACE, 7)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        X, labels = random_batch(rng, n=32, dim=5)
        head, _ = train(cold_start(SPACE, 5, TrainConfig(epochs=3, seed=6)), X, labels)
        head.provenance = "warm:prev"
        path = tmp_path / "head.bin"
        save_checkpoint(head, path)
        loaded = load_checkpoint(path)
        assert loaded.label_space == head.label_space
        assert loaded.dim == head.dim
        assert np.array_equal(loaded.weights, head.weights)
        assert np.array_equal(loaded.bias, head.bias)
        assert loaded.provenance == "warm:prev"
        assert loaded.train_config == head.train_config

    def test_round_trip_hidden(self, tmp_path, rng):
        cfg = TrainConfig(epochs=2, seed=6, hidden_units=3)
        X, labels = random_batch(rng, n=16, dim=5)
        head, _ = train(cold_start(SPACE, 5, cfg), X, labels)
        path = tmp_path / "head.bin"
        save_checkpoint(head, path)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.hidden_weights, head.hidden_weights)
        assert np.array_equal(loaded.hidden_bias, head.hidden_bias)
        assert np.array_equal(loaded.weights, head.weights)

    def test_corrupt_checkpoint(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"garbage")
        from wildloop.errors import CorruptState

        with pytest.raises(CorruptState):
            load_checkpoint(path)
