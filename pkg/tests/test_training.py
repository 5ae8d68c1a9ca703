"""Trainer behaviour: descent, determinism, selection, and failure modes."""

import math

import numpy as np
import pytest

from sewergrade.dataset import ImageSample
from sewergrade.errors import DatasetError, TrainingDivergedError
from sewergrade.model import build_sewernet
from sewergrade.training import (
    TrainConfig,
    evaluate,
    load_image_arrays,
    train,
)


def toy_batch(n=8, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 150, 150, 3), dtype=np.float32)
    y = np.arange(n, dtype=np.int64) % 4
    return x, y


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-6
        assert cfg.batch_size == 32

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": 0.0},
            {"learning_rate": -1e-3},
            {"batch_size": 0},
            {"epochs": 0},
            {"eval_every": 0},
            {"patience": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestEvaluate:
    def test_fresh_network_loss_near_uniform(self):
        """The zeroed output layer makes an untrained network predict the
        uniform distribution, so the loss starts at ln(4) on any data."""
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=8)
        metrics = evaluate(net, x, y)
        assert abs(metrics.loss - math.log(4)) < 1e-5
        assert 0.0 <= metrics.accuracy <= 1.0

    def test_batch_size_does_not_change_result(self):
        net = build_sewernet(seed=1)
        x, y = toy_batch(n=7, seed=3)
        a = evaluate(net, x, y, batch_size=64)
        b = evaluate(net, x, y, batch_size=3)
        assert a.loss == pytest.approx(b.loss, rel=1e-9)
        assert a.accuracy == b.accuracy

    def test_does_not_mutate_weights(self):
        net = build_sewernet(seed=2)
        before = {k: v.copy() for k, v in net.params().items()}
        x, y = toy_batch()
        evaluate(net, x, y)
        after = net.params()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_empty_set_rejected(self):
        net = build_sewernet(seed=0)
        with pytest.raises(DatasetError):
            evaluate(net, np.empty((0, 150, 150, 3), np.float32), np.empty(0, np.int64))


class TestTrain:
    def test_memorizes_a_tiny_batch(self):
        """Sanity check that gradients point downhill end to end: a handful
        of noise images must be fit nearly perfectly at a high rate."""
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=8, seed=1)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=200, seed=0)
        _, report = train(net, x, y, config=cfg)
        final = evaluate(net, x, y)
        assert final.loss < 0.05, f"loss stuck at {final.loss:.4f}"
        assert final.accuracy == 1.0
        assert report.epochs_run == 200

    def test_loss_curve_descends_overall(self):
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=8, seed=1)
        cfg = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=30, seed=0)
        _, report = train(net, x, y, config=cfg)
        losses = [s.train_loss for s in report.history]
        assert losses[-1] < losses[0] / 2

    def test_same_seed_same_curve(self):
        x, y = toy_batch(n=6, seed=2)
        curves = []
        for _ in range(2):
            net = build_sewernet(seed=5)
            cfg = TrainConfig(learning_rate=1e-4, batch_size=3, epochs=3, seed=9)
            _, report = train(net, x, y, config=cfg)
            curves.append([s.train_loss for s in report.history])
        assert curves[0] == curves[1]

    def test_different_seed_different_curve(self):
        x, y = toy_batch(n=6, seed=2)
        curves = []
        for seed in (1, 2):
            net = build_sewernet(seed=5)
            cfg = TrainConfig(learning_rate=1e-4, batch_size=3, epochs=3, seed=seed)
            _, report = train(net, x, y, config=cfg)
            curves.append([s.train_loss for s in report.history])
        assert curves[0] != curves[1]

    def test_checkpoint_matches_network_weights(self):
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=4)
        cfg = TrainConfig(learning_rate=1e-4, batch_size=4, epochs=2, seed=0)
        ckpt, _ = train(net, x, y, x, y, config=cfg)
        live = net.params()
        assert all(np.array_equal(ckpt.params[k], live[k]) for k in live)
        assert ckpt.metadata["selected"] == "best"
        assert ckpt.metadata["epochs_run"] == "2"

    def test_select_last_when_disabled(self):
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=4)
        cfg = TrainConfig(
            learning_rate=1e-4, batch_size=4, epochs=3, seed=0, select_best=False
        )
        ckpt, report = train(net, x, y, x, y, config=cfg)
        assert report.best_epoch == 3
        assert ckpt.metadata["selected"] == "last"

    def test_training_changes_weights(self):
        net = build_sewernet(seed=0)
        before = {k: v.copy() for k, v in net.params().items()}
        x, y = toy_batch(n=4)
        train(net, x, y, config=TrainConfig(learning_rate=1e-3, batch_size=4, epochs=1))
        after = net.params()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_early_stop_on_flat_validation(self):
        """A learning rate too small to move accuracy triggers patience."""
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=4)
        cfg = TrainConfig(
            learning_rate=1e-12, batch_size=4, epochs=10, seed=0, patience=1
        )
        _, report = train(net, x, y, x, y, config=cfg)
        assert report.stopped_early
        assert report.epochs_run == 2

    def test_poisoned_weights_abort(self):
        net = build_sewernet(seed=0)
        net.layers[0].kernels[0, 0, 0, 0] = np.nan
        x, y = toy_batch(n=4)
        with pytest.raises(TrainingDivergedError):
            train(net, x, y, config=TrainConfig(batch_size=4, epochs=1))

    def test_mismatched_labels_rejected(self):
        net = build_sewernet(seed=0)
        x, _ = toy_batch(n=4)
        with pytest.raises(DatasetError):
            train(net, x, np.zeros(3, np.int64), config=TrainConfig(epochs=1))

    def test_out_of_range_label_rejected(self):
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=4)
        y = y.copy()
        y[0] = 7
        with pytest.raises(DatasetError):
            train(net, x, y, config=TrainConfig(epochs=1))

    def test_val_images_without_labels_rejected(self):
        net = build_sewernet(seed=0)
        x, y = toy_batch(n=4)
        with pytest.raises(DatasetError):
            train(net, x, y, x, None, config=TrainConfig(epochs=1))


class TestLoadImageArrays:
    def test_roundtrip(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(0)
        samples = []
        raw = []
        for i in range(3):
            arr = rng.integers(0, 256, (150, 150, 3), dtype=np.uint8)
            path = tmp_path / f"img_{i}.png"
            Image.fromarray(arr).save(path)
            samples.append(ImageSample(video_id=f"v{i}", label_index=i % 4, path=str(path)))
            raw.append(arr)
        x, y = load_image_arrays(samples)
        assert x.shape == (3, 150, 150, 3)
        assert x.dtype == np.float32
        assert list(y) == [0, 1, 2]
        assert np.allclose(x[0], raw[0].astype(np.float32) / 255.0)

    def test_wrong_size_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "small.png"
        Image.fromarray(np.zeros((10, 10, 3), np.uint8)).save(path)
        with pytest.raises(DatasetError):
            load_image_arrays([ImageSample(video_id="v", label_index=0, path=str(path))])

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            load_image_arrays([])
