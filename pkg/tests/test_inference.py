import numpy as np
import pytest

from mtswarm import inference
from mtswarm.csvio import SchemaError
from mtswarm.dictionary import ActivationSet
from mtswarm.inference import (MlpModel, TrainConfig, evaluate, frame_dataset,
                               init_model, loss_and_grads,
                               normalize_temperature, read_model_csv, track,
                               train, train_repeats, write_model_csv)


class TestNormalization:
    def test_anchor_points(self):
        assert normalize_temperature(200.0) == 0.0
        assert normalize_temperature(400.0) == 1.0
        assert normalize_temperature(300.0) == 0.5

    def test_linear_unclamped(self):
        assert normalize_temperature(500.0) == 1.5
        assert normalize_temperature(100.0) == -0.5

    def test_roundtrip(self):
        assert inference.denormalize_temperature(0.25) == 250.0


class TestModel:
    def test_parameter_budget(self):
        model = init_model(12, 32, np.random.default_rng(0))
        assert model.n_params == 12 * 32 + 32 + 32 + 1 == 449
        assert model.n_params <= inference.PARAM_BUDGET

    def test_zero_weights_output_bias(self):
        model = MlpModel(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 1)),
                         np.array([0.37]))
        assert model.predict(np.array([1.0, -2.0, 0.5])) == pytest.approx(0.37)

    def test_hand_computed_forward_pass(self):
        # hidden = relu([1,2]@[[1,0],[0,-1]] + [0.5, 1]) = [1.5, 0]
        # out = [1.5, 0]@[2, 3] + 0.25 = 3.25
        model = MlpModel(np.array([[1.0, 0.0], [0.0, -1.0]]),
                         np.array([0.5, 1.0]),
                         np.array([[2.0], [3.0]]), np.array([0.25]))
        assert model.predict(np.array([1.0, 2.0])) == pytest.approx(3.25)

    def test_input_length_mismatch(self):
        model = init_model(4, 8, np.random.default_rng(0))
        with pytest.raises(ValueError):
            model.predict(np.zeros(5))


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        h = 1e-6
        checked = 0
        attempt = 0
        while checked < 10 and attempt < 50:
            attempt += 1
            model = init_model(5, 7, rng)
            x = rng.normal(size=(6, 5))
            y = rng.normal(size=6)
            pre = x @ model.w1 + model.b1
            if np.abs(pre).min() < 1e-3:
                continue  # avoid the ReLU kink where FD is ill-defined
            _, grads = loss_and_grads(model, x, y)
            for name in ("w1", "b1", "w2", "b2"):
                tensor = getattr(model, name)
                flat = tensor.ravel()
                for idx in (0, flat.size - 1):
                    orig = flat[idx]
                    flat[idx] = orig + h
                    up, _ = loss_and_grads(model, x, y)
                    flat[idx] = orig - h
                    dn, _ = loss_and_grads(model, x, y)
                    flat[idx] = orig
                    fd = (up - dn) / (2 * h)
                    an = grads[name].ravel()[idx]
                    assert an == pytest.approx(fd, rel=1e-5, abs=1e-8)
            checked += 1
        assert checked == 10


class TestTraining:
    def test_single_temperature_rejected(self):
        x = np.random.default_rng(0).normal(size=(20, 3))
        with pytest.raises(ValueError, match="temperature"):
            train(x, np.full(20, 300.0), TrainConfig(epochs=1))

    def test_near_constant_targets_fit_to_mean(self):
        # uninformative inputs and near-identical targets: the model can do
        # no better than the constant mean, and gets there
        rng = np.random.default_rng(1)
        x = rng.normal(size=(60, 3)) * 0.01
        temps = np.where(np.arange(60) % 2 == 0, 299.9, 300.1)
        model, history = train(x, temps, TrainConfig(epochs=300, seed=1))
        assert history["val_mse"][-1] < 1e-4
        preds = model.predict(x)
        assert np.allclose(preds, 0.5, atol=0.02)

    def test_linear_teacher_learned(self):
        rng = np.random.default_rng(2)
        temps = np.repeat([200.0, 250.0, 300.0, 350.0, 400.0], 60)
        x = rng.normal(size=(temps.size, 6)) * 0.1
        x[:, 2] = normalize_temperature(temps)  # one atom encodes T
        model, history = train(x, temps, TrainConfig(epochs=150, seed=3))
        assert history["val_mse"][-1] < 0.01

    def test_seeded_determinism_bytes(self, tmp_path):
        rng = np.random.default_rng(4)
        temps = np.repeat([200.0, 400.0], 40)
        x = rng.normal(size=(80, 4))
        cfg = TrainConfig(epochs=20, seed=9)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_model_csv(train(x, temps, cfg)[0], a)
        write_model_csv(train(x, temps, cfg)[0], b)
        assert a.read_bytes() == b.read_bytes()


class TestEvaluate:
    def test_perfect_predictor(self):
        model = MlpModel(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 1)),
                         np.array([0.5]))
        assert evaluate(model, np.zeros((5, 2)), np.full(5, 0.5)) == 0.0

    def test_constant_half_on_nine_levels(self):
        # mean((t - 0.5)^2) over {0, 0.125, ..., 1} = 0.9375/9
        model = MlpModel(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 1)),
                         np.array([0.5]))
        targets = np.linspace(0.0, 1.0, 9)
        assert evaluate(model, np.zeros((9, 2)), targets) == pytest.approx(
            0.9375 / 9)

    def test_repeats_statistics(self):
        rng = np.random.default_rng(5)
        temps = np.repeat([200.0, 300.0, 400.0], 40)
        x = rng.normal(size=(temps.size, 4)) * 0.05
        x[:, 0] = normalize_temperature(temps)
        models, mses, baseline = train_repeats(
            x, temps, TrainConfig(epochs=60, seed=0), repeats=3)
        assert len(models) == 3 and mses.shape == (3,)
        assert mses.mean() < baseline


class TestFrameDataset:
    def _acts(self):
        frames = np.repeat(np.arange(4), 9)
        tiles = np.tile(np.arange(9), 4)
        coeffs = np.tile(frames[None, :].astype(float), (2, 1))
        coeffs[1] *= -1
        return ActivationSet(coeffs, np.zeros(36), np.ones(36, bool),
                             run=np.array(["r"] * 36, dtype=object),
                             temperature=np.full(36, 250.0),
                             frame=frames.astype(np.int64),
                             tile=tiles.astype(np.int64))

    def test_tile_averaging(self):
        x, temps, runs, frames = frame_dataset(self._acts())
        assert x.shape == (4, 2)
        assert np.allclose(x[:, 0], np.arange(4))
        assert np.all(temps == 250.0)

    def test_frame_exclusion(self):
        x, _, _, frames = frame_dataset(self._acts(), exclude_first=2)
        assert list(frames) == [2, 3]

    def test_track_series(self):
        model = MlpModel(np.zeros((2, 3)), np.zeros(3), np.zeros((3, 1)),
                         np.array([0.25]))
        tracking = track(model, self._acts())
        assert tracking["frame"].size == 4
        assert np.allclose(tracking["predicted_norm"], 0.25)
        assert np.allclose(tracking["true_norm"], 0.25)


class TestModelFile:
    def test_roundtrip_exact(self, tmp_path):
        model = init_model(6, 9, np.random.default_rng(7))
        path = tmp_path / "model.csv"
        write_model_csv(model, path)
        back = read_model_csv(path)
        for name in ("w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(back, name), getattr(model, name))

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("tensor,index,value\nw1,0,1.0\n")
        with pytest.raises(SchemaError):
            read_model_csv(path)

    def test_tracking_roundtrip(self, tmp_path):
        tracking = {"frame": np.arange(3),
                    "true_norm": np.array([0.0, 0.5, 1.0]),
                    "predicted_norm": np.array([0.1, 0.4, 0.9])}
        path = tmp_path / "tracking.csv"
        inference.write_tracking_csv(tracking, path)
        back = inference.read_tracking_csv(path)
        assert np.array_equal(back["frame"], tracking["frame"])
        assert np.allclose(back["predicted_norm"],
                           tracking["predicted_norm"])
