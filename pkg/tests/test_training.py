import json

import numpy as np
import pytest

import secs.training as training
from secs.datamodel import CellId, WeatherSeries, YieldSeries
from secs.errors import (
    ConfigError,
    DataDomainError,
    IntegrityError,
    ShapeError,
    VersionError,
)
from secs.features import FeatureSpec
from secs.network import forward, init_model
from secs.synthdata import WeatherGenConfig, crop_preset, generate_weather, simulate_crop
from secs.training import (
    AdamState,
    TrainConfig,
    adam_step,
    huber_loss,
    init_adam,
    load_checkpoint,
    predict_series,
    save_checkpoint,
    split_dataset,
    train,
)


class TestHuberLoss:
    def test_perfect_prediction(self):
        ones = np.ones(5, bool)
        loss, grad = huber_loss(np.arange(5.0), np.arange(5.0), ones, 0.5)
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_quadratic_branch(self):
        loss, grad = huber_loss(np.array([0.3]), np.array([0.0]), np.ones(1, bool), 0.5)
        assert loss == pytest.approx(0.045, abs=1e-15)
        assert grad[0] == pytest.approx(0.3, abs=1e-15)

    def test_linear_branch(self):
        loss, grad = huber_loss(np.array([2.0]), np.array([0.0]), np.ones(1, bool), 0.5)
        assert loss == pytest.approx(0.875, abs=1e-15)
        assert grad[0] == pytest.approx(0.5, abs=1e-15)

    def test_masked_elements_ignored(self):
        pred = np.array([1.0, 100.0])
        target = np.array([1.0, 0.0])
        mask = np.array([True, False])
        loss, grad = huber_loss(pred, target, mask, 0.5)
        assert loss == 0.0
        assert grad[1] == 0.0

    def test_all_masked_errors(self):
        with pytest.raises(DataDomainError):
            huber_loss(np.ones(3), np.ones(3), np.zeros(3, bool), 0.5)

    def test_gradient_matches_finite_differences(self):
        # away from the |a| = delta kink
        rng = np.random.default_rng(0)
        pred = rng.normal(0, 2, 50)
        target = rng.normal(0, 2, 50)
        near_kink = np.abs(np.abs(pred - target) - 0.5) < 1e-3
        pred[near_kink] += 0.01
        mask = rng.random(50) < 0.8
        mask[0] = True
        _, grad = huber_loss(pred, target, mask, 0.5)
        eps = 1e-6
        for k in range(0, 50, 7):
            up = huber_loss(np.where(np.arange(50) == k, pred + eps, pred), target, mask, 0.5)[0]
            dn = huber_loss(np.where(np.arange(50) == k, pred - eps, pred), target, mask, 0.5)[0]
            assert abs((up - dn) / (2 * eps) - grad[k]) < 1e-6


class TestAdam:
    def _cfg(self):
        return TrainConfig()

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = init_adam(params)
        new, state2 = adam_step(params, {"w": np.zeros(2)}, state, self._cfg())
        np.testing.assert_array_equal(new["w"], params["w"])
        assert state2.t == 1

    def test_first_step_hand_value(self):
        params = {"w": np.array([0.0])}
        state = init_adam(params)
        new, _ = adam_step(params, {"w": np.array([1.0])}, state, self._cfg())
        # -lr * mhat / (sqrt(vhat) + eps) with mhat = vhat = 1
        assert new["w"][0] == pytest.approx(-0.000999999990, abs=1e-12)

    def test_determinism(self):
        params = {"w": np.array([1.0, 2.0])}
        grads = {"w": np.array([0.1, -0.2])}
        a1, s1 = adam_step(params, grads, init_adam(params), self._cfg())
        a2, s2 = adam_step(params, grads, init_adam(params), self._cfg())
        np.testing.assert_array_equal(a1["w"], a2["w"])
        np.testing.assert_array_equal(s1.m["w"], s2.m["w"])

    def test_no_silent_gradient_normalization(self):
        params = {"w": np.array([0.0])}
        one, _ = adam_step(params, {"w": np.array([1.0])}, init_adam(params), self._cfg())
        two, _ = adam_step(params, {"w": np.array([2.0])}, init_adam(params), self._cfg())
        assert one["w"][0] != two["w"][0]

    def test_shape_mismatch(self):
        params = {"w": np.zeros(3)}
        with pytest.raises(ShapeError):
            adam_step(params, {"w": np.zeros(2)}, init_adam(params), self._cfg())


class TestSplit:
    def test_ninety_ten(self):
        cells = [f"c{i}" for i in range(10)]
        tr, te = split_dataset(cells, 0.9, 0)
        assert len(tr) == 9 and len(te) == 1
        assert set(tr) | set(te) == set(cells)

    def test_deterministic_per_seed(self):
        cells = [f"c{i}" for i in range(20)]
        assert split_dataset(cells, 0.9, 5) == split_dataset(cells, 0.9, 5)
        assert split_dataset(cells, 0.9, 5) != split_dataset(cells, 0.9, 6)

    def test_both_sides_nonempty(self):
        tr, te = split_dataset(["a", "b"], 0.99, 0)
        assert len(tr) == 1 and len(te) == 1

    def test_too_few_cells(self):
        with pytest.raises(ConfigError):
            split_dataset(["a"], 0.9, 0)


def tiny_dataset(n_cells=4, n_years=1, seed=3):
    weather = generate_weather(
        WeatherGenConfig(n_cells=n_cells, n_years=n_years, seed=seed)
    )
    crop = crop_preset("maizelike")
    yields = [simulate_crop(w, crop) for w in weather]
    return weather, yields


class TestTrain:
    def test_zero_targets_converge(self):
        weather, _ = tiny_dataset()
        zeros = [
            YieldSeries(cell=w.cell, start_year=w.start_year, twso=np.zeros(w.n_days))
            for w in weather
        ]
        cfg = TrainConfig(epochs=45, seed=1, hidden=8, minibatch_size=4, dropout_rate=0.0)
        model, hist = train(weather, zeros, "maizelike", cfg)
        assert hist.train_loss[-1] < 1e-6

    def test_bit_determinism(self):
        weather, yields = tiny_dataset()
        cfg = TrainConfig(epochs=3, seed=7, hidden=8, minibatch_size=4)
        m1, h1 = train(weather, yields, "maizelike", cfg)
        m2, h2 = train(weather, yields, "maizelike", cfg)
        assert h1.train_loss == h2.train_loss
        assert h1.val_loss == h2.val_loss
        for a, b in zip(m1.param_dict().values(), m2.param_dict().values()):
            np.testing.assert_array_equal(a, b)

    def test_misaligned_dataset_rejected(self):
        weather, yields = tiny_dataset()
        with pytest.raises(Exception, match="misaligned"):
            train(weather, yields[:-1], "maizelike", TrainConfig(epochs=1, hidden=4))

    def test_early_stopping_restores_best(self):
        weather, yields = tiny_dataset()
        cfg = TrainConfig(epochs=6, seed=2, hidden=8, minibatch_size=4, early_stop_patience=2)
        model, hist = train(weather, yields, "maizelike", cfg)
        assert hist.best_epoch >= 0
        assert hist.val_loss[hist.best_epoch] == min(hist.val_loss)


class _TrackedArray(np.ndarray):
    """ndarray that logs an event whenever a ufunc or numpy function touches it."""

    def __new__(cls, base, log, tag):
        obj = np.asarray(base).view(cls)
        obj._log = log
        obj._tag = tag
        return obj

    def __array_finalize__(self, obj):
        if obj is None:
            return
        self._log = getattr(obj, "_log", None)
        self._tag = getattr(obj, "_tag", None)

    def _note(self):
        if self._log is not None:
            self._log.append(("read", self._tag))

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        self._note()
        clean = [np.asarray(x) if isinstance(x, _TrackedArray) else x for x in inputs]
        out = kwargs.pop("out", None)
        if out is not None:
            kwargs["out"] = tuple(
                np.asarray(o) if isinstance(o, _TrackedArray) else o for o in out
            )
        return getattr(ufunc, method)(*clean, **kwargs)

    def __array_function__(self, func, types, args, kwargs):
        self._note()

        def strip(x):
            if isinstance(x, _TrackedArray):
                return np.asarray(x)
            if isinstance(x, (list, tuple)):
                return type(x)(strip(i) for i in x)
            return x

        return func(*strip(args), **(kwargs or {}))


class TestNoTestLeak:
    def test_update_path_never_reads_heldout_cells(self, monkeypatch):
        weather, yields = tiny_dataset(n_cells=5)
        cells = sorted(w.cell.id for w in weather)
        cfg = TrainConfig(epochs=2, seed=11, hidden=6, minibatch_size=4)
        _, heldout = split_dataset(cells, cfg.split_ratio, cfg.seed)

        events = []
        for w in weather:
            if w.cell.id in heldout:
                for name in ("tmax", "tmin", "precip"):
                    arr = _TrackedArray(getattr(w, name), events, w.cell.id)
                    object.__setattr__(w, name, arr)

        scaler_cells = []
        orig_fit = training.fit_scaler

        def spy_fit(train_feats, train_targets):
            scaler_cells.extend(f.cell.id for f in train_feats)
            return orig_fit(train_feats, train_targets)

        update_events = []
        orig_adam = training.adam_step

        def spy_adam(*args, **kwargs):
            events.append(("update", None))
            update_events.append(1)
            return orig_adam(*args, **kwargs)

        monkeypatch.setattr(training, "fit_scaler", spy_fit)
        monkeypatch.setattr(training, "adam_step", spy_adam)

        train(weather, yields, "maizelike", cfg)

        # scaler fitted on training cells only
        assert set(scaler_cells).isdisjoint(heldout)
        # held-out weather is first touched after the first parameter update,
        # i.e. inside validation, never on the gradient path
        assert update_events, "training ran no updates"
        first_update = events.index(("update", None))
        reads = [i for i, e in enumerate(events) if e[0] == "read"]
        assert reads, "held-out data was never read (validation broken)"
        assert min(reads) > first_update


class TestCheckpoint:
    def _trained_model(self):
        weather, yields = tiny_dataset()
        cfg = TrainConfig(epochs=2, seed=4, hidden=8, minibatch_size=4)
        model, _ = train(weather, yields, "maizelike", cfg)
        return model, weather

    def test_round_trip_bytes_and_inference(self, tmp_path):
        model, weather = self._trained_model()
        p1 = tmp_path / "m.json"
        p2 = tmp_path / "m2.json"
        save_checkpoint(model, p1, crop_tag="maizelike")
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2, crop_tag="maizelike")
        assert p1.read_bytes() == p2.read_bytes()
        before = predict_series(model, weather[0])
        after = predict_series(loaded, weather[0])
        np.testing.assert_array_equal(before.twso, after.twso)

    def test_tampered_length_integrity_error(self, tmp_path):
        model, _ = self._trained_model()
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        doc = json.loads(path.read_text())
        doc["weights"]["head.b"]["shape"] = [99]
        path.write_text(json.dumps(doc))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_missing_weight_integrity_error(self, tmp_path):
        model, _ = self._trained_model()
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        doc = json.loads(path.read_text())
        del doc["weights"]["outer.U"]
        path.write_text(json.dumps(doc))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path):
        model, _ = self._trained_model()
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionError, match="supported versions: 1"):
            load_checkpoint(path)

    def test_unscalered_model_rejected(self, tmp_path):
        model = init_model(FeatureSpec(), hidden=4, seed=0)
        with pytest.raises(Exception, match="scaler"):
            save_checkpoint(model, tmp_path / "m.json")
