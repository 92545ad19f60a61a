"""Training machinery: Huber loss, Adam, the cell-wise dataset split, the
epoch loop with early stopping, inference helpers, and bit-exact JSON
checkpointing.

Determinism contract: for a fixed seed and a fixed BLAS thread count, two
runs produce identical histories, identical parameters, and byte-identical
checkpoints. All shuffling and dropout draws come from one seeded stream
consumed in a fixed order.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (
    DAYS_PER_YEAR,
    EnsembleYield,
    WeatherSeries,
    YieldSeries,
    require_aligned,
)
from .errors import (
    ConfigError,
    DataDomainError,
    IntegrityError,
    SchemaError,
    ShapeError,
    StateError,
    VersionError,
)
from .features import (
    BatchedSequence,
    FeatureSpec,
    Scaler,
    apply_scaler,
    batch_sequence,
    build_features,
    fit_scaler,
    scale_target,
    unscale_target,
)
from .network import LstmParams, NestedModel, backward_grid, forward, forward_grid, init_model
from .runio import atomic_write_text

Array = np.ndarray

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    minibatch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    huber_delta: float = 0.5
    dropout_rate: float = 0.3
    split_ratio: float = 0.9
    seed: int = 0
    early_stop_patience: int = 10
    hidden: int = 128

    def __post_init__(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.huber_delta <= 0:
            raise ConfigError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.minibatch_size < 1 or self.hidden < 1:
            raise ConfigError("epochs, minibatch_size and hidden must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")


def huber_loss(
    pred: Array, target: Array, mask: Array, delta: float
) -> tuple[float, Array]:
    """Masked mean Huber loss and its gradient w.r.t. pred.

    Quadratic within +-delta, linear outside; masked elements contribute
    nothing to either value or gradient.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ShapeError(
            f"pred {pred.shape}, target {target.shape}, mask {mask.shape} must match"
        )
    if delta <= 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    count = int(mask.sum())
    if count == 0:
        raise DataDomainError("huber_loss over an entirely masked input")
    a = pred - target
    abs_a = np.abs(a)
    per_elem = np.where(abs_a <= delta, 0.5 * a * a, delta * (abs_a - 0.5 * delta))
    loss = float(np.sum(per_elem, where=mask, dtype=np.float64) / count)
    grad = np.where(mask, np.clip(a, -delta, delta) / count, 0.0)
    return loss, grad


def _huber_grid(
    pred: Array, target: Array, mask: Array, delta: float
) -> tuple[float, Array]:
    """Batched Huber: mean over samples of per-sample masked means.

    pred/target are (N, B, L) with a shared (B, L) mask; the returned
    gradient already carries zeros on masked slots.
    """
    n = pred.shape[0]
    count = int(mask.sum())
    a = (pred - target).astype(np.float64, copy=False)
    abs_a = np.abs(a)
    per_elem = np.where(abs_a <= delta, 0.5 * a * a, delta * (abs_a - 0.5 * delta))
    per_elem = per_elem * mask
    loss = float(per_elem.sum(dtype=np.float64) / (count * n))
    grad = np.clip(a, -delta, delta) * mask / (count * n)
    return loss, grad


@dataclass
class AdamState:
    m: dict[str, Array]
    v: dict[str, Array]
    t: int = 0


def init_adam(params: dict[str, Array]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        t=0,
    )


def adam_step(
    params: dict[str, Array],
    grads: dict[str, Array],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, Array], AdamState]:
    """One Adam update (Kingma-Ba form, epsilon outside the square root)."""
    if set(params) != set(grads):
        raise ShapeError("params and grads must share parameter names")
    for k in params:
        if params[k].shape != grads[k].shape:
            raise ShapeError(f"{k}: param {params[k].shape} vs grad {grads[k].shape}")
    t = state.t + 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_params: dict[str, Array] = {}
    new_m: dict[str, Array] = {}
    new_v: dict[str, Array] = {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        new_params[k] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def split_dataset(cells: list, ratio: float, seed: int) -> tuple[list, list]:
    """Cell-wise split: every year of a cell lands on one side.

    |train| = round(ratio * n), clamped so both sides keep at least one cell.
    """
    n = len(cells)
    if n < 2:
        raise ConfigError(f"need at least 2 cells to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train = [cells[i] for i in perm[:n_train]]
    test = [cells[i] for i in perm[n_train:]]
    return train, test


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


@dataclass
class _SampleSet:
    """Cell-years packed for the network: inputs, scaled targets, shared mask."""

    x: Array        # (N, B, L, F)
    target: Array   # (N, B, L), zeros on masked slots
    mask: Array     # (B, L)
    keys: list[tuple[str, int]]

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _as_yield_map(yields) -> dict[str, YieldSeries]:
    out: dict[str, YieldSeries] = {}
    for item in yields:
        series = item.series if isinstance(item, EnsembleYield) else item
        out[series.cell.id] = series
    return out


def prepare_samples(
    weather_by_cell: dict[str, WeatherSeries],
    yield_by_cell: dict[str, YieldSeries],
    cell_ids: list[str],
    spec: FeatureSpec,
    scaler: Scaler,
    dtype=np.float32,
) -> _SampleSet:
    xs, tgts, keys = [], [], []
    mask = None
    for cid in cell_ids:
        ws = weather_by_cell[cid]
        ys = yield_by_cell[cid]
        for y in range(ws.n_years):
            feats = apply_scaler(build_features(ws, y, spec), scaler)
            seq = batch_sequence(feats, spec)
            mask = seq.mask
            xs.append(seq.tensor.astype(dtype))
            grid = np.zeros(mask.size, dtype=dtype)
            grid[mask.reshape(-1)] = scale_target(ys.year_values(y), scaler)
            tgts.append(grid.reshape(mask.shape))
            keys.append((cid, ws.start_year + y))
    return _SampleSet(
        x=np.stack(xs), target=np.stack(tgts), mask=mask, keys=keys
    )


def _eval_loss(model: NestedModel, samples: _SampleSet, delta: float, chunk: int = 64) -> float:
    total = 0.0
    for start in range(0, samples.n, chunk):
        stop = min(start + chunk, samples.n)
        y, _ = forward_grid(model, samples.x[start:stop], samples.mask, mode="infer")
        loss, _ = _huber_grid(y, samples.target[start:stop], samples.mask, delta)
        total += loss * (stop - start)
    return total / samples.n


def mean_target_curve(yields: list[YieldSeries]) -> Array:
    """Day-of-year mean TWSO over every year of every series (physical units).

    This is the predict-the-training-mean baseline a trained surrogate has
    to beat.
    """
    if not yields:
        raise ConfigError("no series to average")
    rows = np.concatenate(
        [y.twso.reshape(y.n_years, DAYS_PER_YEAR) for y in yields], axis=0
    )
    return rows.mean(axis=0)


def train(
    weather: list[WeatherSeries],
    yields,
    crop_tag: str,
    cfg: TrainConfig,
    spec: FeatureSpec | None = None,
) -> tuple[NestedModel, TrainHistory]:
    """Full pipeline: split by cell, fit the scaler on training cells only,
    pack samples, run Adam on masked Huber loss with per-epoch validation on
    the held-out cells, early-stop on stalled validation, and return the
    best-validation model.
    """
    spec = spec or FeatureSpec()
    yield_map = _as_yield_map(yields)
    require_aligned(weather, list(yield_map.values()))
    weather_map = {w.cell.id: w for w in weather}
    cell_ids = sorted(weather_map)

    train_cells, val_cells = split_dataset(cell_ids, cfg.split_ratio, cfg.seed)

    train_feats = [
        build_features(weather_map[cid], y, spec)
        for cid in train_cells
        for y in range(weather_map[cid].n_years)
    ]
    scaler = fit_scaler(train_feats, [yield_map[cid] for cid in train_cells])

    train_set = prepare_samples(weather_map, yield_map, train_cells, spec, scaler)

    # Held-out data enters only through this closure, so the update path
    # cannot touch it: the first read happens inside the first evaluation.
    val_state: dict = {"set": None}

    def validation_loss(current: NestedModel) -> float:
        if val_state["set"] is None:
            val_state["set"] = prepare_samples(
                weather_map, yield_map, val_cells, spec, scaler
            )
        return _eval_loss(current, val_state["set"], cfg.huber_delta)

    model = init_model(
        spec,
        cfg.hidden,
        seed=cfg.seed,
        dropout_rate=cfg.dropout_rate,
        scaler=scaler,
    )
    params = model.param_dict()
    state = init_adam(params)
    loop_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))
    )

    history = TrainHistory()
    best_val = np.inf
    best_params = {k: p.copy() for k, p in params.items()}
    stale = 0

    for _epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = loop_rng.permutation(train_set.n)
        running = 0.0
        for start in range(0, train_set.n, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            xb = train_set.x[idx]
            tb = train_set.target[idx]
            y, cache = forward_grid(model, xb, train_set.mask, mode="train", rng=loop_rng)
            loss, d_grid = _huber_grid(y, tb, train_set.mask, cfg.huber_delta)
            grads = backward_grid(model, cache, d_grid)
            params, state = adam_step(params, grads, state, cfg)
            model.set_param_dict(params)
            running += loss * len(idx)
        train_loss = running / train_set.n
        val_loss = validation_loss(model)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.seconds.append(time.perf_counter() - t0)

        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: p.copy() for k, p in params.items()}
            history.best_epoch = _epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    model.set_param_dict(best_params)
    return model, history


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------

def predict_year(model: NestedModel, weather: WeatherSeries, year_index: int) -> Array:
    """Daily TWSO prediction for one cell-year, in physical units."""
    if model.scaler is None:
        raise StateError("model has no scaler; train or load a checkpoint first")
    feats = apply_scaler(build_features(weather, year_index, model.spec), model.scaler)
    seq = batch_sequence(feats, model.spec)
    pred, _ = forward(model, seq, mode="infer")
    return unscale_target(pred, model.scaler)


def predict_series(model: NestedModel, weather: WeatherSeries) -> YieldSeries:
    parts = [predict_year(model, weather, y) for y in range(weather.n_years)]
    return YieldSeries(
        cell=weather.cell, start_year=weather.start_year, twso=np.concatenate(parts)
    )


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def _encode_weight(arr: Array) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_weight(name: str, entry: dict) -> Array:
    try:
        shape = tuple(int(s) for s in entry["shape"])
        raw = base64.b64decode(entry["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"weight {name}: malformed entry") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise IntegrityError(
            f"weight {name}: payload is {len(raw)} bytes, shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def save_checkpoint(model: NestedModel, path, crop_tag: str = "", extra_hyper: dict | None = None) -> None:
    """Serialize the model to a single self-describing JSON document.

    Weights go as base64 of little-endian float32 row-major bytes, so a
    save/load round trip is bit-exact and reruns produce identical files.
    """
    if model.scaler is None:
        raise StateError("cannot checkpoint a model without a fitted scaler")
    hyper = {
        "hidden": model.inner.hidden_dim,
        "dropout_rate": model.dropout_rate,
        "crop": crop_tag,
    }
    if extra_hyper:
        hyper.update(extra_hyper)
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "spec": {
            "lags": list(model.spec.lags),
            "include_doy": model.spec.include_doy,
            "batch_len": model.spec.batch_len,
        },
        "scaler": {
            "feature_mean": model.scaler.feature_mean.tolist(),
            "feature_sd": model.scaler.feature_sd.tolist(),
            "target_scale": model.scaler.target_scale,
        },
        "hyper": hyper,
        "weights": {k: _encode_weight(v) for k, v in model.param_dict().items()},
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def read_checkpoint_meta(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {k: doc.get(k) for k in ("format_version", "spec", "hyper")}


def load_checkpoint(path) -> NestedModel:
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(f"no such checkpoint: {path}") from None
    with fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"{path}: not valid JSON") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"{path}: format version {version!r} not supported; supported versions: {CHECKPOINT_VERSION}"
        )
    try:
        spec = FeatureSpec(
            lags=tuple(doc["spec"]["lags"]),
            include_doy=bool(doc["spec"]["include_doy"]),
            batch_len=int(doc["spec"]["batch_len"]),
        )
        scaler = Scaler(
            feature_mean=np.asarray(doc["scaler"]["feature_mean"], dtype=np.float64),
            feature_sd=np.asarray(doc["scaler"]["feature_sd"], dtype=np.float64),
            target_scale=float(doc["scaler"]["target_scale"]),
        )
        hyper = doc["hyper"]
        weights = doc["weights"]
    except (KeyError, TypeError) as exc:
        raise IntegrityError(f"{path}: missing checkpoint section ({exc})") from exc

    names = (
        "inner.W", "inner.U", "inner.b",
        "outer.W", "outer.U", "outer.b",
        "head.W", "head.b",
    )
    missing = [n for n in names if n not in weights]
    if missing:
        raise IntegrityError(f"{path}: missing weights {missing}")
    arrays = {n: _decode_weight(n, weights[n]) for n in names}

    hidden = int(hyper.get("hidden", arrays["inner.U"].shape[1]))
    try:
        inner = LstmParams(
            input_dim=spec.n_features,
            hidden_dim=hidden,
            W=arrays["inner.W"],
            U=arrays["inner.U"],
            b=arrays["inner.b"],
        )
        outer = LstmParams(
            input_dim=hidden,
            hidden_dim=hidden,
            W=arrays["outer.W"],
            U=arrays["outer.U"],
            b=arrays["outer.b"],
        )
        model = NestedModel(
            inner=inner,
            outer=outer,
            head_W=arrays["head.W"],
            head_b=arrays["head.b"],
            dropout_rate=float(hyper.get("dropout_rate", 0.3)),
            spec=spec,
            scaler=scaler,
        )
    except ShapeError as exc:
        raise IntegrityError(f"{path}: inconsistent weight shapes ({exc})") from exc
    return model
