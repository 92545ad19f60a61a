"""Nested recurrent network: a per-batch inner LSTM whose final hidden state
summarizes each day batch, an outer LSTM consuming the batch summaries in
order, inverted dropout on the outer hidden states, and a shared dense head
with a ReLU floor mapping each outer state to its batch's daily outputs.

The inner state resets at every batch boundary, so cross-batch memory lives
only in the outer recurrence. forward/backward are exact adjoints of each
other; the finite-difference suite in the tests is the gate for any change
here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericError, ShapeError, StateError
from .features import BatchedSequence, FeatureSpec, Scaler

Array = np.ndarray

# Rows of W/U/b are grouped by gate in this fixed order.
GATE_ORDER = ("input", "forget", "candidate", "output")

PARAM_NAMES = (
    "inner.W",
    "inner.U",
    "inner.b",
    "outer.W",
    "outer.U",
    "outer.b",
    "head.W",
    "head.b",
)


@dataclass
class LstmParams:
    """One LSTM layer: W (4H x input), U (4H x H), b (4H), gates ordered
    input/forget/candidate/output along the first axis."""

    input_dim: int
    hidden_dim: int
    W: Array
    U: Array
    b: Array

    def __post_init__(self) -> None:
        four_h = 4 * self.hidden_dim
        if self.W.shape != (four_h, self.input_dim):
            raise ShapeError(f"W expected {(four_h, self.input_dim)}, got {self.W.shape}")
        if self.U.shape != (four_h, self.hidden_dim):
            raise ShapeError(f"U expected {(four_h, self.hidden_dim)}, got {self.U.shape}")
        if self.b.shape != (four_h,):
            raise ShapeError(f"b expected {(four_h,)}, got {self.b.shape}")
        for name in ("W", "U", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericError(f"{name} contains non-finite values")


def lstm_cell_step(
    x: Array, h_prev: Array, c_prev: Array, p: LstmParams
) -> tuple[Array, Array, dict]:
    """One gated update for a single input vector.

    Returns the new hidden and cell states plus the gate activations, which
    the batched training path caches for the backward sweep.
    """
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    if x.shape != (p.input_dim,):
        raise ShapeError(f"x expected {(p.input_dim,)}, got {x.shape}")
    if h_prev.shape != (p.hidden_dim,) or c_prev.shape != (p.hidden_dim,):
        raise ShapeError(f"states expected {(p.hidden_dim,)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h_prev)) and np.all(np.isfinite(c_prev))):
        raise NumericError("non-finite input to lstm_cell_step")
    hdim = p.hidden_dim
    z = p.W @ x + p.U @ h_prev + p.b
    i = expit(z[:hdim])
    f = expit(z[hdim : 2 * hdim])
    g = np.tanh(z[2 * hdim : 3 * hdim])
    o = expit(z[3 * hdim :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, {"i": i, "f": f, "g": g, "o": o}


@dataclass
class NestedModel:
    """All learnable parameters plus the feature/scaling configuration."""

    inner: LstmParams
    outer: LstmParams
    head_W: Array
    head_b: Array
    dropout_rate: float
    spec: FeatureSpec
    scaler: Scaler | None = None
    dtype: np.dtype = np.dtype(np.float32)

    def __post_init__(self) -> None:
        if self.inner.hidden_dim != self.outer.input_dim:
            raise ShapeError(
                f"outer input {self.outer.input_dim} must equal inner hidden {self.inner.hidden_dim}"
            )
        expected = (self.spec.batch_len, self.outer.hidden_dim)
        if self.head_W.shape != expected:
            raise ShapeError(f"head_W expected {expected}, got {self.head_W.shape}")
        if self.head_b.shape != (self.spec.batch_len,):
            raise ShapeError(f"head_b expected {(self.spec.batch_len,)}, got {self.head_b.shape}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def param_dict(self) -> dict[str, Array]:
        return {
            "inner.W": self.inner.W,
            "inner.U": self.inner.U,
            "inner.b": self.inner.b,
            "outer.W": self.outer.W,
            "outer.U": self.outer.U,
            "outer.b": self.outer.b,
            "head.W": self.head_W,
            "head.b": self.head_b,
        }

    def set_param_dict(self, params: dict[str, Array]) -> None:
        current = self.param_dict()
        if set(params) != set(current):
            raise ShapeError(f"parameter names must be exactly {sorted(current)}")
        for name, arr in params.items():
            if arr.shape != current[name].shape:
                raise ShapeError(
                    f"{name}: expected shape {current[name].shape}, got {arr.shape}"
                )
        self.inner.W, self.inner.U, self.inner.b = (
            params["inner.W"],
            params["inner.U"],
            params["inner.b"],
        )
        self.outer.W, self.outer.U, self.outer.b = (
            params["outer.W"],
            params["outer.U"],
            params["outer.b"],
        )
        self.head_W, self.head_b = params["head.W"], params["head.b"]


def init_model(
    spec: FeatureSpec,
    hidden: int,
    seed: int,
    dropout_rate: float = 0.3,
    scaler: Scaler | None = None,
    dtype=np.float32,
) -> NestedModel:
    """Fresh model with uniform(-s, s) weights, s = 1/sqrt(fan_in), forget
    biases at 1 and all other biases at 0. Deterministic per seed."""
    if hidden < 1:
        raise ShapeError(f"hidden must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    n_in = spec.n_features

    def uniform(fan_in: int, shape: tuple[int, ...]) -> Array:
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape).astype(dtype)

    def bias(h: int) -> Array:
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget gate starts open
        return b

    inner = LstmParams(
        input_dim=n_in,
        hidden_dim=hidden,
        W=uniform(n_in, (4 * hidden, n_in)),
        U=uniform(hidden, (4 * hidden, hidden)),
        b=bias(hidden),
    )
    outer = LstmParams(
        input_dim=hidden,
        hidden_dim=hidden,
        W=uniform(hidden, (4 * hidden, hidden)),
        U=uniform(hidden, (4 * hidden, hidden)),
        b=bias(hidden),
    )
    head_W = uniform(hidden, (spec.batch_len, hidden))
    head_b = np.zeros(spec.batch_len, dtype=dtype)
    return NestedModel(
        inner=inner,
        outer=outer,
        head_W=head_W,
        head_b=head_b,
        dropout_rate=dropout_rate,
        spec=spec,
        scaler=scaler,
        dtype=dtype,
    )


@dataclass
class ForwardCache:
    """Everything the backward sweep needs from a train-mode forward."""

    x: Array                 # (N, B, L, F)
    mask: Array              # (B, L) bool
    inner_gates: dict[str, Array]   # each (L, N*B, H)
    inner_h_prev: Array      # (L, N*B, H)
    inner_c_prev: Array      # (L, N*B, H)
    inner_tanh_c: Array      # (L, N*B, H)
    summaries: Array         # (N, B, H) inner final states
    outer_gates: dict[str, Array]   # each (B, N, H)
    outer_h_prev: Array      # (B, N, H)
    outer_c_prev: Array      # (B, N, H)
    outer_tanh_c: Array      # (B, N, H)
    dropped: Array           # (N, B, H) head input after dropout
    drop_mask: Array | None  # (N, B, H) or None when rate == 0
    relu_on: Array           # (N, B, L) bool


def _run_lstm(
    p: LstmParams, inputs: Array, dtype: np.dtype, want_cache: bool
):
    """Run one LSTM over (N, T, input_dim), states starting at zero.

    Returns hidden states per step (N, T, H) and, when requested, the gate
    stacks the backward pass consumes.
    """
    n, t_steps, _ = inputs.shape
    hdim = p.hidden_dim
    # One big GEMM for the input contribution of every step.
    zx = inputs.reshape(n * t_steps, -1) @ p.W.T
    zx = zx.reshape(n, t_steps, 4 * hdim)
    h = np.zeros((n, hdim), dtype=dtype)
    c = np.zeros((n, hdim), dtype=dtype)
    hs = np.empty((n, t_steps, hdim), dtype=dtype)
    cache = None
    if want_cache:
        cache = {
            "i": np.empty((t_steps, n, hdim), dtype=dtype),
            "f": np.empty((t_steps, n, hdim), dtype=dtype),
            "g": np.empty((t_steps, n, hdim), dtype=dtype),
            "o": np.empty((t_steps, n, hdim), dtype=dtype),
            "h_prev": np.empty((t_steps, n, hdim), dtype=dtype),
            "c_prev": np.empty((t_steps, n, hdim), dtype=dtype),
            "tanh_c": np.empty((t_steps, n, hdim), dtype=dtype),
        }
    for t in range(t_steps):
        z = zx[:, t, :] + h @ p.U.T + p.b
        i = expit(z[:, :hdim])
        f = expit(z[:, hdim : 2 * hdim])
        g = np.tanh(z[:, 2 * hdim : 3 * hdim])
        o = expit(z[:, 3 * hdim :])
        if want_cache:
            cache["i"][t] = i
            cache["f"][t] = f
            cache["g"][t] = g
            cache["o"][t] = o
            cache["h_prev"][t] = h
            cache["c_prev"][t] = c
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        if want_cache:
            cache["tanh_c"][t] = tanh_c
        hs[:, t, :] = h
    return hs, cache


def forward_grid(
    model: NestedModel,
    x: Array,
    mask: Array,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[Array, ForwardCache | None]:
    """Forward pass over a stack of samples.

    x is (N, B, L, F) with a shared (B, L) mask. Returns the (N, B, L)
    output grid (masked slots are computed but meaningless) and a cache in
    train mode.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=model.dtype)
    if x.ndim != 4 or x.shape[3] != model.inner.input_dim:
        raise ShapeError(
            f"input expected (N, B, L, {model.inner.input_dim}), got {x.shape}"
        )
    if x.shape[2] != model.spec.batch_len:
        raise ShapeError(
            f"batch length {x.shape[2]} does not match model batch_len {model.spec.batch_len}"
        )
    n, n_batches, length, n_feat = x.shape
    train = mode == "train"
    hdim = model.inner.hidden_dim

    inner_hs, inner_cache = _run_lstm(
        model.inner, x.reshape(n * n_batches, length, n_feat), model.dtype, train
    )
    summaries = inner_hs[:, -1, :].reshape(n, n_batches, hdim)

    outer_hs, outer_cache = _run_lstm(model.outer, summaries, model.dtype, train)

    if train and model.dropout_rate > 0.0:
        if rng is None:
            raise StateError("train-mode forward with dropout needs an rng")
        keep = rng.random(outer_hs.shape) >= model.dropout_rate
        drop_mask = keep.astype(model.dtype) / np.asarray(
            1.0 - model.dropout_rate, dtype=model.dtype
        )
        dropped = outer_hs * drop_mask
    else:
        drop_mask = None
        dropped = outer_hs

    y_pre = dropped @ model.head_W.T + model.head_b
    y = np.maximum(y_pre, 0)

    cache = None
    if train:
        cache = ForwardCache(
            x=x,
            mask=np.asarray(mask, dtype=bool),
            inner_gates={k: inner_cache[k] for k in ("i", "f", "g", "o")},
            inner_h_prev=inner_cache["h_prev"],
            inner_c_prev=inner_cache["c_prev"],
            inner_tanh_c=inner_cache["tanh_c"],
            summaries=summaries,
            outer_gates={k: outer_cache[k] for k in ("i", "f", "g", "o")},
            outer_h_prev=outer_cache["h_prev"],
            outer_c_prev=outer_cache["c_prev"],
            outer_tanh_c=outer_cache["tanh_c"],
            dropped=dropped,
            drop_mask=drop_mask,
            relu_on=y_pre > 0,
        )
    return y, cache


def forward(
    model: NestedModel,
    seq: BatchedSequence,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[Array, ForwardCache | None]:
    """Predict one sample; returns the unmasked daily outputs in order."""
    y, cache = forward_grid(
        model, seq.tensor[np.newaxis], seq.mask, mode=mode, rng=rng
    )
    pred = y.reshape(-1)[seq.mask.reshape(-1)]
    return pred, cache


def _lstm_backward(
    p: LstmParams,
    gates: dict[str, Array],
    h_prev: Array,
    c_prev: Array,
    tanh_c: Array,
    inputs: Array,
    dh_steps: Array,
    dtype: np.dtype,
):
    """Backpropagate through one LSTM run.

    dh_steps is (T, N, H): the gradient arriving at each step's hidden state
    from outside the recurrence. Returns (dW, dU, db, d_inputs (N, T, I)).
    """
    t_steps, n, hdim = dh_steps.shape
    dW = np.zeros_like(p.W)
    dU = np.zeros_like(p.U)
    db = np.zeros_like(p.b)
    d_inputs = np.empty((n, t_steps, p.input_dim), dtype=dtype)
    dh_next = np.zeros((n, hdim), dtype=dtype)
    dc_next = np.zeros((n, hdim), dtype=dtype)
    for t in range(t_steps - 1, -1, -1):
        i = gates["i"][t]
        f = gates["f"][t]
        g = gates["g"][t]
        o = gates["o"][t]
        tc = tanh_c[t]
        dh = dh_steps[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev[t]
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += dz.T @ inputs[:, t, :]
        dU += dz.T @ h_prev[t]
        db += dz.sum(axis=0)
        d_inputs[:, t, :] = dz @ p.W
        dh_next = dz @ p.U
        dc_next = dc * f
    return dW, dU, db, d_inputs


def backward_grid(
    model: NestedModel, cache: ForwardCache, d_grid: Array
) -> dict[str, Array]:
    """Exact gradients of all parameters given the loss gradient on the
    (N, B, L) output grid. Masked slots must already carry zeros."""
    if cache is None:
        raise StateError("backward requires the cache from a train-mode forward")
    d_grid = np.asarray(d_grid, dtype=model.dtype)
    n, n_batches, length = cache.relu_on.shape
    if d_grid.shape != (n, n_batches, length):
        raise ShapeError(
            f"d_grid expected {(n, n_batches, length)}, got {d_grid.shape}"
        )
    hdim = model.outer.hidden_dim

    dy = d_grid * cache.relu_on
    d_head_W = np.tensordot(dy, cache.dropped, axes=([0, 1], [0, 1])).astype(model.dtype)
    d_head_b = dy.sum(axis=(0, 1), dtype=np.float64).astype(model.dtype)
    d_dropped = dy @ model.head_W
    if cache.drop_mask is not None:
        d_hout = d_dropped * cache.drop_mask
    else:
        d_hout = d_dropped

    # Outer recurrence: each step's hidden state feeds the head directly.
    dh_outer = np.ascontiguousarray(np.swapaxes(d_hout, 0, 1))  # (B, N, H)
    dW_o, dU_o, db_o, d_summaries = _lstm_backward(
        model.outer,
        cache.outer_gates,
        cache.outer_h_prev,
        cache.outer_c_prev,
        cache.outer_tanh_c,
        cache.summaries,
        dh_outer,
        model.dtype,
    )

    # Inner recurrences are independent per batch; only the final step's
    # hidden state (= the summary) receives outside gradient.
    nb = n * n_batches
    dh_inner = np.zeros((length, nb, model.inner.hidden_dim), dtype=model.dtype)
    dh_inner[length - 1] = d_summaries.reshape(nb, model.inner.hidden_dim)
    x_flat = cache.x.reshape(nb, length, model.inner.input_dim)
    dW_i, dU_i, db_i, _ = _lstm_backward(
        model.inner,
        cache.inner_gates,
        cache.inner_h_prev,
        cache.inner_c_prev,
        cache.inner_tanh_c,
        x_flat,
        dh_inner,
        model.dtype,
    )

    return {
        "inner.W": dW_i,
        "inner.U": dU_i,
        "inner.b": db_i,
        "outer.W": dW_o,
        "outer.U": dU_o,
        "outer.b": db_o,
        "head.W": d_head_W,
        "head.b": d_head_b,
    }


def backward(
    model: NestedModel, cache: ForwardCache, d_out: Array
) -> dict[str, Array]:
    """Gradients for a single sample given d(loss)/d(unmasked outputs)."""
    if cache is None:
        raise StateError("backward requires the cache from a train-mode forward")
    mask = cache.mask
    d_out = np.asarray(d_out, dtype=model.dtype)
    if d_out.shape != (int(mask.sum()),):
        raise ShapeError(f"d_out expected {(int(mask.sum()),)}, got {d_out.shape}")
    d_grid = np.zeros((1,) + mask.shape, dtype=model.dtype)
    d_grid[0][mask] = d_out
    return backward_grid(model, cache, d_grid)
