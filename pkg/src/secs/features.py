"""Engineered daily inputs for the surrogate: lagged weather columns plus a
day-of-year channel, z-score scaling, target normalization, and packing of a
year into fixed-length non-overlapping day batches with a padding mask."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import DAYS_PER_YEAR, CellId, WeatherSeries, YieldSeries
from .errors import ConfigError, ShapeError

Array = np.ndarray

SD_FLOOR = 1e-6
TARGET_SCALE_FLOOR = 1.0


@dataclass(frozen=True)
class FeatureSpec:
    """Which lags to include, whether to add day-of-year, and the batch width."""

    lags: tuple[int, ...] = (1, 2, 3, 4, 5)
    include_doy: bool = True
    batch_len: int = 6

    def __post_init__(self) -> None:
        object.__setattr__(self, "lags", tuple(int(k) for k in self.lags))
        if any(k <= 0 for k in self.lags):
            raise ConfigError(f"lags must be strictly positive: {self.lags}")
        if any(b <= a for a, b in zip(self.lags, self.lags[1:])):
            raise ConfigError(f"lags must be strictly increasing: {self.lags}")
        if self.batch_len < 1:
            raise ConfigError(f"batch_len must be >= 1, got {self.batch_len}")

    @property
    def n_features(self) -> int:
        return 3 * (1 + len(self.lags)) + (1 if self.include_doy else 0)

    def column_names(self) -> list[str]:
        names = ["tmax", "tmin", "precip"]
        for var in ("tmax", "tmin", "precip"):
            names += [f"{var}_lag{k}" for k in self.lags]
        if self.include_doy:
            names.append("doy")
        return names


@dataclass(frozen=True)
class FeatureSeries:
    """One cell-year of engineered inputs, rows = days, columns per FeatureSpec."""

    cell: CellId
    year: int
    matrix: Array

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got {m.ndim}-D")
        object.__setattr__(self, "matrix", m)

    @property
    def n_days(self) -> int:
        return self.matrix.shape[0]


def build_features(
    weather: WeatherSeries, year_index: int, spec: FeatureSpec
) -> FeatureSeries:
    """Assemble the per-day feature matrix for one year of one cell.

    Column order is [tmax, tmin, precip, tmax lags, tmin lags, precip lags,
    doy/365]. Lags that would reach before Jan 1 replicate the Jan 1 value,
    keeping each cell-year self-contained. Row d therefore never depends on
    weather after day d.
    """
    if spec.lags and spec.lags[-1] > DAYS_PER_YEAR - 1:
        raise ConfigError(
            f"lag {spec.lags[-1]} exceeds {DAYS_PER_YEAR - 1}, the longest lag a year supports"
        )
    ys = weather.year_slice(year_index)
    base = (weather.tmax[ys], weather.tmin[ys], weather.precip[ys])
    n = DAYS_PER_YEAR
    cols = [base[0], base[1], base[2]]
    day_index = np.arange(n)
    for var in base:
        for k in spec.lags:
            cols.append(var[np.maximum(day_index - k, 0)])
    if spec.include_doy:
        cols.append((day_index + 1) / DAYS_PER_YEAR)
    matrix = np.column_stack(cols)
    return FeatureSeries(
        cell=weather.cell, year=weather.start_year + year_index, matrix=matrix
    )


@dataclass(frozen=True)
class Scaler:
    """Per-feature z-score statistics plus the target normalization constant."""

    feature_mean: Array
    feature_sd: Array
    target_scale: float

    def __post_init__(self) -> None:
        mean = np.asarray(self.feature_mean, dtype=np.float64)
        sd = np.asarray(self.feature_sd, dtype=np.float64)
        if mean.shape != sd.shape or mean.ndim != 1:
            raise ShapeError("feature_mean and feature_sd must be 1-D and equal length")
        if np.any(sd <= 0):
            raise ConfigError("feature_sd must be positive (floor applied at fit time)")
        if self.target_scale <= 0:
            raise ConfigError("target_scale must be positive")
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_sd", sd)

    @property
    def n_features(self) -> int:
        return self.feature_mean.shape[0]


def fit_scaler(
    train: list[FeatureSeries], train_targets: list[YieldSeries]
) -> Scaler:
    """Population mean/sd over all training rows, sd floored at 1e-6;
    target scale is the training maximum TWSO floored at 1 kg/ha."""
    if not train or not train_targets:
        raise ConfigError("cannot fit a scaler on an empty training set")
    stacked = np.concatenate([f.matrix for f in train], axis=0)
    mean = stacked.mean(axis=0)
    sd = np.maximum(stacked.std(axis=0), SD_FLOOR)
    peak = max(float(t.twso.max()) for t in train_targets)
    return Scaler(
        feature_mean=mean,
        feature_sd=sd,
        target_scale=max(peak, TARGET_SCALE_FLOOR),
    )


def apply_scaler(x: FeatureSeries, s: Scaler) -> FeatureSeries:
    if x.matrix.shape[1] != s.n_features:
        raise ShapeError(
            f"feature count mismatch: matrix has {x.matrix.shape[1]}, scaler has {s.n_features}"
        )
    return FeatureSeries(
        cell=x.cell, year=x.year, matrix=(x.matrix - s.feature_mean) / s.feature_sd
    )


def scale_target(y: Array, s: Scaler) -> Array:
    return np.asarray(y, dtype=np.float64) / s.target_scale


def unscale_target(y: Array, s: Scaler) -> Array:
    return np.asarray(y, dtype=np.float64) * s.target_scale


@dataclass(frozen=True)
class BatchedSequence:
    """Non-overlapping day batches of one feature matrix.

    tensor is (B, batch_len, F); mask is False exactly on trailing padded
    slots, which replicate the final real day so the recurrence always sees
    valid weather.
    """

    tensor: Array
    mask: Array

    def __post_init__(self) -> None:
        t = np.asarray(self.tensor)
        m = np.asarray(self.mask, dtype=bool)
        if t.ndim != 3 or m.shape != t.shape[:2]:
            raise ShapeError(
                f"tensor must be (B, L, F) with mask (B, L); got {t.shape} and {m.shape}"
            )
        object.__setattr__(self, "tensor", t)
        object.__setattr__(self, "mask", m)

    @property
    def n_batches(self) -> int:
        return self.tensor.shape[0]

    @property
    def batch_len(self) -> int:
        return self.tensor.shape[1]

    @property
    def n_features(self) -> int:
        return self.tensor.shape[2]

    @property
    def n_days(self) -> int:
        return int(self.mask.sum())


def batch_sequence(x: FeatureSeries, spec: FeatureSpec) -> BatchedSequence:
    """Pack rows into ceil(n/batch_len) batches, padding the tail batch by
    replicating the last row. Concatenating unmasked rows reproduces the
    input exactly."""
    matrix = x.matrix
    n, f = matrix.shape
    length = spec.batch_len
    n_batches = -(-n // length)
    padded = n_batches * length
    if padded == n:
        tensor = matrix.reshape(n_batches, length, f).copy()
        mask = np.ones((n_batches, length), dtype=bool)
    else:
        tensor = np.concatenate(
            [matrix, np.repeat(matrix[-1:], padded - n, axis=0)], axis=0
        ).reshape(n_batches, length, f)
        mask = np.ones(padded, dtype=bool)
        mask[n:] = False
        mask = mask.reshape(n_batches, length)
    return BatchedSequence(tensor=tensor, mask=mask)


def unbatch(seq: BatchedSequence) -> Array:
    """Rows of the original matrix, masked padding removed."""
    flat = seq.tensor.reshape(-1, seq.n_features)
    return flat[seq.mask.reshape(-1)]
