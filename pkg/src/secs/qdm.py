"""Univariate quantile delta mapping for ensemble climate inputs, plus
calendar splicing of observed with forecast weather.

QDM maps each projected value through the reference/historical quantile
relationship at that value's own quantile, preserving the projection's
simulated change: additively for temperature-like variables,
multiplicatively (with a trace floor on the denominator) for
precipitation-like ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datamodel import DAYS_PER_YEAR, WeatherSeries, month_day_from_doy
from .errors import AlignmentError, ConfigError, DataDomainError, SampleSizeError

Array = np.ndarray

KINDS = ("additive", "multiplicative")

# Quantile lookups are clamped to this probability band to avoid
# extrapolating beyond the fitted tables.
TAU_MIN = 0.01
TAU_MAX = 0.99

DEFAULT_TRACE = 0.05  # mm, floor for multiplicative denominators
DEFAULT_CUT_DOY = 152  # June 1 in the no-leap calendar


@dataclass(frozen=True)
class QdmMap:
    """Empirical quantile tables of the reference and historical samples on
    a shared probability grid."""

    probs: Array
    ref_quantiles: Array
    hist_quantiles: Array
    kind: str = "additive"
    trace: float = DEFAULT_TRACE

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        ref = np.asarray(self.ref_quantiles, dtype=np.float64)
        hist = np.asarray(self.hist_quantiles, dtype=np.float64)
        if not (probs.shape == ref.shape == hist.shape) or probs.ndim != 1:
            raise ConfigError("probability grid and quantile tables must be 1-D, equal length")
        if np.any(np.diff(probs) <= 0):
            raise ConfigError("probability grid must be strictly increasing")
        if np.any(np.diff(ref) < 0) or np.any(np.diff(hist) < 0):
            raise ConfigError("quantile tables must be nondecreasing")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.trace <= 0:
            raise ConfigError(f"trace must be > 0, got {self.trace}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "ref_quantiles", ref)
        object.__setattr__(self, "hist_quantiles", hist)


def fit_qdm(
    reference, historical, kind: str = "additive", n_quantiles: int = 99
) -> QdmMap:
    """Empirical quantiles (linear interpolation between order statistics)
    of both sample sets on an evenly spaced 1%..99% style grid."""
    if n_quantiles < 2:
        raise ConfigError(f"n_quantiles must be >= 2, got {n_quantiles}")
    ref = np.asarray(reference, dtype=np.float64).reshape(-1)
    hist = np.asarray(historical, dtype=np.float64).reshape(-1)
    for name, arr in (("reference", ref), ("historical", hist)):
        if arr.size < n_quantiles:
            raise SampleSizeError(
                f"{name} has {arr.size} samples, need at least {n_quantiles}"
            )
    probs = np.linspace(TAU_MIN, TAU_MAX, n_quantiles)
    return QdmMap(
        probs=probs,
        ref_quantiles=np.quantile(ref, probs, method="linear"),
        hist_quantiles=np.quantile(hist, probs, method="linear"),
        kind=kind,
    )


def apply_qdm(qmap: QdmMap, projected) -> Array:
    """Adjust a projected sample through the fitted map.

    Each value's quantile tau comes from the projected sample's empirical
    CDF, interpolated at the map's own probability resolution (the full-rank
    empirical CDF would let order-statistic noise in the delta tables break
    monotonicity) and clamped to [0.01, 0.99]. The value is then shifted by
    ref(tau) - hist(tau) (additive) or scaled by ref(tau)/max(hist(tau),
    trace) (multiplicative, clamped at zero); outside the clamp band the
    correction is constant, so the tails translate rigidly.
    """
    x = np.asarray(projected, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DataDomainError("projected sample is empty")
    proj_quantiles = np.quantile(x, qmap.probs, method="linear")
    if proj_quantiles[0] == proj_quantiles[-1]:
        tau = np.full(x.shape, 0.5)
    else:
        tau = np.interp(x, proj_quantiles, qmap.probs)
    tau = np.clip(tau, TAU_MIN, TAU_MAX)
    ref_at = np.interp(tau, qmap.probs, qmap.ref_quantiles)
    hist_at = np.interp(tau, qmap.probs, qmap.hist_quantiles)
    if qmap.kind == "additive":
        return ref_at + (x - hist_at)
    scale = ref_at / np.maximum(hist_at, qmap.trace)
    return np.maximum(x * scale, 0.0)


def splice_year(
    observed: WeatherSeries, forecast: WeatherSeries, cut_doy: int = DEFAULT_CUT_DOY
) -> WeatherSeries:
    """One spliced year: days 1..cut_doy-1 observed, cut_doy..365 forecast."""
    if observed.cell.id != forecast.cell.id:
        raise AlignmentError(
            f"cannot splice different cells: {observed.cell.id} vs {forecast.cell.id}"
        )
    if observed.n_years != 1 or forecast.n_years != 1:
        raise AlignmentError("splice_year takes exactly one year from each source")
    if not 1 <= cut_doy <= DAYS_PER_YEAR + 1:
        raise ConfigError(f"cut_doy must be in 1..{DAYS_PER_YEAR + 1}, got {cut_doy}")
    k = cut_doy - 1

    def join(a: Array, b: Array) -> Array:
        return np.concatenate([a[:k], b[k:]])

    return WeatherSeries(
        cell=observed.cell,
        start_year=observed.start_year,
        tmax=join(observed.tmax, forecast.tmax),
        tmin=join(observed.tmin, forecast.tmin),
        precip=join(observed.precip, forecast.precip),
    )


# ---------------------------------------------------------------------------
# Whole-table adjustment (the biasadjust pipeline)
# ---------------------------------------------------------------------------

DEFAULT_KINDS = {"tmax": "additive", "tmin": "additive", "precip": "multiplicative"}


def _months_of_days(n_days: int) -> Array:
    months = np.empty(DAYS_PER_YEAR, dtype=np.int64)
    for doy in range(1, DAYS_PER_YEAR + 1):
        months[doy - 1] = month_day_from_doy(doy)[0]
    return np.tile(months, n_days // DAYS_PER_YEAR)


def adjust_weather(
    reference: list[WeatherSeries],
    historical: list[WeatherSeries],
    projected: list[WeatherSeries],
    kinds: dict[str, str] | None = None,
    n_quantiles: int = 99,
    monthly: bool = False,
    trace: float = DEFAULT_TRACE,
) -> tuple[list[WeatherSeries], int]:
    """Per-cell, per-variable QDM of a projected weather collection.

    When adjusted tmax dips below adjusted tmin (the two are corrected
    independently), tmin is floored at tmax to keep the series valid; the
    count of repaired days is returned for the run manifest.
    """
    kinds = {**DEFAULT_KINDS, **(kinds or {})}
    unknown = set(kinds) - set(DEFAULT_KINDS)
    if unknown:
        raise ConfigError(f"unknown variables in kind map: {sorted(unknown)}")
    ref_map = {w.cell.id: w for w in reference}
    hist_map = {w.cell.id: w for w in historical}
    repaired = 0
    out = []
    for proj in projected:
        cid = proj.cell.id
        if cid not in ref_map or cid not in hist_map:
            raise AlignmentError(f"cell {cid} missing from reference or historical data")
        ref_w, hist_w = ref_map[cid], hist_map[cid]
        adjusted: dict[str, Array] = {}
        for var in ("tmax", "tmin", "precip"):
            r = getattr(ref_w, var)
            h = getattr(hist_w, var)
            p = getattr(proj, var)
            if monthly:
                result = np.empty_like(p)
                rm = _months_of_days(r.size)
                hm = _months_of_days(h.size)
                pm = _months_of_days(p.size)
                for month in range(1, 13):
                    qmap = fit_qdm(r[rm == month], h[hm == month], kinds[var], n_quantiles)
                    qmap = replace(qmap, trace=trace)
                    result[pm == month] = apply_qdm(qmap, p[pm == month])
            else:
                qmap = replace(fit_qdm(r, h, kinds[var], n_quantiles), trace=trace)
                result = apply_qdm(qmap, p)
            adjusted[var] = result
        bad = adjusted["tmin"] > adjusted["tmax"]
        repaired += int(bad.sum())
        adjusted["tmin"] = np.where(bad, adjusted["tmax"], adjusted["tmin"])
        out.append(
            WeatherSeries(
                cell=proj.cell,
                start_year=proj.start_year,
                tmax=adjusted["tmax"],
                tmin=adjusted["tmin"],
                precip=adjusted["precip"],
            )
        )
    return out, repaired
