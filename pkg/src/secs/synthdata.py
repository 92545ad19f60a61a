"""Synthetic multi-year weather and a deterministic toy water-limited crop
simulator that serves as emulation target and test oracle.

Weather cells draw from independent counter-based substreams keyed by
(seed, cell index), so output is identical no matter how generation is
scheduled. The crop model is a single-bucket degree-day scheme: it is meant
to be a well-defined target for the surrogate, not an agronomic model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .datamodel import DAYS_PER_YEAR, CellId, WeatherSeries, YieldSeries
from .errors import ConfigError

Array = np.ndarray

# Annual temperature cycle peaks mid-July (day 197) in the no-leap calendar.
_PEAK_DOY = 197


@dataclass(frozen=True)
class WeatherGenConfig:
    """Knobs for the stochastic weather generator.

    ``wet_day_prob`` is the stationary wet-day fraction and ``wetwet_prob``
    the wet-after-wet persistence; the dry-to-wet transition probability is
    derived from the two. ``lat_gradient`` cools cells linearly by index.
    """

    n_cells: int = 10
    n_years: int = 2
    seed: int = 0
    mean_annual_t: float = 12.0
    seasonal_amplitude: float = 10.0
    t_noise_sd: float = 2.5
    ar1_coeff: float = 0.7
    wet_day_prob: float = 0.35
    wetwet_prob: float = 0.6
    rain_shape: float = 0.8
    rain_scale: float = 6.0
    lat_gradient: float = -0.02
    diurnal_range: float = 10.0
    start_year: int = 2000

    def __post_init__(self) -> None:
        if self.n_cells < 1 or self.n_years < 1:
            raise ConfigError("n_cells and n_years must be >= 1")
        for name in ("wet_day_prob", "wetwet_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.ar1_coeff < 1.0:
            raise ConfigError(f"ar1_coeff must be in [0, 1), got {self.ar1_coeff}")
        if self.rain_shape <= 0 or self.rain_scale <= 0:
            raise ConfigError("rain_shape and rain_scale must be > 0")
        if self.t_noise_sd < 0:
            raise ConfigError("t_noise_sd must be >= 0")
        if self.diurnal_range < 0:
            raise ConfigError("diurnal_range must be >= 0")


@dataclass(frozen=True)
class ScenarioDelta:
    """Uniform warming (degC) plus a multiplicative precipitation factor."""

    warming: float = 0.0
    precip_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.precip_factor <= 0:
            raise ConfigError(f"precip_factor must be > 0, got {self.precip_factor}")


@dataclass(frozen=True)
class CropParams:
    """Parameters of the toy degree-day, single-bucket crop model."""

    sow_doy: int
    t_base: float
    t_opt: float
    t_max: float
    gdd_emerge: float
    gdd_anthesis: float
    gdd_maturity: float
    g_max: float          # kg/ha/day potential growth
    p_so: float           # fraction of growth partitioned to storage organs
    w_cap: float          # mm plant-available water capacity
    w_init_frac: float
    et_coeff: float       # mm per degC of daily mean temperature

    def __post_init__(self) -> None:
        if not 1 <= self.sow_doy <= DAYS_PER_YEAR:
            raise ConfigError(f"sow_doy must be in 1..{DAYS_PER_YEAR}")
        if not self.t_base < self.t_opt < self.t_max:
            raise ConfigError("temperature cardinal points must satisfy t_base < t_opt < t_max")
        if not 0 < self.gdd_emerge < self.gdd_anthesis < self.gdd_maturity:
            raise ConfigError("degree-day thresholds must be strictly increasing and positive")
        if min(self.g_max, self.et_coeff) < 0:
            raise ConfigError("rates must be nonnegative")
        if not 0 < self.p_so <= 1:
            raise ConfigError("p_so must be in (0, 1]")
        if self.w_cap <= 0:
            raise ConfigError("w_cap must be > 0")
        if not 0 <= self.w_init_frac <= 1:
            raise ConfigError("w_init_frac must be in [0, 1]")


# Stand-in presets; the numbers are plumbing defaults chosen to mature well
# before year end under the default weather, not calibrated crop parameters.
PRESETS: dict[str, CropParams] = {
    "maizelike": CropParams(
        sow_doy=110,
        t_base=8.0,
        t_opt=24.0,
        t_max=36.0,
        gdd_emerge=80.0,
        gdd_anthesis=750.0,
        gdd_maturity=1400.0,
        g_max=220.0,
        p_so=0.5,
        w_cap=120.0,
        w_init_frac=0.6,
        et_coeff=0.22,
    ),
    "barleylike": CropParams(
        sow_doy=70,
        t_base=3.0,
        t_opt=18.0,
        t_max=30.0,
        gdd_emerge=60.0,
        gdd_anthesis=550.0,
        gdd_maturity=1050.0,
        g_max=160.0,
        p_so=0.45,
        w_cap=100.0,
        w_init_frac=0.7,
        et_coeff=0.18,
    ),
}


def crop_preset(tag: str) -> CropParams:
    try:
        return PRESETS[tag]
    except KeyError:
        raise ConfigError(f"unknown crop preset {tag!r}; choose from {sorted(PRESETS)}") from None


def _cell_rng(seed: int, index: int) -> np.random.Generator:
    # Philox substream keyed by (seed, cell index): order-independent output.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def _cell_grid(n_cells: int) -> list[CellId]:
    side = max(1, math.isqrt(n_cells - 1) + 1)
    cells = []
    for i in range(n_cells):
        lat = 35.0 + 0.25 * (i // side)
        lon = -10.0 + 0.25 * (i % side)
        cells.append(CellId(f"c{i:04d}", lat, lon))
    return cells


def _occurrence(rng: np.random.Generator, n_days: int, pi_wet: float, p_ww: float) -> Array:
    u = rng.random(n_days)
    if pi_wet <= 0.0:
        return np.zeros(n_days, dtype=bool)
    if pi_wet >= 1.0:
        return np.ones(n_days, dtype=bool)
    # Dry-to-wet probability chosen so the chain's stationary wet fraction
    # equals pi_wet (clipped when the requested persistence is infeasible).
    p_dw = min(1.0, pi_wet * (1.0 - p_ww) / (1.0 - pi_wet))
    wet = np.empty(n_days, dtype=bool)
    wet[0] = u[0] < pi_wet
    for d in range(1, n_days):
        wet[d] = u[d] < (p_ww if wet[d - 1] else p_dw)
    return wet


def generate_weather(config: WeatherGenConfig) -> list[WeatherSeries]:
    """Generate per-cell daily weather series.

    Daily mean temperature = annual sinusoid + latitude-index offset + AR(1)
    noise with stationary standard deviation ``t_noise_sd`` and lag-1
    autocorrelation ``ar1_coeff``. tmax/tmin sit half the diurnal range above
    and below the mean. Precipitation uses a two-state occurrence chain with
    gamma-distributed wet-day amounts.
    """
    n_days = config.n_years * DAYS_PER_YEAR
    doy = np.tile(np.arange(1, DAYS_PER_YEAR + 1, dtype=np.float64), config.n_years)
    cycle = config.seasonal_amplitude * np.cos(
        2.0 * np.pi * (doy - _PEAK_DOY) / DAYS_PER_YEAR
    )
    half_range = 0.5 * config.diurnal_range
    rho = config.ar1_coeff

    out = []
    for i, cell in enumerate(_cell_grid(config.n_cells)):
        rng = _cell_rng(config.seed, i)
        eps = rng.standard_normal(n_days)
        # Stationary AR(1): start at N(0, sd^2), innovations scaled to keep
        # the marginal variance at sd^2 for every day.
        innov = config.t_noise_sd * math.sqrt(1.0 - rho * rho) * eps
        innov[0] = config.t_noise_sd * eps[0]
        noise = lfilter([1.0], [1.0, -rho], innov)
        tmean = config.mean_annual_t + config.lat_gradient * i + cycle + noise

        wet = _occurrence(rng, n_days, config.wet_day_prob, config.wetwet_prob)
        amounts = rng.gamma(config.rain_shape, config.rain_scale, n_days)
        precip = np.where(wet, amounts, 0.0)

        out.append(
            WeatherSeries(
                cell=cell,
                start_year=config.start_year,
                tmax=tmean + half_range,
                tmin=tmean - half_range,
                precip=precip,
            )
        )
    return out


def apply_scenario(weather: WeatherSeries, delta: ScenarioDelta) -> WeatherSeries:
    """Shift temperatures and scale precipitation; invariants are preserved."""
    return WeatherSeries(
        cell=weather.cell,
        start_year=weather.start_year,
        tmax=weather.tmax + delta.warming,
        tmin=weather.tmin + delta.warming,
        precip=weather.precip * delta.precip_factor,
    )


def simulate_crop(weather: WeatherSeries, crop: CropParams) -> YieldSeries:
    """Run the toy water-limited crop model over every year of a weather series.

    Per year, state starts at sowing with an empty degree-day counter and a
    partially filled bucket. Daily order is fixed: accumulate degree days,
    update the bucket (rain in, temperature-driven evapotranspiration
    throttled by the current fill, then clamp to [0, w_cap]), then grow.
    Growth is ``g_max`` scaled by the temperature ramp and the post-update
    bucket fill; storage organs accumulate ``p_so`` of growth only while
    degree days sit in [gdd_anthesis, gdd_maturity), and the series freezes
    for the rest of the year once maturity is crossed.

    Output is nonnegative, nondecreasing within each year, and fully
    deterministic.
    """
    tmean_all = 0.5 * (weather.tmax + weather.tmin)
    twso = np.zeros(weather.n_days, dtype=np.float64)

    for y in range(weather.n_years):
        ys = weather.year_slice(y)
        tmean = tmean_all[ys]
        precip = weather.precip[ys]

        # Degree days and the temperature ramp have no feedback from water,
        # so both vectorize over the season.
        season = slice(crop.sow_doy - 1, DAYS_PER_YEAR)
        gdd = np.cumsum(np.maximum(0.0, tmean[season] - crop.t_base))
        f_t = np.where(
            tmean[season] <= crop.t_opt,
            (tmean[season] - crop.t_base) / (crop.t_opt - crop.t_base),
            (crop.t_max - tmean[season]) / (crop.t_max - crop.t_opt),
        )
        f_t = np.clip(f_t, 0.0, 1.0)
        demand = crop.et_coeff * np.maximum(0.0, tmean[season])

        w = crop.w_init_frac * crop.w_cap
        total = 0.0
        values = twso[ys.start + crop.sow_doy - 1 : ys.stop]
        rain = precip[season]
        for k in range(gdd.shape[0]):
            w = min(max(w + rain[k] - demand[k] * (w / crop.w_cap), 0.0), crop.w_cap)
            g = gdd[k]
            if crop.gdd_anthesis <= g < crop.gdd_maturity:
                total += crop.p_so * crop.g_max * f_t[k] * (w / crop.w_cap)
            values[k] = total

    return YieldSeries(cell=weather.cell, start_year=weather.start_year, twso=twso)


def with_sowing(crop: CropParams, sow_doy: int) -> CropParams:
    """Preset variant with a shifted sowing date."""
    return replace(crop, sow_doy=sow_doy)
