import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secs.datamodel import DAYS_PER_YEAR, CellId, WeatherSeries
from secs.errors import ConfigError
from secs.synthdata import (
    CropParams,
    PRESETS,
    ScenarioDelta,
    WeatherGenConfig,
    apply_scenario,
    crop_preset,
    generate_weather,
    simulate_crop,
)


class TestGenerateWeather:
    def test_noise_free_degenerate(self):
        cfg = WeatherGenConfig(n_cells=1, n_years=1, t_noise_sd=0.0, wet_day_prob=0.0)
        (ws,) = generate_weather(cfg)
        assert np.all(ws.precip == 0)
        np.testing.assert_allclose(ws.tmax - ws.tmin, cfg.diurnal_range)
        doy = np.arange(1, 366)
        expected = cfg.mean_annual_t + cfg.seasonal_amplitude * np.cos(
            2 * np.pi * (doy - 197) / 365
        )
        np.testing.assert_allclose(0.5 * (ws.tmax + ws.tmin), expected, atol=1e-12)

    def test_determinism(self):
        cfg = WeatherGenConfig(n_cells=4, n_years=2, seed=99)
        a = generate_weather(cfg)
        b = generate_weather(cfg)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.tmax, y.tmax)
            np.testing.assert_array_equal(x.tmin, y.tmin)
            np.testing.assert_array_equal(x.precip, y.precip)

    def test_substreams_independent_of_cell_count(self):
        # Per-cell streams are keyed by (seed, index): the first cells do not
        # change when more cells are requested.
        few = generate_weather(WeatherGenConfig(n_cells=3, n_years=1, seed=5))
        many = generate_weather(WeatherGenConfig(n_cells=6, n_years=1, seed=5))
        for x, y in zip(few, many[:3]):
            np.testing.assert_array_equal(x.precip, y.precip)
            np.testing.assert_array_equal(x.tmax, y.tmax)

    def test_gamma_mean_monte_carlo(self):
        # All-wet chain: mean daily precip approaches shape * scale = 6 mm.
        years = 274  # 100010 days
        cfg = WeatherGenConfig(
            n_cells=1, n_years=years, seed=7, wet_day_prob=1.0, rain_shape=2.0, rain_scale=3.0
        )
        (ws,) = generate_weather(cfg)
        assert ws.n_days >= 10**5
        assert abs(ws.precip.mean() - 6.0) / 6.0 < 0.05

    def test_ar1_autocorrelation(self):
        cfg = WeatherGenConfig(n_cells=1, n_years=30, seed=3, ar1_coeff=0.7, wet_day_prob=0.0)
        (ws,) = generate_weather(cfg)
        doy = np.tile(np.arange(1, 366), cfg.n_years)
        clim = cfg.mean_annual_t + cfg.seasonal_amplitude * np.cos(
            2 * np.pi * (doy - 197) / 365
        )
        noise = 0.5 * (ws.tmax + ws.tmin) - clim
        r = np.corrcoef(noise[:-1], noise[1:])[0, 1]
        assert abs(r - 0.7) < 0.05

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            WeatherGenConfig(wet_day_prob=1.5)
        with pytest.raises(ConfigError):
            WeatherGenConfig(rain_shape=0.0)
        with pytest.raises(ConfigError):
            WeatherGenConfig(ar1_coeff=1.0)


class TestApplyScenario:
    def test_identity(self, flat_weather):
        out = apply_scenario(flat_weather, ScenarioDelta())
        np.testing.assert_array_equal(out.tmax, flat_weather.tmax)
        np.testing.assert_array_equal(out.precip, flat_weather.precip)

    def test_warming_shifts_both(self, flat_weather):
        out = apply_scenario(flat_weather, ScenarioDelta(warming=2.0))
        np.testing.assert_allclose(out.tmax, flat_weather.tmax + 2.0)
        np.testing.assert_allclose(out.tmin, flat_weather.tmin + 2.0)

    def test_precip_halved(self, flat_weather):
        out = apply_scenario(flat_weather, ScenarioDelta(precip_factor=0.5))
        np.testing.assert_allclose(out.precip, flat_weather.precip * 0.5)

    def test_zero_factor_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioDelta(precip_factor=0.0)


def constant_weather(tmean, precip, years=1, diurnal=10.0):
    n = years * DAYS_PER_YEAR
    return WeatherSeries(
        cell=CellId("c", 45, 8),
        start_year=2000,
        tmax=np.full(n, tmean + diurnal / 2),
        tmin=np.full(n, tmean - diurnal / 2),
        precip=np.full(n, float(precip)),
    )


class TestSimulateCrop:
    def test_cold_year_zero(self):
        crop = crop_preset("maizelike")
        ws = constant_weather(crop.t_base - 1.0, precip=5.0)
        ys = simulate_crop(ws, crop)
        assert np.all(ys.twso == 0)

    def test_dry_year_empty_bucket_zero(self):
        crop = CropParams(
            sow_doy=100, t_base=8, t_opt=24, t_max=36,
            gdd_emerge=80, gdd_anthesis=750, gdd_maturity=1400,
            g_max=220, p_so=0.5, w_cap=120, w_init_frac=0.0, et_coeff=0.22,
        )
        ws = constant_weather(24.0, precip=0.0)
        ys = simulate_crop(ws, crop)
        assert np.all(ys.twso == 0)

    def test_constant_forcing_closed_form(self):
        crop = CropParams(
            sow_doy=110, t_base=8, t_opt=24, t_max=36,
            gdd_emerge=80, gdd_anthesis=750, gdd_maturity=1400,
            g_max=220, p_so=0.5, w_cap=120, w_init_frac=1.0, et_coeff=0.22,
        )
        demand = crop.et_coeff * crop.t_opt
        ws = constant_weather(crop.t_opt, precip=demand + 1.0)
        ys = simulate_crop(ws, crop)
        g = crop.t_opt - crop.t_base  # 16 degC-days per day
        ks = np.arange(1, DAYS_PER_YEAR - crop.sow_doy + 2)
        growth_days = int(np.sum((ks * g >= crop.gdd_anthesis) & (ks * g < crop.gdd_maturity)))
        expected = crop.p_so * crop.g_max * growth_days
        assert growth_days == 41
        np.testing.assert_allclose(ys.twso[-1], expected, rtol=1e-12)
        # zero before anthesis crossing
        first_growth_day = crop.sow_doy - 1 + int(np.ceil(crop.gdd_anthesis / g)) - 1
        assert np.all(ys.twso[:first_growth_day] == 0)
        assert ys.twso[first_growth_day] > 0

    def test_multi_year_independence(self):
        crop = crop_preset("maizelike")
        one = constant_weather(20.0, precip=4.0, years=1)
        two = constant_weather(20.0, precip=4.0, years=2)
        y1 = simulate_crop(one, crop)
        y2 = simulate_crop(two, crop)
        np.testing.assert_array_equal(y2.twso[:365], y1.twso)
        np.testing.assert_array_equal(y2.twso[365:], y1.twso)

    def test_presets_exist(self):
        assert PRESETS["maizelike"].sow_doy == 110
        assert PRESETS["barleylike"].sow_doy == 70
        with pytest.raises(ConfigError):
            crop_preset("wheatlike")


def random_crop(rng) -> CropParams:
    t_base = rng.uniform(0, 10)
    t_opt = t_base + rng.uniform(2, 15)
    emerge = rng.uniform(10, 100)
    anthesis = emerge + rng.uniform(50, 700)
    return CropParams(
        sow_doy=int(rng.integers(1, 200)),
        t_base=t_base,
        t_opt=t_opt,
        t_max=t_opt + rng.uniform(2, 15),
        gdd_emerge=emerge,
        gdd_anthesis=anthesis,
        gdd_maturity=anthesis + rng.uniform(100, 800),
        g_max=rng.uniform(0, 300),
        p_so=rng.uniform(0.05, 1.0),
        w_cap=rng.uniform(50, 200),
        w_init_frac=rng.uniform(0, 1),
        et_coeff=rng.uniform(0.05, 0.5),
    )


def random_weather(rng, years=1) -> WeatherSeries:
    n = years * DAYS_PER_YEAR
    tmin = rng.uniform(-10, 25, n)
    tmax = tmin + rng.uniform(0, 15, n)
    precip = rng.gamma(0.7, 4.0, n)
    return WeatherSeries(
        cell=CellId("c", 45, 8), start_year=2000, tmax=tmax, tmin=tmin, precip=precip
    )


class TestCropProperties:
    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_output_valid_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        crop = random_crop(rng)
        ws = random_weather(rng)
        ys = simulate_crop(ws, crop)
        assert np.all(ys.twso >= 0)
        ys.check_monotone()

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_frozen_after_maturity(self, seed):
        rng = np.random.default_rng(seed)
        crop = random_crop(rng)
        ws = random_weather(rng)
        ys = simulate_crop(ws, crop)
        tmean = 0.5 * (ws.tmax + ws.tmin)[crop.sow_doy - 1 :]
        gdd = np.cumsum(np.maximum(0.0, tmean - crop.t_base))
        crossed = np.nonzero(gdd >= crop.gdd_maturity)[0]
        if crossed.size:
            day = crop.sow_doy - 1 + int(crossed[0])
            tail = ys.twso[day:]
            assert np.all(tail == tail[0])

    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_precip_scaling_monotone(self, seed, k):
        rng = np.random.default_rng(seed)
        crop = random_crop(rng)
        ws = random_weather(rng)
        scaled = WeatherSeries(
            cell=ws.cell,
            start_year=ws.start_year,
            tmax=ws.tmax,
            tmin=ws.tmin,
            precip=ws.precip * k,
        )
        full = simulate_crop(ws, crop).twso[-1]
        less = simulate_crop(scaled, crop).twso[-1]
        assert less <= full + 1e-9
