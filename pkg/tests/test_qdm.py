import numpy as np
import pytest

from secs.datamodel import CellId, WeatherSeries
from secs.errors import AlignmentError, ConfigError, SampleSizeError
from secs.qdm import (
    QdmMap,
    adjust_weather,
    apply_qdm,
    fit_qdm,
    splice_year,
)


def gamma_sample(seed, n=2000, shift=0.0):
    return np.random.default_rng(seed).gamma(2.0, 3.0, n) + shift


class TestFitQdm:
    def test_identity_tables(self):
        s = gamma_sample(0)
        m = fit_qdm(s, s.copy(), "additive")
        np.testing.assert_array_equal(m.ref_quantiles, m.hist_quantiles)

    def test_shift_commutes(self):
        hist = gamma_sample(1)
        m = fit_qdm(hist + 2.0, hist, "additive")
        np.testing.assert_allclose(m.ref_quantiles - m.hist_quantiles, 2.0, atol=1e-12)

    def test_scale_commutes(self):
        hist = gamma_sample(2) + 1.0
        m = fit_qdm(2.0 * hist, hist, "multiplicative")
        np.testing.assert_allclose(m.ref_quantiles / m.hist_quantiles, 2.0, rtol=1e-12)

    def test_sample_size_guard(self):
        with pytest.raises(SampleSizeError):
            fit_qdm(np.arange(50.0), np.arange(200.0), n_quantiles=99)

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            fit_qdm(gamma_sample(0), gamma_sample(1), kind="quadratic")


class TestApplyQdm:
    def test_identity_additive(self):
        s = gamma_sample(3)
        m = fit_qdm(s, s.copy(), "additive")
        projected = gamma_sample(4)
        np.testing.assert_allclose(apply_qdm(m, projected), projected, atol=1e-6)

    def test_identity_multiplicative_above_trace(self):
        s = gamma_sample(5, shift=1.0)
        m = fit_qdm(s, s.copy(), "multiplicative")
        projected = gamma_sample(6, shift=1.0)
        np.testing.assert_allclose(apply_qdm(m, projected), projected, rtol=1e-6)

    def test_constant_offset(self):
        hist = gamma_sample(7)
        m = fit_qdm(hist + 2.0, hist, "additive")
        projected = gamma_sample(8)
        np.testing.assert_allclose(apply_qdm(m, projected), projected + 2.0, atol=1e-9)

    def test_change_preservation_multiplicative(self):
        # projected carries a known 1.3x change over historical; with
        # reference == historical the adjustment must keep that change at
        # interior quantiles within 1%.
        hist = gamma_sample(9, n=5000, shift=0.5)
        projected = 1.3 * hist
        m = fit_qdm(hist, hist.copy(), "multiplicative")
        adjusted = apply_qdm(m, projected)
        probs = np.linspace(0.05, 0.95, 19)
        got = np.quantile(adjusted, probs)
        want = 1.3 * np.quantile(hist, probs)
        np.testing.assert_allclose(got, want, rtol=0.01)

    def test_monotone_and_rank_preserving(self):
        rng = np.random.default_rng(10)
        ref = rng.gamma(2.0, 4.0, 3000)
        hist = rng.gamma(2.2, 3.5, 3000)
        projected = rng.gamma(2.4, 3.8, 3000)
        for kind in ("additive", "multiplicative"):
            m = fit_qdm(ref, hist, kind)
            adjusted = apply_qdm(m, projected)
            order = np.argsort(projected, kind="stable")
            assert np.all(np.diff(adjusted[order]) >= -1e-12)

    def test_multiplicative_stays_nonnegative(self):
        rng = np.random.default_rng(11)
        ref = rng.gamma(0.6, 5.0, 2000)
        hist = rng.gamma(0.9, 4.0, 2000)
        m = fit_qdm(ref, hist, "multiplicative")
        adjusted = apply_qdm(m, rng.gamma(0.7, 4.0, 500))
        assert np.all(adjusted >= 0.0)

    def test_map_validation(self):
        with pytest.raises(ConfigError):
            QdmMap(
                probs=np.array([0.5, 0.2]),
                ref_quantiles=np.array([1.0, 2.0]),
                hist_quantiles=np.array([1.0, 2.0]),
            )


def year_weather(cell_id="c", fill_tmax=20.0, fill_tmin=10.0, fill_precip=2.0):
    return WeatherSeries(
        cell=CellId(cell_id, 45, 8),
        start_year=2020,
        tmax=np.full(365, fill_tmax),
        tmin=np.full(365, fill_tmin),
        precip=np.full(365, fill_precip),
    )


class TestSpliceYear:
    def test_identity(self):
        obs = year_weather()
        out = splice_year(obs, obs, 152)
        np.testing.assert_array_equal(out.tmax, obs.tmax)

    def test_cut_boundary(self):
        obs = year_weather(fill_tmax=20.0)
        fc = year_weather(fill_tmax=30.0, fill_tmin=15.0)
        out = splice_year(obs, fc, 152)
        assert out.tmax[150] == 20.0  # day 151, observed
        assert out.tmax[151] == 30.0  # day 152, forecast
        assert out.tmin[151] == 15.0

    def test_cut_one_all_forecast(self):
        obs = year_weather(fill_tmax=20.0)
        fc = year_weather(fill_tmax=30.0)
        out = splice_year(obs, fc, 1)
        np.testing.assert_array_equal(out.tmax, fc.tmax)

    def test_cell_mismatch(self):
        with pytest.raises(AlignmentError):
            splice_year(year_weather("a"), year_weather("b"))


class TestAdjustWeather:
    def _collection(self, seed, warm=0.0, wet=1.0):
        rng = np.random.default_rng(seed)
        n = 365 * 3
        tmin = rng.normal(8, 4, n) + warm
        return [
            WeatherSeries(
                cell=CellId("c0", 45, 8),
                start_year=2000,
                tmax=tmin + rng.uniform(4, 12, n),
                tmin=tmin,
                precip=rng.gamma(0.8, 4.0, n) * wet,
            )
        ]

    def test_identity_collections(self):
        ref = self._collection(0)
        out, repaired = adjust_weather(ref, ref, ref)
        np.testing.assert_allclose(out[0].tmax, ref[0].tmax, atol=1e-9)
        # multiplicative identity is exact only above the trace floor;
        # below it values shrink by at most the trace itself
        np.testing.assert_allclose(out[0].precip, ref[0].precip, atol=0.05)
        above = ref[0].precip > 1.0
        np.testing.assert_allclose(out[0].precip[above], ref[0].precip[above], rtol=1e-9)
        assert repaired == 0

    def test_warm_bias_removed(self):
        ref = self._collection(1)
        hist = self._collection(1, warm=3.0)  # model runs 3 degrees warm
        proj = self._collection(2, warm=3.0)
        out, _ = adjust_weather(ref, hist, proj)
        assert abs(out[0].tmax.mean() - (proj[0].tmax.mean() - 3.0)) < 0.3

    def test_monthly_mode_runs(self):
        ref = self._collection(3)
        out, _ = adjust_weather(ref, ref, ref, monthly=True, n_quantiles=20)
        np.testing.assert_allclose(out[0].tmin, ref[0].tmin, atol=1e-9)

    def test_missing_cell(self):
        ref = self._collection(0)
        proj = [
            WeatherSeries(
                cell=CellId("other", 45, 8),
                start_year=2000,
                tmax=np.full(365, 20.0),
                tmin=np.full(365, 10.0),
                precip=np.zeros(365),
            )
        ]
        with pytest.raises(AlignmentError):
            adjust_weather(ref, ref, proj)
