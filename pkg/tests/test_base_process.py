import numpy as np
import pytest
from scipy.stats import kstest

from mare_forge.base_process import (
    ArmaModel,
    fit_arma,
    latent_gaussian_series,
    simulate_base_process,
    stationary_variance,
)
from conftest import series_from_values


def ar1(n, coeff, seed, sigma=None):
    rng = np.random.default_rng(seed)
    if sigma is None:
        sigma = np.sqrt(1.0 - coeff**2)  # unit stationary variance
    z = np.empty(n)
    z[0] = rng.normal(0, 1)
    eta = rng.normal(0, sigma, size=n)
    for i in range(1, n):
        z[i] = coeff * z[i - 1] + eta[i]
    return z


class TestStationaryVariance:
    def test_ar1(self):
        m = ArmaModel(p=1, q=0, a=(0.8,), b=(), sigma_delta=0.6, bic=0.0)
        assert stationary_variance(m) == pytest.approx(1.0, rel=1e-12)

    def test_white_noise(self):
        m = ArmaModel(p=0, q=0, a=(), b=(), sigma_delta=1.0, bic=0.0)
        assert stationary_variance(m) == 1.0

    def test_arma11_vs_long_simulation(self):
        m = ArmaModel(p=1, q=1, a=(0.5,), b=(0.3,), sigma_delta=1.0, bic=0.0)
        v = stationary_variance(m)
        # closed form for ARMA(1,1): (1 + b^2 + 2ab) / (1 - a^2)
        assert v == pytest.approx((1 + 0.09 + 0.3) / 0.75, rel=1e-12)
        z = simulate_base_process(m, 1_000_000, seed=17)
        assert v == pytest.approx(float(np.var(z)), rel=0.01)

    def test_non_stationary_rejected(self):
        m = ArmaModel(p=1, q=0, a=(1.01,), b=(), sigma_delta=1.0, bic=0.0)
        with pytest.raises(ValueError, match="non-stationary"):
            stationary_variance(m)


class TestSimulate:
    def test_white_noise_path(self):
        m = ArmaModel(p=0, q=0, a=(), b=(), sigma_delta=1.0, bic=0.0)
        z = simulate_base_process(m, 200_000, seed=3)
        assert np.mean(z) == pytest.approx(0.0, abs=0.01)
        assert np.std(z) == pytest.approx(1.0, abs=0.01)

    def test_deterministic_per_seed(self):
        m = ArmaModel(p=2, q=1, a=(0.5, 0.2), b=(0.4,), sigma_delta=0.8, bic=0.0)
        z1 = simulate_base_process(m, 500, seed=9)
        z2 = simulate_base_process(m, 500, seed=9)
        np.testing.assert_array_equal(z1, z2)
        assert not np.array_equal(z1, simulate_base_process(m, 500, seed=10))

    def test_ar1_autocorrelation(self):
        m = ArmaModel(p=1, q=0, a=(0.8,), b=(), sigma_delta=0.6, bic=0.0)
        z = simulate_base_process(m, 100_000, seed=5)
        zc = z - z.mean()
        rho1 = float(np.sum(zc[1:] * zc[:-1]) / np.sum(zc**2))
        assert 0.75 <= rho1 <= 0.85

    def test_length_validation(self):
        m = ArmaModel(p=0, q=0, a=(), b=(), sigma_delta=1.0, bic=0.0)
        with pytest.raises(ValueError):
            simulate_base_process(m, 0, seed=1)


class TestFitArma:
    def test_white_noise_selects_empty_model(self):
        rng = np.random.default_rng(19)
        z = rng.normal(0, 1, size=5000)
        m = fit_arma(z, max_order=(2, 2))
        assert (m.p, m.q) == (0, 0)
        assert m.sigma_delta == pytest.approx(1.0, abs=0.05)

    def test_ar1_recovery(self):
        z = ar1(5000, 0.8, seed=23)
        m = fit_arma(z, max_order=(2, 2))
        assert m.p >= 1
        assert 0.75 <= m.a[0] <= 0.85
        assert stationary_variance(m) == pytest.approx(1.0, abs=1e-3)

    def test_ma1_beats_white_noise(self):
        rng = np.random.default_rng(29)
        eta = rng.normal(0, 1, size=5000)
        z = eta[1:] + 0.5 * eta[:-1]
        m = fit_arma(z, max_order=(2, 2))
        bics = {(p, q): v for p, q, v in m.grid_bics}
        assert m.q >= 1 or m.p >= 1
        assert m.bic < bics[(0, 0)]

    def test_bic_is_grid_minimum(self):
        z = ar1(3000, 0.6, seed=31)
        m = fit_arma(z, max_order=(2, 2))
        assert m.bic == pytest.approx(min(v for _, _, v in m.grid_bics))

    def test_calibrated_path_has_unit_std(self):
        # simulation-based cross-check of the analytic variance calibration
        z = ar1(4000, 0.7, seed=37)
        m = fit_arma(z, max_order=(1, 1))
        path = simulate_base_process(m, 500_000, seed=41)
        assert float(np.std(path)) == pytest.approx(1.0, abs=0.02)

    def test_too_short_series(self):
        with pytest.raises(ValueError, match="too short"):
            fit_arma(np.zeros(50), max_order=(5, 5))

    def test_json_round_trip(self):
        m = ArmaModel(p=1, q=1, a=(0.5,), b=(0.3,), sigma_delta=0.9, bic=-12.5)
        m2 = ArmaModel.from_json(m.to_json())
        assert m2 == m


class TestLatentSeries:
    def test_median_error_maps_to_zero(self):
        from mare_forge.conditional_fit import FittedModel

        # symmetric law on [-1, 1]: a zero error sits exactly at the median
        model = FittedModel(
            cap=100.0, a=0.05, anchors=np.array([50.0]), centers=np.array([50.0]),
            alpha=np.array([2.0]), beta=np.array([2.0]), l=np.array([-1.0]), s=np.array([2.0]),
        )
        x = np.full(64, 50.0)
        series = series_from_values(x, x, cap=100.0)  # errors all zero
        z = latent_gaussian_series(series, model)
        np.testing.assert_allclose(z, 0.0, atol=1e-12)

    def test_support_boundary_clamped_finite(self):
        from mare_forge.conditional_fit import FittedModel

        model = FittedModel(
            cap=100.0, a=0.05, anchors=np.array([50.0]), centers=np.array([50.0]),
            alpha=np.array([2.0]), beta=np.array([2.0]), l=np.array([-1.0]), s=np.array([2.0]),
        )
        x = np.full(64, 50.0)
        y = x + np.full(64, -1.0)  # error pinned at the support minimum
        series = series_from_values(x, y, cap=100.0)
        z = latent_gaussian_series(series, model)
        assert np.all(np.isfinite(z))
        from scipy.special import ndtri

        np.testing.assert_allclose(z, ndtri(1.0 / (2 * 64)), atol=1e-12)

    def test_boundary_errors_stay_finite(self, ar1_series, ar1_model):
        z = latent_gaussian_series(ar1_series, ar1_model)
        assert np.all(np.isfinite(z))
        bound = abs(float(np.quantile(z, 0.0001)))
        assert bound < 10.0

    def test_marginal_is_standard_normal(self, ar1_model):
        # draw iid errors from the fitted conditionals; the transform must
        # send them to N(0,1) (Kolmogorov-Smirnov at the 1% level)
        rng = np.random.default_rng(43)
        n = 10_000
        xs = rng.choice(ar1_model.anchors, size=n)
        idx = ar1_model.lookup_index(xs)
        from scipy.stats import beta as beta_dist

        u = rng.random(n)
        eps = ar1_model.l[idx] + ar1_model.s[idx] * beta_dist.ppf(
            u, ar1_model.alpha[idx], ar1_model.beta[idx]
        )
        from conftest import series_from_values

        order = np.argsort(np.arange(n))  # keep time order as drawn
        series = series_from_values(xs, np.clip(xs + eps, 0, ar1_model.cap), cap=ar1_model.cap)
        z = latent_gaussian_series(series, ar1_model)
        stat = kstest(z, "norm")
        assert stat.pvalue > 0.01
