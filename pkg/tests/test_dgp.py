"""Generator contracts: exact decompositions, moments, gates, reproducibility."""
import numpy as np
import pytest

from cvbias import (
    ConfigError,
    DgpSpec,
    ErrorSpec,
    MeanSpec,
    SizeError,
    StationarityError,
    sample_error_process,
    simulate,
)


def ar1_spec(rho, sigma2=1.0, burn_in=1000, zero_noise=False):
    errors = ErrorSpec(kind="iid_gaussian", sigma2=sigma2, zero_noise=zero_noise)
    return DgpSpec(mean_kind=MeanSpec.ar1(rho), errors=errors, burn_in=burn_in)


class TestErrorSpec:
    def test_gaussian_rejects_bad_sigma2(self):
        with pytest.raises(ConfigError):
            ErrorSpec(kind="iid_gaussian", sigma2=0.0)
        with pytest.raises(ConfigError):
            ErrorSpec(kind="iid_gaussian", sigma2=-1.0)

    def test_arch_requires_consistent_variance(self):
        ErrorSpec(kind="arch1", sigma2=1.0, arch_omega=0.5, arch_alpha=0.5)
        with pytest.raises(ConfigError):
            ErrorSpec(kind="arch1", sigma2=2.0, arch_omega=0.5, arch_alpha=0.5)
        with pytest.raises(ConfigError):
            ErrorSpec(kind="arch1", sigma2=1.0, arch_omega=0.5, arch_alpha=1.0)

    def test_arch_factory(self):
        spec = ErrorSpec.arch(4.0, 0.3)
        assert spec.arch_omega == pytest.approx(4.0 * 0.7)
        assert spec.sigma2 == 4.0

    def test_gaussian_rejects_arch_fields(self):
        with pytest.raises(ConfigError):
            ErrorSpec(kind="iid_gaussian", sigma2=1.0, arch_alpha=0.5)

    def test_round_trip(self):
        for spec in (ErrorSpec.gaussian(2.0), ErrorSpec.arch(1.0, 0.4)):
            assert ErrorSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            ErrorSpec.from_dict({"kind": "iid_gaussian", "sigma2": 1.0, "sigma": 2.0})


class TestMeanSpec:
    def test_ar1_stationarity_gate(self):
        MeanSpec.ar1(0.0)
        MeanSpec.ar1(-0.99)
        with pytest.raises(StationarityError):
            MeanSpec.ar1(1.0)
        with pytest.raises(StationarityError):
            MeanSpec.ar1(-1.5)

    def test_var_stationarity_gate(self):
        MeanSpec.var_p([[[0.5, 0.1], [0.0, 0.3]]])
        with pytest.raises(StationarityError):
            MeanSpec.var_p([[[1.0, 0.0], [0.0, 0.5]]])
        # companion radius, not per-matrix norms, decides for p > 1
        with pytest.raises(StationarityError):
            MeanSpec.var_p([[[0.7]], [[0.7]]])

    def test_iid_regression_spd_gate(self):
        MeanSpec.iid_regression([1.0, -0.5], [[1.0, 0.3], [0.3, 1.0]])
        with pytest.raises(ConfigError):
            MeanSpec.iid_regression([1.0, 1.0], [[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ConfigError):
            MeanSpec.iid_regression([1.0, 1.0], [[1.0, 0.0], [0.3, 1.0]])


class TestSampleErrorProcess:
    def test_gaussian_variance(self):
        eps = sample_error_process(ErrorSpec.gaussian(4.0), 10**6, 42)
        assert abs(eps.var() - 4.0) / 4.0 < 0.02

    def test_arch_moments(self):
        spec = ErrorSpec.arch(1.0, 0.5)
        eps = sample_error_process(spec, 10**6, 43)
        se_mean = eps.std(ddof=1) / np.sqrt(eps.size)
        assert abs(eps.mean()) < 4 * se_mean
        assert abs(eps.var() - 1.0) < 0.02

    def test_arch_is_mds_but_dependent(self):
        spec = ErrorSpec.arch(1.0, 0.5)
        eps = sample_error_process(spec, 10**6, 44)
        # levels uncorrelated at lags 1..5 (empirical SE of the products)
        for lag in range(1, 6):
            prod = eps[lag:] * eps[:-lag]
            se = prod.std(ddof=1) / np.sqrt(prod.size)
            corr = prod.mean() / eps.var()
            assert abs(corr) < 4 * se / eps.var(), f"lag {lag}"
        # squares strongly autocorrelated (theory: alpha = 0.5)
        sq = eps**2
        sq_corr = np.corrcoef(sq[1:], sq[:-1])[0, 1]
        assert sq_corr > 0.1

    def test_zero_noise(self):
        spec = ErrorSpec(kind="iid_gaussian", sigma2=1.0, zero_noise=True)
        assert np.all(sample_error_process(spec, 100, 1) == 0.0)

    def test_reproducible(self):
        spec = ErrorSpec.arch(1.0, 0.5)
        a = sample_error_process(spec, 1000, 7)
        b = sample_error_process(spec, 1000, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_error_process(spec, 1000, 8))


class TestSimulate:
    def test_rho_zero_means_vanish(self):
        path = simulate(ar1_spec(0.0), 100, 2, 5)
        assert np.all(path.mu_true == 0.0)
        assert np.array_equal(path.y, path.eps_true)

    def test_zero_noise_path_decays_to_zero(self):
        path = simulate(ar1_spec(0.9, zero_noise=True), 50, 2, 6)
        assert np.all(path.y == 0.0)
        assert np.all(path.mu_true == 0.0)
        assert np.all(path.eps_true == 0.0)

    def test_stationary_variance_matches_closed_form(self):
        # var = sigma2 / (1 - rho^2) = 5.263...
        path = simulate(ar1_spec(0.9), 10**5, 1, 2024)
        target = 1.0 / (1.0 - 0.81)
        assert abs(path.y.var() - target) / target < 0.02

    def test_decomposition_identity_exact(self):
        for seed in range(5):
            path = simulate(ar1_spec(0.7), 200, 3, seed)
            assert np.max(np.abs(path.y - path.mu_true - path.eps_true)) == 0.0

    def test_lag_columns_align(self):
        path = simulate(ar1_spec(0.5), 80, 3, 9)
        for lag in (1, 2, 3):
            np.testing.assert_array_equal(
                path.x_full[lag:, lag - 1], path.y[:-lag]
            )
        assert path.regressor_names == ("lag_1", "lag_2", "lag_3")

    def test_mu_is_rho_times_lag(self):
        path = simulate(ar1_spec(0.5), 80, 1, 10)
        np.testing.assert_array_equal(path.mu_true, 0.5 * path.x_full[:, 0])

    def test_reproducibility(self):
        a = simulate(ar1_spec(0.9), 64, 2, 99)
        b = simulate(ar1_spec(0.9), 64, 2, 99)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.x_full, b.x_full)
        c = simulate(ar1_spec(0.9), 64, 2, 100)
        assert not np.array_equal(a.y, c.y)

    def test_size_gates(self):
        with pytest.raises(SizeError):
            simulate(ar1_spec(0.9), 4, 2, 1)
        with pytest.raises(SizeError):
            simulate(ar1_spec(0.9, burn_in=1), 50, 3, 1)

    def test_exactly_T_rows(self):
        path = simulate(ar1_spec(0.9, burn_in=100), 10, 4, 3)
        assert path.T == 10
        assert path.y.shape == (10,)
        assert path.x_full.shape == (10, 4)


class TestVar:
    def spec(self):
        a = [[[0.5, 0.1], [0.0, 0.3]]]
        return DgpSpec(mean_kind=MeanSpec.var_p(a), errors=ErrorSpec.gaussian(1.0))

    def test_shapes_and_identity(self):
        path = simulate(self.spec(), 60, 2, 21)
        assert path.y.shape == (60, 2)
        assert path.x_full.shape == (60, 4)
        assert np.max(np.abs(path.y - path.mu_true - path.eps_true)) == 0.0
        assert path.regressor_names == ("lag_1_s1", "lag_1_s2", "lag_2_s1", "lag_2_s2")

    def test_equation_view(self):
        path = simulate(self.spec(), 60, 2, 21)
        eq = path.equation(1)
        assert eq.y.shape == (60,)
        assert np.array_equal(eq.y, path.y[:, 1])
        assert eq.x_full is path.x_full
        with pytest.raises(ConfigError):
            path.equation(2)
        with pytest.raises(ConfigError):
            eq.equation(0)

    def test_mu_matches_recursion(self):
        a = np.array([[[0.5, 0.1], [0.0, 0.3]]])
        path = simulate(self.spec(), 60, 1, 22)
        # mu_t = A1 @ y_{t-1}; lag values live in x_full
        mu_oracle = path.x_full[:, :2] @ a[0].T
        np.testing.assert_allclose(path.mu_true, mu_oracle, rtol=1e-12, atol=1e-14)

    def test_var_k1_is_arp(self):
        a = [[[0.6]], [[0.2]]]
        spec = DgpSpec(mean_kind=MeanSpec.var_p(a), errors=ErrorSpec.gaussian(1.0))
        path = simulate(spec, 50, 2, 23)
        assert path.y.shape == (50, 1)
        eq = path.equation(0)
        mu_oracle = 0.6 * eq.x_full[:, 0] + 0.2 * eq.x_full[:, 1]
        np.testing.assert_allclose(eq.mu_true, mu_oracle, rtol=1e-12, atol=1e-14)

    def test_multivariate_arch_rejected(self):
        a = [[[0.5, 0.1], [0.0, 0.3]]]
        with pytest.raises(ConfigError):
            DgpSpec(mean_kind=MeanSpec.var_p(a), errors=ErrorSpec.arch(1.0, 0.5))


class TestIidRegression:
    def spec(self, fixed_design=False):
        mean = MeanSpec.iid_regression(
            [1.0, -0.5], [[1.0, 0.3], [0.3, 1.0]], fixed_design=fixed_design
        )
        return DgpSpec(mean_kind=mean, errors=ErrorSpec.gaussian(1.0))

    def test_shapes_and_identity(self):
        path = simulate(self.spec(), 50, 0, 31)
        assert path.x_full.shape == (50, 2)
        assert np.max(np.abs(path.y - path.mu_true - path.eps_true)) == 0.0
        np.testing.assert_array_equal(path.mu_true, path.x_full @ np.array([1.0, -0.5]))

    def test_design_seed_pins_regressors(self):
        a = simulate(self.spec(), 50, 0, 1, design_seed=555)
        b = simulate(self.spec(), 50, 0, 2, design_seed=555)
        assert np.array_equal(a.x_full, b.x_full)
        assert not np.array_equal(a.eps_true, b.eps_true)


class TestSerialization:
    def test_dgp_round_trip(self):
        specs = [
            ar1_spec(0.9),
            DgpSpec(
                mean_kind=MeanSpec.var_p([[[0.5, 0.1], [0.0, 0.3]]]),
                errors=ErrorSpec.gaussian(2.0),
                burn_in=500,
            ),
            DgpSpec(
                mean_kind=MeanSpec.iid_regression([1.0], [[2.0]], fixed_design=True),
                errors=ErrorSpec.arch(1.0, 0.25),
            ),
        ]
        for spec in specs:
            assert DgpSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            DgpSpec.from_dict(
                {"mean_kind": {"kind": "ar1", "rho": 0.5},
                 "errors": {"kind": "iid_gaussian", "sigma2": 1.0},
                 "burnin": 10}
            )
        with pytest.raises(ConfigError, match="unknown"):
            MeanSpec.from_dict({"kind": "ar1", "rho": 0.5, "phi": 0.2})
