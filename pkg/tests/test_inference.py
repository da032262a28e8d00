import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import covadjust as ca
from _fixtures import acceptance_population, random_dataset


class TestRobustVcov:
    def test_per_arm_fit_collapses_to_slope_quadratic_form(self, toy):
        # Residuals are constant within each arm, so only the centering term
        # survives: (5/3) times the all-ones matrix for unit slopes.
        fit = ca.fit_anhecova(toy, pooled_cov=False)
        expected = (5.0 / 3.0) * np.ones((2, 2))
        assert np.allclose(fit.vcov_hat, expected, atol=1e-12)
        assert np.allclose(ca.robust_vcov(fit, toy), expected, atol=1e-12)

    def test_anova_vcov_is_scaled_arm_variances(self, toy):
        fit = ca.fit_anova(toy)
        # per-arm sample variances are both 2, and n / n_t = 2
        assert np.allclose(fit.vcov_hat, np.diag([4.0, 4.0]))

    def test_target_pi_weights(self, toy):
        fit = ca.fit_anova(toy)
        alloc = ca.ArmAllocation([0.25, 0.75])
        v = ca.robust_vcov(fit, toy, use_target_pi=True, allocation=alloc)
        assert np.allclose(np.diag(v), [2.0 / 0.25, 2.0 / 0.75])
        with pytest.raises(ValueError):
            ca.robust_vcov(fit, toy, use_target_pi=True)

    def test_requires_two_patients_per_arm(self):
        data = ca.validate_dataset([1, 1, 2], [1.0, 2.0, 3.0])
        fit = ca.fit_anova(data)
        assert fit.vcov_hat is None
        with pytest.raises(ca.TooFewPatients):
            ca.robust_vcov(fit, data)

    def test_uninformative_covariate_tracks_anova_vcov(self):
        # slopes near zero: the adjusted variance should sit within a few
        # percent of the unadjusted one
        rng = np.random.default_rng(7)
        n = 4000
        arm = rng.integers(1, 3, n)
        arm[:2] = [1, 2]
        data = ca.TrialDataset(
            arm=arm, y=rng.normal(size=n), z=["s"] * n, x=rng.normal(size=(n, 1)), k=2
        )
        v_anova = ca.fit_anova(data).vcov_hat
        v_adj = ca.fit_anhecova(data).vcov_hat
        assert np.abs(np.diag(v_adj) / np.diag(v_anova) - 1.0).max() < 0.05

    def test_psd_floor_on_random_datasets(self):
        # Trial-scale signal (covariate R-squared well under a third, the
        # regime this toolkit targets): the plug-in stays PSD up to the
        # -1e-8 relative floor for every estimator in the family.
        rng = np.random.default_rng(55)
        for _ in range(200):
            k = int(rng.integers(2, 5))
            p = int(rng.integers(1, 4))
            n = int(rng.integers(100, 201))
            arm = np.tile(np.arange(1, k + 1), n // k + 1)[:n]
            rng.shuffle(arm)
            x = rng.normal(size=(n, p))
            base = rng.normal(size=p) * np.sqrt(0.3 / p)
            slopes = base[:, None] * (1.0 + 0.3 * rng.normal(size=(p, k)))
            y = rng.normal(size=k)[arm - 1] + np.einsum("ip,ip->i", x, slopes[:, arm - 1].T)
            y = y + rng.normal(size=n)
            data = ca.TrialDataset(arm=arm, y=y, z=["s"] * n, x=x, k=k)
            fits = (
                ca.fit_anova(data),
                ca.fit_ancova(data),
                ca.fit_anhecova(data),
                ca.fit_anhecova(data, pooled_cov=False),
            )
            for fit in fits:
                v = ca.robust_vcov(fit, data)
                floor = -1e-8 * max(float(np.diag(v).max()), 0.0)
                assert float(np.linalg.eigvalsh(v)[0]) >= floor


class TestContrastCi:
    def test_degenerate_perfect_fit(self, toy):
        fit = ca.fit_anhecova(toy, pooled_cov=False)
        res = ca.contrast_ci(fit, [1.0, -1.0])
        assert res.estimate == 0.0 and res.se == 0.0

    def test_anova_se_formula_equal_arms(self, toy):
        fit = ca.fit_anova(toy)
        res = ca.contrast_ci(fit, [1.0, -1.0])
        # se = sqrt((2 v1 + 2 v2) / n) with v1 = v2 = 2, n = 4
        assert abs(res.se - np.sqrt(8.0 / 4.0)) < 1e-12
        assert abs(res.estimate - (-1.0)) < 1e-12

    def test_interval_half_width_normal_quantile(self, toy):
        fit = ca.fit_anova(toy)
        res = ca.contrast_ci(fit, [1.0, -1.0], alpha=0.05)
        half = (res.ci_high - res.ci_low) / 2.0
        assert abs(half - 1.959964 * res.se) < 1e-6 * res.se

    def test_rejects_non_contrast(self, toy):
        fit = ca.fit_anova(toy)
        with pytest.raises(ca.NotAContrast):
            ca.contrast_ci(fit, [1.0, 1.0])
        with pytest.raises(ca.NotAContrast):
            ca.contrast_ci(fit, [1.0])


class TestScheffe:
    def test_two_arm_band_equals_pointwise_ci(self, toy):
        fit = ca.fit_anova(toy)
        ci = ca.contrast_ci(fit, [1.0, -1.0], alpha=0.05)
        band = ca.scheffe_band(fit, [1.0, -1.0], alpha=0.05)
        ratio = (band.ci_high - band.ci_low) / (ci.ci_high - ci.ci_low)
        assert abs(ratio - 1.0) < 1e-4

    def test_three_arm_multiplier(self):
        assert abs(np.sqrt(ca.chi_square_quantile(0.95, 2)) - 2.4477) < 1e-4

    def test_band_contains_pointwise_ci(self):
        rng = np.random.default_rng(21)
        data = random_dataset(rng, n=90, p=2, k=3)
        fit = ca.fit_anhecova(data)
        for c in ([1.0, -1.0, 0.0], [0.5, 0.5, -1.0]):
            ci = ca.contrast_ci(fit, c)
            band = ca.scheffe_band(fit, c)
            assert band.ci_low <= ci.ci_low and band.ci_high >= ci.ci_high


class TestHomogeneity:
    def test_equal_means_statistic_zero(self):
        data = ca.validate_dataset([1, 1, 2, 2], [1.0, 3.0, 1.0, 3.0])
        fit = ca.fit_anova(data)
        res = ca.homogeneity_test(fit)
        assert res.statistic == 0.0 and res.df == 1 and not res.reject

    def test_degenerate_vcov_rejected(self, toy):
        fit = ca.fit_anhecova(toy, pooled_cov=False)
        with pytest.raises(ca.SingularContrastCovariance):
            ca.homogeneity_test(fit)

    def test_obvious_difference_rejects(self):
        rng = np.random.default_rng(5)
        n = 300
        arm = rng.integers(1, 4, n)
        arm[:3] = [1, 2, 3]
        y = np.array([0.0, 5.0, -5.0])[arm - 1] + rng.normal(size=n)
        data = ca.TrialDataset(arm=arm, y=y, z=["s"] * n, x=np.zeros((n, 0)), k=3)
        res = ca.homogeneity_test(ca.fit_anova(data))
        assert res.reject and res.df == 2 and res.p_value < 1e-10


class TestTreatmentEffects:
    @staticmethod
    def _fit_with_theta(theta, vcov=None):
        k = len(theta)
        data_rows = []
        return ca.EstimatorFit(
            method=ca.EstimatorMethod.ANOVA,
            theta_hat=theta,
            b_hat=np.zeros((0, k)),
            vcov_hat=np.eye(k) if vcov is None else vcov,
            n_t=[10] * k,
            n=10 * k,
        )

    def test_difference_reduces_to_contrast(self, toy):
        fit = ca.fit_anova(toy)
        a = ca.treatment_effect_ci(fit, ca.Difference(1, 2))
        b = ca.contrast_ci(fit, [1.0, -1.0])
        assert a == b

    def test_ratio_hand_computed(self):
        fit = self._fit_with_theta([2.0, 4.0])
        res = ca.treatment_effect_ci(fit, ca.Ratio(1, 2), log_scale=False)
        assert abs(res.estimate - 0.5) < 1e-12
        grad = np.array([0.25, -0.125])
        expected_se = np.sqrt(grad @ np.eye(2) @ grad / 20.0)
        assert abs(res.se - expected_se) < 1e-12

    def test_odds_ratio_hand_computed(self):
        fit = self._fit_with_theta([0.2, 0.5])
        res = ca.treatment_effect_ci(fit, ca.OddsRatio(1, 2))
        assert abs(res.estimate - 0.25) < 1e-12

    def test_log_scale_interval_is_positive_and_asymmetric(self):
        fit = self._fit_with_theta([2.0, 4.0])
        res = ca.treatment_effect_ci(fit, ca.Ratio(1, 2))
        assert res.ci_low > 0.0
        assert (res.estimate - res.ci_low) < (res.ci_high - res.estimate)
        plain = ca.treatment_effect_ci(fit, ca.Ratio(1, 2), log_scale=False)
        assert abs((plain.ci_high + plain.ci_low) / 2.0 - plain.estimate) < 1e-12

    def test_domain_errors(self):
        with pytest.raises(ca.DomainError):
            ca.treatment_effect_ci(self._fit_with_theta([1.0, 0.0]), ca.Ratio(1, 2))
        with pytest.raises(ca.DomainError):
            ca.treatment_effect_ci(self._fit_with_theta([1.2, 0.5]), ca.OddsRatio(1, 2))
        with pytest.raises(ca.DomainError):
            ca.treatment_effect_ci(self._fit_with_theta([0.5, 0.5]), ca.Ratio(1, 1))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.1, 0.9, size=3)
        if abs(theta[1] - theta[0]) < 0.05:
            theta[1] += 0.1
        from covadjust.inference import _effect_value_gradient

        step = 1e-6
        for effect in (
            ca.Difference(1, 2),
            ca.Ratio(1, 2),
            ca.OddsRatio(1, 2),
            ca.LogOddsRatio(1, 2),
        ):
            _, grad = _effect_value_gradient(theta, effect)
            for j in range(3):
                up, dn = theta.copy(), theta.copy()
                up[j] += step
                dn[j] -= step
                fd = (
                    _effect_value_gradient(up, effect)[0]
                    - _effect_value_gradient(dn, effect)[0]
                ) / (2 * step)
                scale = max(abs(grad[j]), 1.0)
                assert abs(fd - grad[j]) <= 1e-5 * scale


class TestQuantiles:
    def test_normal_quantile(self):
        assert abs(ca.normal_quantile(0.975) - 1.959963985) < 1e-9

    def test_chi_square_one_df_matches_squared_normal(self):
        z = ca.normal_quantile(0.975)
        assert abs(ca.chi_square_quantile(0.95, 1) - z * z) < 1e-9

    def test_two_sided_p(self):
        assert abs(ca.two_sided_p(1.959963985, 1.0) - 0.05) < 1e-9
        assert ca.two_sided_p(0.0, 0.0) == 1.0
        assert ca.two_sided_p(1.0, 0.0) == 0.0


def test_se_plugin_consistency_across_schemes():
    """Average robust SE tracks the exact scheme-invariant target under all
    four randomization schemes for the heterogeneous-slope estimator with
    the stratum dummies included."""
    pop = acceptance_population()
    alloc = ca.ArmAllocation.from_ratio("1:2:2")
    moments = ca.population_moments(pop, alloc)
    v_target = ca.v_simple(pop, alloc, moments.beta)
    c = np.array([-1.0, 1.0, 0.0])
    target = float(np.sqrt(c @ v_target @ c))
    schemes = {
        "simple": ca.SchemeSpec(ca.Simple(), alloc),
        "permuted_block": ca.SchemeSpec(ca.StratifiedPermutedBlock(10), alloc),
        "biased_coin": ca.SchemeSpec(ca.StratifiedBiasedCoin(), alloc),
        "minimization": ca.SchemeSpec(ca.PocockSimonMinimization((1.0,), 0.8), alloc),
    }
    n = 1000
    for name, scheme in schemes.items():
        config = ca.ScenarioConfig(
            population=pop,
            scheme=scheme,
            n=n,
            methods=(ca.MethodSpec("anhecova", include_z_dummies=True),),
            contrasts=((-1.0, 1.0, 0.0),),
            replications=2000,
            seed=606,
        )
        report = ca.run_scenario(config)
        row = report.rows[0]
        assert row.n_failed == 0
        ratio = row.avg_se * np.sqrt(n) / target
        assert abs(ratio - 1.0) < 0.05, f"{name}: mean se off target by {ratio - 1.0:+.3%}"
