import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import covadjust as ca
from _fixtures import random_dataset, reference_homogeneous_ols, reference_interaction_ols


class TestAnova:
    def test_arm_means(self, toy):
        assert np.allclose(ca.fit_anova(toy).theta_hat, [2.0, 3.0])

    def test_constant_response(self):
        data = ca.validate_dataset([1, 2, 1, 2], [7.0] * 4)
        assert np.allclose(ca.fit_anova(data).theta_hat, [7.0, 7.0])

    def test_single_patient_per_arm(self):
        data = ca.validate_dataset([1, 2], [5.0, 9.0])
        fit = ca.fit_anova(data)
        assert np.allclose(fit.theta_hat, [5.0, 9.0])
        assert fit.vcov_hat is None

    def test_empty_arm_rejected(self):
        data = ca.validate_dataset([1, 1, 1], [1.0, 2.0, 3.0], k=2, require_nonempty_arms=False)
        with pytest.raises(ca.EmptyArm):
            ca.fit_anova(data)


class TestSlopes:
    def test_pooled_slope_hand_computed(self, toy):
        assert np.allclose(ca.pooled_slope(toy), [1.0])

    def test_pooled_slope_singular_when_x_constant_within_arms(self):
        data = ca.validate_dataset([1, 1, 2, 2], [1.0, 2.0, 3.0, 4.0], None, [[5.0], [5.0], [7.0], [7.0]])
        with pytest.raises(ca.SingularDesign):
            ca.pooled_slope(data)

    def test_duplicated_column_singular(self, toy):
        data = ca.TrialDataset(
            arm=toy.arm, y=toy.y, z=toy.z, x=np.column_stack([toy.x, toy.x]), k=2
        )
        with pytest.raises(ca.SingularDesign):
            ca.pooled_slope(data)

    def test_arm_slope_hand_computed(self, toy):
        assert np.allclose(ca.arm_slope(toy, 1), [1.0])

    def test_arm_slope_constant_response_is_zero(self):
        data = ca.validate_dataset([1, 1, 1, 2], [4.0, 4.0, 4.0, 1.0], None, [[0.0], [1.0], [2.0], [0.0]])
        assert np.allclose(ca.arm_slope(data, 1), [0.0])

    def test_arm_slope_too_few_patients(self):
        # arm 2 has exactly p = 1 patients
        data = ca.validate_dataset([1, 1, 1, 2], [1.0, 2.0, 3.0, 4.0], None, [[0.0], [1.0], [2.0], [0.0]])
        with pytest.raises(ca.TooFewPatients):
            ca.arm_slope(data, 2)

    def test_pooled_cov_slope_hand_computed(self, toy):
        # whole-sample centered SSQ 5, arm-1 cross product 2, n/n_1 = 2
        assert np.allclose(ca.arm_slope_pooled_cov(toy, 1), [0.8])
        assert np.allclose(ca.arm_slope_pooled_cov(toy, 2), [0.8])

    def test_pooled_cov_slope_single_arm_reduction(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(12, 1))
        y = rng.normal(size=12)
        data = ca.TrialDataset(arm=np.ones(12, int), y=y, z=["s"] * 12, x=x, k=1)
        xc = x[:, 0] - x[:, 0].mean()
        expected = (xc @ y) / (xc @ xc)
        assert np.allclose(ca.arm_slope_pooled_cov(data, 1), [expected])

    def test_pooled_cov_slope_consistent_for_independent_covariate(self):
        # x independent of y: slope should vanish within Monte Carlo error
        rng = np.random.default_rng(11)
        reps = 200
        vals = np.empty(reps)
        for r in range(reps):
            n = 400
            arm = np.concatenate([np.ones(n // 2, int), np.full(n - n // 2, 2)])
            x = rng.normal(size=(n, 1))
            y = rng.normal(size=n)
            data = ca.TrialDataset(arm=arm, y=y, z=["s"] * n, x=x, k=2)
            vals[r] = ca.arm_slope_pooled_cov(data, 1)[0]
        assert abs(vals.mean()) < 3.0 * vals.std(ddof=1) / np.sqrt(reps)


class TestAdjustedFits:
    def test_zero_slopes_equal_anova(self, toy):
        fit = ca.fit_linear_adjusted(toy, np.zeros((1, 2)))
        assert np.allclose(fit.theta_hat, ca.fit_anova(toy).theta_hat)

    def test_pooled_slopes_equal_ancova(self, toy):
        beta = ca.pooled_slope(toy)
        fit = ca.fit_linear_adjusted(toy, np.repeat(beta.reshape(-1, 1), 2, axis=1))
        assert np.allclose(fit.theta_hat, ca.fit_ancova(toy).theta_hat)

    def test_unit_slopes_hand_computed(self, toy):
        fit = ca.fit_linear_adjusted(toy, np.ones((1, 2)))
        assert np.allclose(fit.theta_hat, [2.5, 2.5])

    def test_ancova_hand_computed(self, toy):
        assert np.allclose(ca.fit_ancova(toy).theta_hat, [2.5, 2.5])

    def test_anhecova_per_arm_hand_computed(self, toy):
        fit = ca.fit_anhecova(toy, pooled_cov=False)
        assert np.allclose(fit.theta_hat, [2.5, 2.5])
        assert np.allclose(fit.b_hat, [[1.0, 1.0]])

    def test_anhecova_default_uses_whole_sample_gram(self, toy):
        fit = ca.fit_anhecova(toy)
        assert fit.method is ca.EstimatorMethod.ANHECOVA_POOLED_COV
        assert np.allclose(fit.b_hat, [[0.8, 0.8]])
        assert np.allclose(fit.theta_hat, [2.4, 2.6])

    def test_anhecova_equals_anova_when_y_constant_per_arm(self):
        data = ca.validate_dataset(
            [1, 1, 1, 2, 2, 2], [4.0] * 3 + [9.0] * 3, None,
            [[0.0], [1.0], [2.0], [0.0], [1.0], [2.0]],
        )
        fit = ca.fit_anhecova(data, pooled_cov=False)
        assert np.allclose(fit.theta_hat, ca.fit_anova(data).theta_hat)

    def test_linearity_in_slope_matrix(self, toy):
        rng = np.random.default_rng(0)
        b1 = rng.normal(size=(1, 2))
        b2 = rng.normal(size=(1, 2))
        lam = 0.3
        mixed = ca.fit_linear_adjusted(toy, lam * b1 + (1 - lam) * b2).theta_hat
        combo = lam * ca.fit_linear_adjusted(toy, b1).theta_hat
        combo = combo + (1 - lam) * ca.fit_linear_adjusted(toy, b2).theta_hat
        assert np.allclose(mixed, combo, atol=1e-12, rtol=0.0)

    def test_b_matrix_shape_checked(self, toy):
        with pytest.raises(ValueError):
            ca.fit_linear_adjusted(toy, np.zeros((2, 2)))


class TestExactReproduction:
    def test_anhecova_matches_full_interaction_ols(self):
        rng = np.random.default_rng(101)
        for _ in range(20):
            data = random_dataset(rng)
            fit = ca.fit_anhecova(data, pooled_cov=False)
            ref = reference_interaction_ols(data)
            scale = max(np.abs(ref).max(), 1.0)
            assert np.allclose(fit.theta_hat, ref, atol=1e-8 * scale, rtol=0.0)

    def test_ancova_matches_homogeneous_ols(self):
        rng = np.random.default_rng(202)
        for _ in range(20):
            data = random_dataset(rng)
            fit = ca.fit_ancova(data)
            ref = reference_homogeneous_ols(data)
            scale = max(np.abs(ref).max(), 1.0)
            assert np.allclose(fit.theta_hat, ref, atol=1e-8 * scale, rtol=0.0)

    def test_pooled_cov_variant_agrees_in_probability(self):
        # The two slope variants differ at finite n but converge to the same
        # limit; at n = 4000 the adjusted means should be within Monte Carlo
        # distance of each other.
        rng = np.random.default_rng(303)
        data = random_dataset(rng, n=4000, p=2, k=2)
        f8 = ca.fit_anhecova(data, pooled_cov=False)
        f10 = ca.fit_anhecova(data, pooled_cov=True)
        assert np.abs(f8.b_hat - f10.b_hat).max() < 0.15
        assert np.abs(f8.theta_hat - f10.theta_hat).max() < 0.01


@given(
    st.integers(0, 2**31 - 1),
    st.floats(0.25, 4.0),
    st.floats(-5.0, 5.0),
)
@settings(max_examples=25, deadline=None)
def test_affine_response_equivariance(seed, a, c):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n=60, p=2, k=3)
    scaled = ca.TrialDataset(arm=data.arm, y=a * data.y + c, z=data.z, x=data.x, k=data.k)
    for fitter in (ca.fit_anova, ca.fit_ancova, ca.fit_anhecova):
        base = fitter(data).theta_hat
        mapped = fitter(scaled).theta_hat
        scale = max(np.abs(mapped).max(), 1.0)
        assert np.allclose(a * base + c, mapped, atol=1e-10 * scale, rtol=0.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_covariate_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n=60, p=2, k=3)
    s_mat = rng.normal(size=(2, 2)) + 2.0 * np.eye(2)
    if abs(np.linalg.det(s_mat)) < 0.1:
        s_mat = s_mat + np.eye(2)
    shift = rng.normal(size=2) * 3.0
    mapped = ca.TrialDataset(
        arm=data.arm, y=data.y, z=data.z, x=data.x @ s_mat + shift, k=data.k
    )
    for fitter in (ca.fit_ancova, ca.fit_anhecova, lambda d: ca.fit_anhecova(d, pooled_cov=False)):
        base = fitter(data).theta_hat
        moved = fitter(mapped).theta_hat
        scale = max(np.abs(base).max(), 1.0)
        assert np.allclose(base, moved, atol=1e-8 * scale, rtol=0.0)


def test_ancova_tracks_anova_when_covariate_uninformative():
    # x independent of both y and arm: the pooled slope is near zero so the
    # two estimators agree within Monte Carlo error.
    rng = np.random.default_rng(404)
    reps, diffs = 150, []
    for _ in range(reps):
        n = 300
        arm = rng.integers(1, 3, n)
        arm[:2] = [1, 2]
        y = rng.normal(size=n)
        x = rng.normal(size=(n, 1))
        data = ca.TrialDataset(arm=arm, y=y, z=["s"] * n, x=x, k=2)
        c_diff = ca.fit_ancova(data).theta_hat - ca.fit_anova(data).theta_hat
        diffs.append(c_diff[0] - c_diff[1])
    diffs = np.asarray(diffs)
    assert abs(diffs.mean()) < 3.0 * diffs.std(ddof=1) / np.sqrt(reps)
