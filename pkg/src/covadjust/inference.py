"""Robust variance estimation and inference for the adjusted estimators.

The covariance target is the asymptotic covariance of
``sqrt(n) * (theta_hat - theta)``. For a fit with slope matrix ``B`` the
plug-in is::

    V_hat = diag{ (n / n_t) * S_t^2(b_t) } + Bs' Sig B + B' Sig Bs - B' Sig B

where ``S_t^2(b_t)`` is the within-arm sample variance of the residuals
``y_i - b_t' x_i``, ``Sig`` is the whole-sample covariate covariance, and
``Bs`` estimates the population slope matrix (the heterogeneous-slope fits
supply their own slope columns; other fits use the pooled-covariance slope
estimate). The second group of terms accounts for centering the covariates
at the sample mean, which off-the-shelf heteroscedasticity-robust formulas
ignore. For heterogeneous-slope fits the expression collapses to
``diag{(n/n_t) S_t^2} + Bs' Sig Bs``.

Standard errors are reported on the estimate scale, ``se = sqrt(c' V c / n)``,
and the homogeneity statistic carries the matching factor ``n``.

By default the diagonal weights use realized arm sizes ``n / n_t``; pass
``use_target_pi=True`` (with the allocation) to use the target ``1 / pi_t``
instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import chdtrc, chdtri, ndtr, ndtri

from . import estimate
from .data import ArmAllocation, EstimatorFit, EstimatorMethod, TrialDataset, sample_covariance
from .errors import (
    DomainError,
    NotAContrast,
    SingularContrastCovariance,
    TooFewPatients,
)

_HETERO_METHODS = (EstimatorMethod.ANHECOVA_PER_ARM, EstimatorMethod.ANHECOVA_POOLED_COV)


def normal_quantile(p: float) -> float:
    """Standard normal quantile (accurate to full double precision)."""
    return float(ndtri(p))


def chi_square_quantile(p: float, df: int) -> float:
    """Chi-square quantile at probability ``p`` with ``df`` degrees of freedom."""
    return float(chdtri(df, 1.0 - p))


def two_sided_p(estimate_value: float, se: float) -> float:
    """Two-sided normal p-value for estimate / se; 1.0 when se is 0 and estimate is 0."""
    if se == 0.0:
        return 0.0 if estimate_value != 0.0 else 1.0
    return float(2.0 * ndtr(-abs(estimate_value / se)))


@dataclass(frozen=True)
class ContrastResult:
    """A point estimate with its standard error and confidence interval."""

    estimate: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.se < 0.0:
            raise ValueError("se must be nonnegative")
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise ValueError("confidence interval must contain the estimate")


@dataclass(frozen=True)
class HomogeneityTest:
    statistic: float
    df: int
    p_value: float
    reject: bool


def _robust_vcov_parts(
    data: TrialDataset,
    b: np.ndarray,
    method: EstimatorMethod,
    use_target_pi: bool = False,
    allocation: Optional[ArmAllocation] = None,
) -> np.ndarray:
    rows = data.arm_rows()
    n_t = np.array([idx.size for idx in rows], float)
    if n_t.min() < 2:
        raise TooFewPatients("every arm needs n_t >= 2 for variance estimation")
    if use_target_pi:
        if allocation is None:
            raise ValueError("use_target_pi requires the target allocation")
        weights = 1.0 / allocation.pi
    else:
        weights = data.n / n_t
    s2 = np.empty(data.k)
    for t, idx in enumerate(rows):
        resid = data.y[idx] - (data.x[idx] @ b[:, t] if data.p else 0.0)
        s2[t] = resid.var(ddof=1)
    v = np.diag(weights * s2)
    if data.p and np.any(b != 0.0):
        if method in _HETERO_METHODS:
            b_script = b
        else:
            b_script = estimate.slope_matrix(data, pooled_cov=True)
        sig = sample_covariance(data.x)
        cross = b_script.T @ sig @ b
        v = v + cross + cross.T - b.T @ sig @ b
    return (v + v.T) / 2.0


def robust_vcov(
    fit: EstimatorFit,
    data: TrialDataset,
    use_target_pi: bool = False,
    allocation: Optional[ArmAllocation] = None,
) -> np.ndarray:
    """Heteroscedasticity-robust covariance estimate for ``sqrt(n)(theta_hat - theta)``.

    Valid regardless of whether the working model is correct and, for the
    heterogeneous-slope estimator with all randomization strata included in
    the covariates, regardless of the randomization scheme.
    """
    return _robust_vcov_parts(
        data, fit.b_hat, fit.method, use_target_pi=use_target_pi, allocation=allocation
    )


def _check_contrast(fit: EstimatorFit, c) -> np.ndarray:
    c = np.asarray(c, float)
    if c.shape != (fit.k,):
        raise NotAContrast(f"contrast must have length {fit.k}")
    if abs(float(c.sum())) > 1e-12:
        raise NotAContrast(f"contrast coefficients must sum to 0, got {float(c.sum())!r}")
    return c


def _fit_vcov(fit: EstimatorFit) -> np.ndarray:
    if fit.vcov_hat is None:
        raise TooFewPatients(
            "fit carries no variance estimate (some arm has fewer than two patients "
            "or the slope plug-in was singular)"
        )
    return fit.vcov_hat


def contrast_ci(fit: EstimatorFit, c, alpha: float = 0.05) -> ContrastResult:
    """Normal-theory confidence interval for the linear contrast ``c' theta``."""
    c = _check_contrast(fit, c)
    v = _fit_vcov(fit)
    est = float(c @ fit.theta_hat)
    se = float(np.sqrt(max(c @ v @ c, 0.0) / fit.n))
    half = normal_quantile(1.0 - alpha / 2.0) * se
    return ContrastResult(est, se, est - half, est + half, alpha)


def scheffe_band(fit: EstimatorFit, c, alpha: float = 0.05) -> ContrastResult:
    """Scheffe simultaneous band evaluated at contrast ``c``.

    Valid jointly over all contrasts; the half-width multiplier is the square
    root of the chi-square (1 - alpha) quantile with k - 1 degrees of freedom.
    """
    c = _check_contrast(fit, c)
    v = _fit_vcov(fit)
    est = float(c @ fit.theta_hat)
    se = float(np.sqrt(max(c @ v @ c, 0.0) / fit.n))
    half = np.sqrt(chi_square_quantile(1.0 - alpha, fit.k - 1)) * se
    return ContrastResult(est, se, est - half, est + half, alpha)


def homogeneity_test(fit: EstimatorFit, alpha: float = 0.05) -> HomogeneityTest:
    """Chi-square test of equal arm means, theta_1 = ... = theta_k."""
    v = _fit_vcov(fit)
    k = fit.k
    c_mat = np.zeros((k - 1, k))
    c_mat[:, :-1] = np.eye(k - 1)
    c_mat[:, -1] = -1.0
    mid = c_mat @ v @ c_mat.T
    eigs = np.abs(np.linalg.eigvalsh((mid + mid.T) / 2.0))
    if eigs[-1] <= 0.0 or eigs[0] < 1e-10 * eigs[-1]:
        raise SingularContrastCovariance(
            "contrast covariance matrix is singular; the chi-square statistic is undefined"
        )
    d = c_mat @ fit.theta_hat
    stat = float(fit.n * d @ np.linalg.solve(mid, d))
    df = k - 1
    p = float(chdtrc(df, stat))
    return HomogeneityTest(stat, df, p, stat > chi_square_quantile(1.0 - alpha, df))


@dataclass(frozen=True)
class Difference:
    t: int
    s: int


@dataclass(frozen=True)
class Ratio:
    t: int
    s: int


@dataclass(frozen=True)
class OddsRatio:
    t: int
    s: int


@dataclass(frozen=True)
class LogOddsRatio:
    t: int
    s: int


EffectKind = Union[Difference, Ratio, OddsRatio, LogOddsRatio]


def _effect_value_gradient(theta: np.ndarray, effect: EffectKind):
    k = theta.size
    t, s = effect.t, effect.s
    if not (1 <= t <= k and 1 <= s <= k) or t == s:
        raise DomainError(f"effect arms must be distinct labels in 1..{k}")
    ti, si = t - 1, s - 1
    g = np.zeros(k)
    if isinstance(effect, Difference):
        g[ti], g[si] = 1.0, -1.0
        return float(theta[ti] - theta[si]), g
    if isinstance(effect, Ratio):
        if theta[si] == 0.0:
            raise DomainError("ratio denominator estimate is zero")
        value = theta[ti] / theta[si]
        g[ti] = 1.0 / theta[si]
        g[si] = -theta[ti] / theta[si] ** 2
        return float(value), g
    for arm in (ti, si):
        if not 0.0 < theta[arm] < 1.0:
            raise DomainError(
                "odds ratios require both arm estimates strictly inside (0, 1)"
            )
    odds_t = theta[ti] / (1.0 - theta[ti])
    odds_s = theta[si] / (1.0 - theta[si])
    dlog = np.zeros(k)
    dlog[ti] = 1.0 / (theta[ti] * (1.0 - theta[ti]))
    dlog[si] = -1.0 / (theta[si] * (1.0 - theta[si]))
    if isinstance(effect, LogOddsRatio):
        return float(np.log(odds_t / odds_s)), dlog
    value = odds_t / odds_s
    return float(value), value * dlog


def treatment_effect_ci(
    fit: EstimatorFit,
    effect: EffectKind,
    alpha: float = 0.05,
    log_scale: bool = True,
) -> ContrastResult:
    """Delta-method interval for a difference, ratio, or odds ratio of arm means.

    ``se`` is always the delta-method standard error on the estimate scale.
    For ratios and odds ratios with a positive estimate the interval is
    computed on the log scale and exponentiated (default), which keeps it
    inside the parameter range; ``log_scale=False`` gives the plain
    symmetric interval.
    """
    v = _fit_vcov(fit)
    value, grad = _effect_value_gradient(fit.theta_hat, effect)
    var_raw = max(float(grad @ v @ grad), 0.0) / fit.n
    se = float(np.sqrt(var_raw))
    zq = normal_quantile(1.0 - alpha / 2.0)
    multiplicative = isinstance(effect, (Ratio, OddsRatio))
    if multiplicative and log_scale and value > 0.0:
        se_log = se / value
        lo = value * np.exp(-zq * se_log)
        hi = value * np.exp(zq * se_log)
        return ContrastResult(value, se, float(lo), float(hi), alpha)
    return ContrastResult(value, se, value - zq * se, value + zq * se, alpha)
