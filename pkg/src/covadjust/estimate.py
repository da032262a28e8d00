"""Least-squares estimators of the arm-mean vector with linear covariate adjustment.

All estimators share the form ``theta_hat[t] = ybar_t - b_t' (xbar_t - xbar)``
and differ only in the slope vectors ``b_t``:

* ``fit_anova``: ``b_t = 0`` (unadjusted arm means).
* ``fit_ancova``: one pooled slope for every arm, the least-squares slope of
  the homogeneous (no-interaction) working model.
* ``fit_anhecova``: per-arm slopes from the heterogeneous working model with
  full treatment-by-covariate interactions. The default slope estimate
  replaces the within-arm covariate Gram matrix by the whole-sample one
  (scaled by n/n_t), which is the more stable variant at small n; the plain
  within-arm least-squares slopes sit behind ``pooled_cov=False``.
* ``fit_linear_adjusted``: any caller-supplied p x k slope matrix.

Covariates are always centered at the whole-sample mean, never per arm; the
extra variation this induces is handled by the robust variance estimator in
:mod:`covadjust.inference`, not here.
"""

from __future__ import annotations

import numpy as np

from .data import EstimatorFit, EstimatorMethod, TrialDataset
from .errors import EmptyArm, SingularDesign, TooFewPatients

#: Solves fail below this reciprocal condition number instead of silently
#: pseudo-inverting; rank deficiency here would corrupt both the slopes and
#: the variance plug-in.
RCOND_FLOOR = 1e-10


def solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a symmetric PSD Gram system through a rank-revealing eigendecomposition."""
    p = gram.shape[0]
    if p == 0:
        return np.zeros(rhs.shape[:0] + rhs.shape[1:]) if rhs.ndim > 1 else np.zeros(0)
    w, q = np.linalg.eigh((gram + gram.T) / 2.0)
    w_abs = np.abs(w)
    if w_abs[-1] <= 0.0 or w_abs.min() < RCOND_FLOOR * w_abs.max():
        raise SingularDesign(
            f"Gram matrix is rank deficient (reciprocal condition "
            f"{0.0 if w_abs[-1] == 0 else w_abs.min() / w_abs.max():.2e})"
        )
    return q @ ((q.T @ rhs).T / w).T if rhs.ndim > 1 else q @ ((q.T @ rhs) / w)


def _require_nonempty(data: TrialDataset) -> list[np.ndarray]:
    rows = data.arm_rows()
    empty = [t + 1 for t, idx in enumerate(rows) if idx.size == 0]
    if empty:
        raise EmptyArm([f"arm {t} has no patients" for t in empty])
    return rows


def _arm_means(data: TrialDataset, rows: list[np.ndarray]):
    ybar = np.array([data.y[idx].mean() for idx in rows])
    xbar_t = np.stack([data.x[idx].mean(axis=0) for idx in rows]) if data.p else np.zeros((data.k, 0))
    xbar = data.x.mean(axis=0) if data.p else np.zeros(0)
    return ybar, xbar_t, xbar


def pooled_slope(data: TrialDataset) -> np.ndarray:
    """Pooled within-arm least-squares slope of the homogeneous working model."""
    rows = _require_nonempty(data)
    p = data.p
    gram = np.zeros((p, p))
    rhs = np.zeros(p)
    for idx in rows:
        xc = data.x[idx] - data.x[idx].mean(axis=0)
        gram += xc.T @ xc
        rhs += xc.T @ data.y[idx]
    return solve_gram(gram, rhs)


def arm_slope(data: TrialDataset, t: int) -> np.ndarray:
    """Within-arm least-squares slope for arm ``t`` (1-based)."""
    idx = np.flatnonzero(data.arm == t)
    if idx.size == 0:
        raise EmptyArm([f"arm {t} has no patients"])
    if idx.size < data.p + 1:
        raise TooFewPatients(
            f"arm {t} has {idx.size} patients, need at least p + 1 = {data.p + 1}"
        )
    xc = data.x[idx] - data.x[idx].mean(axis=0)
    return solve_gram(xc.T @ xc, xc.T @ data.y[idx])


def arm_slope_pooled_cov(data: TrialDataset, t: int) -> np.ndarray:
    """Arm-``t`` slope using the whole-sample covariate Gram matrix.

    ``(n / n_t) * G^{-1} * sum_{i in arm t} (x_i - xbar_t) y_i`` with
    ``G = sum_i (x_i - xbar)(x_i - xbar)'``. Exploits that covariates share
    one covariance across arms, avoiding an unstable within-arm inverse.
    """
    idx = np.flatnonzero(data.arm == t)
    if idx.size == 0:
        raise EmptyArm([f"arm {t} has no patients"])
    xc_all = data.x - data.x.mean(axis=0)
    xc_arm = data.x[idx] - data.x[idx].mean(axis=0)
    sol = solve_gram(xc_all.T @ xc_all, xc_arm.T @ data.y[idx])
    return (data.n / idx.size) * sol


def slope_matrix(data: TrialDataset, pooled_cov: bool = True) -> np.ndarray:
    """The p x k matrix of per-arm adjustment slopes."""
    fn = arm_slope_pooled_cov if pooled_cov else arm_slope
    cols = [fn(data, t) for t in range(1, data.k + 1)]
    return np.stack(cols, axis=1) if data.p else np.zeros((0, data.k))


def _build_fit(data: TrialDataset, b: np.ndarray, method: EstimatorMethod) -> EstimatorFit:
    rows = _require_nonempty(data)
    ybar, xbar_t, xbar = _arm_means(data, rows)
    theta = ybar - np.einsum("tp,tp->t", xbar_t - xbar, b.T) if data.p else ybar.copy()
    n_t = data.arm_counts()
    vcov = None
    if int(n_t.min()) >= 2:
        from .inference import _robust_vcov_parts  # deferred to avoid an import cycle

        try:
            vcov = _robust_vcov_parts(data, b, method)
        except SingularDesign:
            vcov = None
        else:
            # The plug-in can go indefinite on extreme data (tiny arms with
            # wildly heterogeneous slopes); a fit then carries no variance
            # rather than an unusable one.
            floor = -1e-8 * max(float(np.max(np.diag(vcov))), 0.0)
            if float(np.linalg.eigvalsh(vcov)[0]) < floor:
                vcov = None
    return EstimatorFit(
        method=method, theta_hat=theta, b_hat=b, vcov_hat=vcov, n_t=n_t, n=data.n
    )


def fit_anova(data: TrialDataset) -> EstimatorFit:
    """Unadjusted arm means."""
    return _build_fit(data, np.zeros((data.p, data.k)), EstimatorMethod.ANOVA)


def fit_linear_adjusted(data: TrialDataset, b_matrix) -> EstimatorFit:
    """Adjusted means for an arbitrary p x k slope matrix."""
    b = np.asarray(b_matrix, float)
    if b.ndim == 1:
        b = b.reshape(-1, 1) if data.k == 1 else b.reshape(data.p, data.k)
    if b.shape != (data.p, data.k):
        raise ValueError(f"b_matrix must be {data.p} x {data.k}, got {b.shape}")
    return _build_fit(data, b, EstimatorMethod.CUSTOM_LINEAR)


def fit_ancova(data: TrialDataset) -> EstimatorFit:
    """Homogeneous-slope adjustment: one pooled slope applied to every arm."""
    beta = pooled_slope(data)
    b = np.repeat(beta.reshape(-1, 1), data.k, axis=1)
    return _build_fit(data, b, EstimatorMethod.ANCOVA)


def fit_anhecova(data: TrialDataset, pooled_cov: bool = True) -> EstimatorFit:
    """Heterogeneous-slope adjustment: one slope per arm.

    ``pooled_cov=True`` (default) uses the whole-sample Gram variant of the
    slopes; ``pooled_cov=False`` uses plain within-arm least squares.
    """
    b = slope_matrix(data, pooled_cov=pooled_cov)
    method = (
        EstimatorMethod.ANHECOVA_POOLED_COV if pooled_cov else EstimatorMethod.ANHECOVA_PER_ARM
    )
    return _build_fit(data, b, method)
