"""Shared dataset and population builders for the test suite."""

from __future__ import annotations

import numpy as np

import covadjust as ca


def toy_dataset() -> ca.TrialDataset:
    """Four patients, two arms: arm 1 has (y, x) = (1, 0), (3, 2); arm 2 has (2, 1), (4, 3).

    Frozen hand-computed values: pooled slope 1, per-arm slopes (1, 1),
    whole-sample-Gram slopes (0.8, 0.8), adjusted means (2.5, 2.5) with unit
    slopes, and sample covariate variance 5/3.
    """
    return ca.validate_dataset(
        arm=[1, 1, 2, 2], y=[1.0, 3.0, 2.0, 4.0], z=None, x=[[0.0], [2.0], [1.0], [3.0]]
    )


def acceptance_population() -> ca.PopulationSpec:
    """Two strata (equal mass), three arms with strongly heterogeneous slopes.

    The stratum effect is 0 in stratum a and 3 in stratum b; arm t scales it
    by (1, 2.2, 0.1) and adds two-point noise of amplitude (0.8, 1.2, 1.0).
    Covariate x is the stratum-b indicator, so the covariates span all joint
    stratum levels and the population slope of arm t is 3 * multiplier.
    """
    rows_p, rows_y, rows_x, rows_z = [], [], [], []
    for j, (label, mass, g) in enumerate(zip(["a", "b"], [0.5, 0.5], [0.0, 3.0])):
        for eps in (-1.0, 1.0):
            rows_p.append(mass * 0.5)
            rows_y.append(
                [1.0 + g + 0.8 * eps, 2.0 + 2.2 * g + 1.2 * eps, 0.5 + 0.1 * g + 1.0 * eps]
            )
            rows_x.append([1.0 if j == 1 else 0.0])
            rows_z.append(label)
    return ca.PopulationSpec(probs=rows_p, y=rows_y, x=rows_x, z=rows_z, x_names=("zb",))


def null_population() -> ca.PopulationSpec:
    """All three arms share one potential response: no effect of any kind."""
    rows_p, rows_y, rows_x, rows_z = [], [], [], []
    for j, (label, mass, g) in enumerate(zip(["a", "b"], [0.5, 0.5], [0.0, 3.0])):
        for eps in (-1.0, 1.0):
            rows_p.append(mass * 0.5)
            y = 1.0 + g + 0.8 * eps
            rows_y.append([y, y, y])
            rows_x.append([1.0 if j == 1 else 0.0])
            rows_z.append(label)
    return ca.PopulationSpec(probs=rows_p, y=rows_y, x=rows_x, z=rows_z, x_names=("zb",))


def equal_gap_population() -> ca.PopulationSpec:
    """Two arms, equal allocation, slopes beta_2 = -beta_1.

    Satisfies both closed-form equality conditions, so the asymptotic
    variance gaps of the unadjusted and homogeneous-slope estimators over
    the heterogeneous-slope one are exactly zero.
    """
    rows_p, rows_y, rows_x, rows_z = [], [], [], []
    for x in (-1.0, 1.0):
        for eps in (-1.0, 1.0):
            rows_p.append(0.25)
            rows_y.append([x + 0.5 * eps, -x + 0.5 * eps])
            rows_x.append([x])
            rows_z.append("s")
    return ca.PopulationSpec(probs=rows_p, y=rows_y, x=rows_x, z=rows_z)


def random_dataset(rng: np.random.Generator, n=None, p=None, k=None) -> ca.TrialDataset:
    """A well-conditioned random trial dataset with every arm populated."""
    k = int(k if k is not None else rng.integers(2, 5))
    p = int(p if p is not None else rng.integers(1, 6))
    min_n = k * (p + 3)
    n = int(n if n is not None else rng.integers(min_n, 201))
    n = max(n, min_n)
    arm = np.concatenate([np.tile(np.arange(1, k + 1), p + 3), rng.integers(1, k + 1, n - min_n)])
    rng.shuffle(arm)
    x = rng.normal(size=(n, p))
    slopes = rng.normal(size=(p, k))
    intercepts = rng.normal(size=k) * 2.0
    y = intercepts[arm - 1] + np.einsum("ip,ip->i", x, slopes[:, arm - 1].T)
    y = y + rng.normal(scale=0.5, size=n)
    z = np.where(x[:, 0] > 0, "hi", "lo")
    return ca.TrialDataset(arm=arm, y=y, z=z, x=x, k=k)


def random_population(
    rng: np.random.Generator, k=None, p=None, with_z_dummies=False
) -> ca.PopulationSpec:
    """A random finite-support population with nondegenerate covariates.

    With ``with_z_dummies=True`` the covariate vector starts with the dummy
    coding of the stratum label (all joint levels spanned), as the
    scheme-invariance results require.
    """
    k = int(k if k is not None else rng.integers(2, 5))
    n_strata = int(rng.integers(2, 4))
    strata = [f"s{j}" for j in range(n_strata)]
    rows_per = int(rng.integers(2, 4))
    m = n_strata * rows_per
    p_extra = int(p if p is not None else rng.integers(1, 3))
    probs = rng.dirichlet(np.ones(m) * 3.0)
    probs = probs / probs.sum()
    z = np.repeat(strata, rows_per)
    extra = rng.normal(size=(m, p_extra))
    if with_z_dummies:
        dummies, _ = ca.z_dummy_matrix(z.tolist())
        x = np.column_stack([dummies, extra])
    else:
        x = extra
    y = rng.normal(size=(m, k)) * 2.0 + rng.normal(size=(1, k))
    return ca.PopulationSpec(probs=probs, y=y, x=x, z=z)


def random_allocation(rng: np.random.Generator, k: int) -> ca.ArmAllocation:
    w = rng.uniform(0.5, 2.0, size=k)
    return ca.ArmAllocation(w / w.sum())


def reference_interaction_ols(data: ca.TrialDataset) -> np.ndarray:
    """Independent oracle: OLS arm coefficients of the full-interaction model.

    Design columns are the k arm indicators followed by, for each arm, the
    covariates centered at the whole-sample mean and zeroed outside that arm.
    """
    xc = data.x - data.x.mean(axis=0)
    cols = [(data.arm == t).astype(float).reshape(-1, 1) for t in range(1, data.k + 1)]
    for t in range(1, data.k + 1):
        cols.append(xc * (data.arm == t).astype(float)[:, None])
    design = np.hstack(cols)
    coef, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    return coef[: data.k]


def reference_homogeneous_ols(data: ca.TrialDataset) -> np.ndarray:
    """Independent oracle: OLS arm coefficients of the no-interaction model."""
    xc = data.x - data.x.mean(axis=0)
    cols = [(data.arm == t).astype(float).reshape(-1, 1) for t in range(1, data.k + 1)]
    cols.append(xc)
    design = np.hstack(cols)
    coef, *_ = np.linalg.lstsq(design, data.y, rcond=None)
    return coef[: data.k]
