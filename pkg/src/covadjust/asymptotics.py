"""Exact asymptotic formulas evaluated on finite discrete populations.

Everything here is computed in closed form over a :class:`PopulationSpec`
support, with no sampling error; the simulation harness validates its Monte
Carlo output against these values.

Notation (columns over arms t = 1..k):

* ``beta_t = Sigma_X^{-1} cov(X, Y^(t))`` are the population adjustment
  slopes; ``Bs`` is the p x k matrix with those columns and ``beta`` the
  pi-weighted pooled slope.
* ``v_simple(B)`` is the asymptotic covariance of the adjusted estimator
  with slope matrix ``B`` under simple randomization::

      diag{ pi_t^{-1} var(Y^(t) - b_t' X) } + Bs' Sig B + B' Sig Bs - B' Sig B

  minimized (in the PSD order) at ``B = Bs``.
* ``stratum_residual_means(B, z)`` is the diagonal matrix
  ``R(B, z) = diag{ pi_t^{-1} E[Y^(t) - theta_t - b_t'(X - mu_X) | Z = z] }``.
* Under a covariate-adaptive scheme whose within-stratum assignment
  proportions have asymptotic covariance ``Omega(z)`` (0 for permuted block
  and biased coin, ``diag(pi) - pi pi'`` for simple randomization),
  ``v_car(B) = v_simple(B) - E[ R(B, Z) (Omega_SR - Omega(Z)) R(B, Z) ]``.

``R(Bs, z) = 0`` whenever the covariates contain the dummies of all joint
stratum levels, which is what makes the heterogeneous-slope estimator's
distribution invariant to the randomization scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import ArmAllocation, PopulationSpec, _frozen_array
from .errors import BudgetExceeded, MissingOmega, UnknownStratum, ValidationError

#: Exact enumeration is limited to two arms and at most this many patients.
ENUMERATION_MAX_N = 14


@dataclass(frozen=True, eq=False)
class AsymptoticProfile:
    """Population moments that drive all asymptotic formulas."""

    theta: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray
    beta: np.ndarray
    pooled_beta: np.ndarray

    def __post_init__(self):
        for name in ("theta", "mu_x", "sigma_x", "beta", "pooled_beta"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), float))


@dataclass(frozen=True, eq=False)
class OmegaMap:
    """Per-stratum asymptotic covariance of assignment-proportion deviations."""

    entries: Mapping[str, np.ndarray]
    allocation: ArmAllocation

    def __post_init__(self):
        k = self.allocation.k
        fixed = {}
        for z, m in dict(self.entries).items():
            m = np.asarray(m, float)
            if m.shape != (k, k):
                raise ValidationError([f"Omega({z!r}) must be {k} x {k}"])
            if not np.allclose(m, m.T, atol=1e-10, rtol=0.0):
                raise ValidationError([f"Omega({z!r}) must be symmetric"])
            m = (m + m.T) / 2.0
            eigs = np.linalg.eigvalsh(m)
            if eigs[0] < -1e-9 * max(float(np.trace(m)), 1.0):
                raise ValidationError([f"Omega({z!r}) must be positive semidefinite"])
            fixed[str(z)] = _frozen_array(m, float)
        object.__setattr__(self, "entries", fixed)

    @property
    def omega_sr(self) -> np.ndarray:
        pi = self.allocation.pi
        return np.diag(pi) - np.outer(pi, pi)

    def omega(self, z: str) -> np.ndarray:
        try:
            return self.entries[str(z)]
        except KeyError:
            raise MissingOmega(f"no Omega matrix supplied for stratum {z!r}") from None

    @classmethod
    def simple_randomization(
        cls, allocation: ArmAllocation, strata: Sequence[str]
    ) -> "OmegaMap":
        pi = allocation.pi
        omega = np.diag(pi) - np.outer(pi, pi)
        return cls({z: omega for z in strata}, allocation)

    @classmethod
    def zero(cls, allocation: ArmAllocation, strata: Sequence[str]) -> "OmegaMap":
        """The permuted-block / biased-coin case: deviations vanish in the limit."""
        k = allocation.k
        return cls({z: np.zeros((k, k)) for z in strata}, allocation)


def _check_alloc(pop: PopulationSpec, allocation: ArmAllocation) -> None:
    if allocation.k != pop.k:
        raise ValidationError(
            [f"allocation has {allocation.k} arms but population has {pop.k}"]
        )


def population_moments(pop: PopulationSpec, allocation: ArmAllocation) -> AsymptoticProfile:
    """Exact theta, mu_X, Sigma_X, per-arm slopes, and the pooled slope."""
    _check_alloc(pop, allocation)
    w = pop.probs
    theta = w @ pop.y
    mu_x = w @ pop.x if pop.p else np.zeros(0)
    xc = pop.x - mu_x
    sigma = (xc * w[:, None]).T @ xc
    sigma = (sigma + sigma.T) / 2.0
    if pop.p:
        cov_xy = (xc * w[:, None]).T @ (pop.y - theta)
        beta = np.linalg.solve(sigma, cov_xy)
    else:
        beta = np.zeros((0, pop.k))
    return AsymptoticProfile(
        theta=theta,
        mu_x=mu_x,
        sigma_x=sigma,
        beta=beta,
        pooled_beta=beta @ allocation.pi,
    )


def _residual_variances(pop: PopulationSpec, b: np.ndarray) -> np.ndarray:
    """Exact var(Y^(t) - b_t' X) for each arm."""
    w = pop.probs
    resid = pop.y - (pop.x @ b if pop.p else 0.0)
    mean = w @ resid
    return w @ (resid - mean) ** 2


def _coerce_b(pop: PopulationSpec, b) -> np.ndarray:
    b = np.asarray(b, float)
    if b.ndim == 1:
        b = b.reshape(pop.p, pop.k) if b.size else np.zeros((pop.p, pop.k))
    if b.shape != (pop.p, pop.k):
        raise ValidationError([f"slope matrix must be {pop.p} x {pop.k}, got {b.shape}"])
    return b


def v_simple(pop: PopulationSpec, allocation: ArmAllocation, b) -> np.ndarray:
    """Asymptotic covariance of the slope-``b`` estimator under simple randomization."""
    _check_alloc(pop, allocation)
    b = _coerce_b(pop, b)
    moments = population_moments(pop, allocation)
    v = np.diag(_residual_variances(pop, b) / allocation.pi)
    if pop.p:
        sig = moments.sigma_x
        cross = moments.beta.T @ sig @ b
        v = v + cross + cross.T - b.T @ sig @ b
    return (v + v.T) / 2.0


def stratum_residual_means(
    pop: PopulationSpec, allocation: ArmAllocation, b, z: str
) -> np.ndarray:
    """The diagonal matrix R(b, z) of scaled stratum-conditional residual means."""
    _check_alloc(pop, allocation)
    b = _coerce_b(pop, b)
    mask = pop.z == str(z)
    if not np.any(mask):
        raise UnknownStratum(f"stratum {z!r} is not in the population support")
    moments = population_moments(pop, allocation)
    w = pop.probs[mask]
    w = w / w.sum()
    resid = pop.y[mask] - moments.theta
    if pop.p:
        resid = resid - ((pop.x[mask] - moments.mu_x) @ b)
    return np.diag((w @ resid) / allocation.pi)


def v_car(
    pop: PopulationSpec, allocation: ArmAllocation, b, omega: OmegaMap
) -> np.ndarray:
    """Asymptotic covariance under a covariate-adaptive scheme with the given Omega map."""
    _check_alloc(pop, allocation)
    b = _coerce_b(pop, b)
    omega_sr = np.diag(allocation.pi) - np.outer(allocation.pi, allocation.pi)
    v = v_simple(pop, allocation, b)
    for z in pop.strata:
        p_z = float(pop.probs[pop.z == z].sum())
        r = stratum_residual_means(pop, allocation, b, z)
        v = v - p_z * (r @ (omega_sr - omega.omega(z)) @ r)
    return (v + v.T) / 2.0


def contrast_variance_gaps(
    pop: PopulationSpec, allocation: ArmAllocation, t: int, s: int
) -> tuple[float, float]:
    """Closed-form asymptotic variance gaps for the contrast theta_t - theta_s.

    Returns (unadjusted minus heterogeneous, homogeneous minus heterogeneous),
    both nonnegative. The first vanishes iff ``pi_s beta_t + pi_t beta_s = 0``
    and ``(beta_t - beta_s)(1 - pi_t - pi_s) = 0``; the second iff the pooled
    slope equals ``(pi_s beta_t + pi_t beta_s) / (pi_t + pi_s)`` together with
    the same second condition.
    """
    _check_alloc(pop, allocation)
    if t == s:
        raise ValidationError(["contrast arms must differ"])
    moments = population_moments(pop, allocation)
    pi = allocation.pi
    sig = moments.sigma_x
    bt = moments.beta[:, t - 1]
    bs = moments.beta[:, s - 1]
    beta = moments.pooled_beta
    pt, ps = float(pi[t - 1]), float(pi[s - 1])

    def quad(v):
        return float(v @ sig @ v) if v.size else 0.0

    anova_gap = quad(ps * bt + pt * bs) / (pt * ps * (pt + ps)) + (
        (1.0 - pt - ps) / (pt + ps)
    ) * quad(bt - bs)
    ancova_gap = quad(bt - beta) / pt + quad(bs - beta) / ps - quad(bt - bs)
    return anova_gap, ancova_gap


def gram_domination_gap(m, allocation: ArmAllocation) -> float:
    """Minimum eigenvalue of ``diag(pi_t^{-1} m_t' m_t) - M' M``.

    Nonnegative for any matrix M with columns m_t and any probability vector
    pi; this inequality is what makes the heterogeneous-slope estimator
    optimal within the linearly adjusted family.
    """
    m = np.atleast_2d(np.asarray(m, float))
    if m.shape[1] != allocation.k:
        raise ValidationError([f"matrix must have {allocation.k} columns"])
    d = np.diag(np.einsum("pt,pt->t", m, m) / allocation.pi) - m.T @ m
    return float(np.linalg.eigvalsh((d + d.T) / 2.0)[0])


def exact_enumeration_vcov(
    pop: PopulationSpec, allocation: ArmAllocation, b
) -> np.ndarray:
    """Exact covariance of the slope-``b`` estimator over all assignments.

    The population rows are treated as a fixed sample of n patients whose only
    randomness is the simple-randomization assignment vector; assignments that
    leave an arm empty are discarded and the multinomial probabilities are
    renormalized over the retained outcomes (arm means are undefined
    otherwise). Support probabilities are ignored: every row is one patient.
    Limited to two arms and n <= 14.
    """
    _check_alloc(pop, allocation)
    b = _coerce_b(pop, b)
    n, k = pop.size, pop.k
    if k != 2 or n > ENUMERATION_MAX_N:
        raise BudgetExceeded(
            f"exact enumeration supports k = 2 and n <= {ENUMERATION_MAX_N}, got k={k}, n={n}"
        )
    idx = np.arange(1 << n, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n)) & 1).astype(float)
    n2 = bits.sum(axis=1)
    keep = (n2 > 0) & (n2 < n)
    bits, n2 = bits[keep], n2[keep]
    n1 = n - n2
    pi1, pi2 = float(allocation.pi[0]), float(allocation.pi[1])
    log_w = n1 * np.log(pi1) + n2 * np.log(pi2)
    w = np.exp(log_w - log_w.max())
    w /= w.sum()

    inv1, inv2 = 1.0 / n1, 1.0 / n2
    ybar1 = ((1.0 - bits) @ pop.y[:, 0]) * inv1
    ybar2 = (bits @ pop.y[:, 1]) * inv2
    theta = np.stack([ybar1, ybar2], axis=1)
    if pop.p:
        xbar = pop.x.mean(axis=0)
        xbar1 = ((1.0 - bits) @ pop.x) * inv1[:, None]
        xbar2 = (bits @ pop.x) * inv2[:, None]
        theta = theta - np.stack(
            [(xbar1 - xbar) @ b[:, 0], (xbar2 - xbar) @ b[:, 1]], axis=1
        )
    mean = w @ theta
    centered = theta - mean
    cov = (centered * w[:, None]).T @ centered
    return (cov + cov.T) / 2.0
