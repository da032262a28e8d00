"""Core domain types, dataset validation, and shared numeric primitives.

Conventions used throughout the package:

* Arms are labeled ``1..k`` in all public interfaces (0-based only inside
  array code).
* Stratum labels are opaque strings. Joint strata built from several
  categorical columns are joined with :data:`STRATUM_SEPARATOR` before they
  reach any other module.
* Sample variances and covariances use divisor ``n - 1`` (``n_t - 1`` within
  an arm).
* All types are immutable after construction and safe to share across
  threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    ArmLabelOutOfRange,
    EmptyArm,
    NonFiniteValue,
    SingularSigmaX,
    TooFewRows,
    UnknownStratum,
    ValidationError,
)

#: Reserved separator used to join multi-column stratum labels into one
#: joint label (and to split a joint label back into margin levels).
STRATUM_SEPARATOR = "|"


def _frozen_array(values, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def join_strata(parts: Sequence[str]) -> str:
    """Join the levels of several stratification columns into one label."""
    parts = [str(p) for p in parts]
    for p in parts:
        if STRATUM_SEPARATOR in p:
            raise ValidationError(
                [f"stratum level {p!r} contains the reserved separator {STRATUM_SEPARATOR!r}"]
            )
    return STRATUM_SEPARATOR.join(parts)


def split_stratum(label: str, n_parts: int) -> tuple[str, ...]:
    """Split a joint stratum label back into its margin levels."""
    parts = tuple(str(label).split(STRATUM_SEPARATOR))
    if len(parts) != n_parts:
        raise ValidationError(
            [f"stratum label {label!r} has {len(parts)} parts, expected {n_parts}"]
        )
    return parts


def _raise_violations(violations: list[tuple[type, str]]) -> None:
    """Raise the specific error class when possible, else the aggregate."""
    if not violations:
        return
    kinds = {cls for cls, _ in violations}
    messages = [msg for _, msg in violations]
    if len(kinds) == 1:
        raise kinds.pop()(messages)
    raise ValidationError(messages)


@dataclass(frozen=True, eq=False)
class ArmAllocation:
    """Target assignment proportions pi_1..pi_k, all strictly in (0, 1)."""

    pi: np.ndarray

    def __post_init__(self):
        pi = _frozen_array(self.pi, float)
        object.__setattr__(self, "pi", pi)
        violations = []
        if pi.ndim != 1 or pi.size < 2:
            violations.append((ValidationError, "allocation needs at least two arms"))
        else:
            if not np.all((pi > 0.0) & (pi < 1.0)):
                violations.append(
                    (ValidationError, "every proportion must lie strictly in (0, 1)")
                )
            if abs(float(pi.sum()) - 1.0) > 1e-12:
                violations.append(
                    (ValidationError, f"proportions must sum to 1, got {float(pi.sum())!r}")
                )
        _raise_violations(violations)

    @property
    def k(self) -> int:
        return int(self.pi.size)

    @classmethod
    def from_ratio(cls, ratio: Union[str, Sequence[float]]) -> "ArmAllocation":
        """Build from integer-style ratios, e.g. ``"1:2:2"`` or ``[1, 2, 2]``."""
        if isinstance(ratio, str):
            parts = [float(p) for p in ratio.replace(":", ",").split(",")]
        else:
            parts = [float(p) for p in ratio]
        total = sum(parts)
        if total <= 0:
            raise ValidationError(["allocation ratio must have positive total"])
        return cls(np.array(parts) / total)


class RandomizationKind(str, enum.Enum):
    SIMPLE = "simple"
    PERMUTED_BLOCK = "permuted_block"
    BIASED_COIN = "biased_coin"
    MINIMIZATION = "minimization"


@dataclass(frozen=True)
class Simple:
    """Complete randomization: draws are iid from the target proportions."""

    kind = RandomizationKind.SIMPLE


@dataclass(frozen=True)
class StratifiedPermutedBlock:
    """Permuted blocks within each stratum; block composition follows pi."""

    block_size: int
    kind = RandomizationKind.PERMUTED_BLOCK


@dataclass(frozen=True)
class StratifiedBiasedCoin:
    """Biased coin within each stratum, favoring under-represented arms.

    With probability ``bias`` the draw is restricted (pi-proportionally) to
    the arms whose within-stratum count deviation is minimal; otherwise the
    draw follows pi over all arms. Reduces to Efron's biased coin for two
    arms with equal allocation.
    """

    bias: float = 2.0 / 3.0
    kind = RandomizationKind.BIASED_COIN


@dataclass(frozen=True)
class PocockSimonMinimization:
    """Covariate-margin minimization with a biased best-arm probability.

    For each candidate arm the patient's level count is hypothetically
    incremented on every margin; the margin imbalance is the range over arms
    of count/pi, and the candidate score is the weighted sum over margins.
    The argmin arm (ties broken uniformly) is assigned with probability
    ``p_best``; the remainder is spread over the other arms proportionally
    to pi.
    """

    weights: tuple[float, ...] = (1.0,)
    p_best: float = 0.8
    kind = RandomizationKind.MINIMIZATION


SchemeKind = Union[Simple, StratifiedPermutedBlock, StratifiedBiasedCoin, PocockSimonMinimization]


@dataclass(frozen=True)
class SchemeSpec:
    """A randomization scheme plus its target allocation."""

    kind: SchemeKind
    allocation: ArmAllocation

    def __post_init__(self):
        violations = []
        kind = self.kind
        if isinstance(kind, StratifiedPermutedBlock):
            if kind.block_size < 1:
                violations.append((ValidationError, "block_size must be positive"))
            else:
                counts = kind.block_size * self.allocation.pi
                if not np.all(np.abs(counts - np.round(counts)) < 1e-9) or np.any(
                    np.round(counts) < 1
                ):
                    violations.append(
                        (
                            ValidationError,
                            "block_size times every allocation proportion must be a positive integer",
                        )
                    )
        elif isinstance(kind, StratifiedBiasedCoin):
            if not 0.0 < kind.bias < 1.0:
                violations.append((ValidationError, "bias must lie in (0, 1)"))
        elif isinstance(kind, PocockSimonMinimization):
            w = np.asarray(kind.weights, float)
            if w.size == 0 or np.any(w < 0) or not np.any(w > 0):
                violations.append(
                    (ValidationError, "margin weights must be >= 0 with at least one > 0")
                )
            if not 0.0 < kind.p_best <= 1.0:
                violations.append((ValidationError, "p_best must lie in (0, 1]"))
        _raise_violations(violations)

    @property
    def k(self) -> int:
        return self.allocation.k


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Observed trial data: one arm label, response, stratum, covariate row per patient.

    Structural invariants (lengths, finite values, labels in ``1..k``) are
    enforced here; arm non-emptiness is a per-operation precondition checked
    by the estimation entry points.
    """

    arm: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    k: int

    def __post_init__(self):
        arm = _frozen_array(self.arm, np.int64)
        y = _frozen_array(self.y, float)
        z = _frozen_array([str(v) for v in np.asarray(self.z).ravel()], object)
        x = np.asarray(self.x, float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x = _frozen_array(x, float)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", int(self.k))
        _raise_violations(self._structural_violations())

    def _structural_violations(self) -> list[tuple[type, str]]:
        violations: list[tuple[type, str]] = []
        n = self.arm.size
        if self.k < 1:
            violations.append((ValidationError, "arm count k must be >= 1"))
        for name, length in (("y", self.y.size), ("z", self.z.size), ("x", self.x.shape[0])):
            if length != n:
                violations.append(
                    (ValidationError, f"{name} has length {length}, expected {n}")
                )
        if n < self.k:
            violations.append(
                (ValidationError, f"need at least k={self.k} patients, got {n}")
            )
        bad = (self.arm < 1) | (self.arm > self.k)
        if np.any(bad):
            rows = np.flatnonzero(bad)[:5]
            violations.append(
                (
                    ArmLabelOutOfRange,
                    f"arm labels outside 1..{self.k} at rows {rows.tolist()}",
                )
            )
        if not np.all(np.isfinite(self.y)):
            rows = np.flatnonzero(~np.isfinite(self.y))[:5]
            violations.append((NonFiniteValue, f"non-finite y at rows {rows.tolist()}"))
        if self.x.size and not np.all(np.isfinite(self.x)):
            rows = np.flatnonzero(~np.isfinite(self.x).all(axis=1))[:5]
            violations.append((NonFiniteValue, f"non-finite x at rows {rows.tolist()}"))
        return violations

    @property
    def n(self) -> int:
        return int(self.arm.size)

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    def arm_counts(self) -> np.ndarray:
        return np.bincount(self.arm - 1, minlength=self.k).astype(np.int64)

    def arm_rows(self) -> list[np.ndarray]:
        """Row indices per arm, ordered by arm label."""
        return [np.flatnonzero(self.arm == t + 1) for t in range(self.k)]


def validate_dataset(
    arm,
    y,
    z=None,
    x=None,
    k: Optional[int] = None,
    require_nonempty_arms: bool = True,
) -> TrialDataset:
    """Validate raw rows and return a :class:`TrialDataset`.

    Collects every violated invariant into one diagnostic rather than failing
    on the first. ``require_nonempty_arms`` should stay True for estimation
    input; assignment-only workflows may relax it.
    """
    arm = np.asarray(arm)
    violations: list[tuple[type, str]] = []
    try:
        arm_int = arm.astype(np.int64)
        if not np.all(arm_int == np.asarray(arm, float)):
            violations.append((ArmLabelOutOfRange, "arm labels must be integers"))
    except (TypeError, ValueError):
        raise ArmLabelOutOfRange(["arm labels must be integers"]) from None
    n = arm_int.size
    if z is None:
        z = [""] * n
    if x is None:
        x = np.zeros((n, 0))
    if k is None:
        k = int(arm_int.max(initial=1))
    try:
        data = TrialDataset(arm=arm_int, y=y, z=z, x=x, k=k)
    except ValidationError as err:
        raise type(err)(list(getattr(err, "violations", [str(err)])) + [m for _, m in violations]) from None
    if require_nonempty_arms:
        counts = data.arm_counts()
        for t in np.flatnonzero(counts == 0):
            violations.append((EmptyArm, f"arm {t + 1} has no patients"))
    _raise_violations(violations)
    return data


class EstimatorMethod(str, enum.Enum):
    """Tags for the linearly adjusted estimator family."""

    ANOVA = "anova"
    ANCOVA = "ancova"
    ANHECOVA_PER_ARM = "anhecova_per_arm"
    ANHECOVA_POOLED_COV = "anhecova_pooled_cov"
    CUSTOM_LINEAR = "custom_linear"


@dataclass(frozen=True, eq=False)
class EstimatorFit:
    """Result of fitting one estimator from the linearly adjusted family.

    ``theta_hat`` holds the k mean estimates, ``b_hat`` the p x k slope
    matrix (column t is the adjustment slope for arm t), and ``vcov_hat``
    the robust estimate of the asymptotic covariance of
    ``sqrt(n) * (theta_hat - theta)``. ``vcov_hat`` is None when some arm
    has fewer than two patients or the slope plug-in is not computable.
    """

    method: EstimatorMethod
    theta_hat: np.ndarray
    b_hat: np.ndarray
    vcov_hat: Optional[np.ndarray]
    n_t: np.ndarray
    n: int

    def __post_init__(self):
        theta = _frozen_array(self.theta_hat, float)
        b = np.asarray(self.b_hat, float)
        if b.ndim == 1:
            b = b.reshape(-1, theta.size) if b.size else b.reshape(0, theta.size)
        b = _frozen_array(b, float)
        n_t = _frozen_array(self.n_t, np.int64)
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "b_hat", b)
        object.__setattr__(self, "n_t", n_t)
        k = theta.size
        violations = []
        if b.shape[1] != k:
            violations.append((ValidationError, f"b_hat must have {k} columns"))
        if n_t.size != k or int(n_t.sum()) != int(self.n):
            violations.append((ValidationError, "arm counts must sum to n"))
        if self.method is EstimatorMethod.ANOVA and b.size and np.any(b != 0.0):
            violations.append((ValidationError, "anova fit must carry a zero slope matrix"))
        if self.method is EstimatorMethod.ANCOVA and b.size:
            if not np.array_equal(b, np.repeat(b[:, :1], k, axis=1)):
                violations.append(
                    (ValidationError, "ancova fit must carry identical slope columns")
                )
        if self.vcov_hat is not None:
            v = np.asarray(self.vcov_hat, float)
            if v.shape != (k, k):
                violations.append((ValidationError, f"vcov_hat must be {k} x {k}"))
            elif not np.allclose(v, v.T, atol=1e-10, rtol=0.0):
                violations.append((ValidationError, "vcov_hat must be symmetric"))
            else:
                v = _frozen_array((v + v.T) / 2.0, float)
                object.__setattr__(self, "vcov_hat", v)
                floor = -1e-8 * max(float(np.max(np.diag(v))), 0.0)
                min_eig = float(np.linalg.eigvalsh(v)[0])
                if min_eig < floor - 1e-300:
                    violations.append(
                        (
                            ValidationError,
                            f"vcov_hat has eigenvalue {min_eig:.3e} below the PSD floor {floor:.3e}",
                        )
                    )
        _raise_violations(violations)

    @property
    def k(self) -> int:
        return int(self.theta_hat.size)


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """A finite discrete joint law of (potential responses, covariates, stratum).

    Row ``i`` has probability ``probs[i]``, potential response vector
    ``y[i]`` (one entry per arm), covariate vector ``x[i]``, and stratum
    label ``z[i]``. The covariate covariance matrix must be positive
    definite whenever ``p >= 1``.
    """

    probs: np.ndarray
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    x_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        probs = _frozen_array(self.probs, float)
        y = np.asarray(self.y, float)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        y = _frozen_array(y, float)
        x = np.asarray(self.x, float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x = _frozen_array(x, float)
        z = _frozen_array([str(v) for v in np.asarray(self.z).ravel()], object)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        if self.x_names is not None:
            object.__setattr__(self, "x_names", tuple(str(v) for v in self.x_names))
        violations = []
        m = probs.size
        if m == 0:
            violations.append((ValidationError, "support must be nonempty"))
        for name, length in (("y", y.shape[0]), ("x", x.shape[0]), ("z", z.size)):
            if length != m:
                violations.append((ValidationError, f"{name} has {length} rows, expected {m}"))
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            violations.append((ValidationError, "probabilities must lie in (0, 1]"))
        if m and abs(float(probs.sum()) - 1.0) > 1e-12:
            violations.append(
                (ValidationError, f"probabilities must sum to 1, got {float(probs.sum())!r}")
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            violations.append((NonFiniteValue, "population support must be finite"))
        if self.x_names is not None and len(self.x_names) != x.shape[1]:
            violations.append((ValidationError, "x_names length must match covariate count"))
        _raise_violations(violations)
        if x.shape[1] >= 1 and not violations:
            mu = probs @ x
            xc = x - mu
            sigma = (xc * probs[:, None]).T @ xc
            eigs = np.linalg.eigvalsh((sigma + sigma.T) / 2.0)
            if eigs[-1] <= 0.0 or eigs[0] < 1e-10 * eigs[-1]:
                raise SingularSigmaX(
                    "population covariate covariance matrix is not positive definite"
                )

    @property
    def k(self) -> int:
        return int(self.y.shape[1])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def size(self) -> int:
        return int(self.probs.size)

    @property
    def strata(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.z.tolist())))

    @classmethod
    def uniform(cls, y, x, z, x_names=None) -> "PopulationSpec":
        """Equal-probability support, e.g. a fixed sample viewed as a population."""
        m = np.asarray(y).shape[0]
        return cls(probs=np.full(m, 1.0 / m), y=y, x=x, z=z, x_names=x_names)


def sample_covariance(x) -> np.ndarray:
    """Sample covariance matrix of the rows of ``x`` with divisor n - 1."""
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n = x.shape[0]
    if n < 2:
        raise TooFewRows([f"sample covariance needs n >= 2 rows, got {n}"])
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / (n - 1)
    return (s + s.T) / 2.0


def z_dummy_matrix(
    labels: Iterable[str], levels: Optional[Sequence[str]] = None
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Full-rank dummy coding of stratum labels.

    Returns an n x (L - 1) indicator matrix dropping the first (reference)
    level of the sorted joint-level alphabet, plus the level list used. The
    reference level is absorbed by the per-arm intercepts of the working
    models, so together the coding spans all joint levels.
    """
    labels = [str(v) for v in labels]
    if levels is None:
        levels = sorted(set(labels))
    else:
        levels = [str(v) for v in levels]
        known = set(levels)
        for v in labels:
            if v not in known:
                raise UnknownStratum(f"stratum label {v!r} not in declared levels")
    index = {lev: j for j, lev in enumerate(levels)}
    out = np.zeros((len(labels), max(len(levels) - 1, 0)))
    for i, v in enumerate(labels):
        j = index[v]
        if j > 0:
            out[i, j - 1] = 1.0
    return out, tuple(levels)
