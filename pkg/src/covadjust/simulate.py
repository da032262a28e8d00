"""Seeded Monte Carlo harness for estimator comparison and coverage studies.

A scenario pairs a finite discrete population (inline or synthetic) with a
randomization scheme, a list of estimation methods, and a list of contrasts.
Each replication draws a sample, assigns treatments, fits every method, and
records contrast estimates, standard errors, and interval coverage against
the exact population truth. Two sampling modes are supported:

* ``"iid"``: n patients drawn with replacement from the population support;
* ``"fixed"``: the support rows are the sample, so the only randomness is the
  treatment assignment.

Replication r always uses RNG substreams keyed by (seed, r), which makes
reports bit-identical across worker-thread counts. Per-replication estimator
failures (for example a singular design at small n) are counted and excluded,
never silently dropped.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import estimate
from .data import (
    ArmAllocation,
    PocockSimonMinimization,
    PopulationSpec,
    SchemeSpec,
    Simple,
    TrialDataset,
    join_strata,
    split_stratum,
    z_dummy_matrix,
)
from .errors import CovadjustError, UnknownMargin, ValidationError
from .inference import contrast_ci
from .randomize import assign_all
from .asymptotics import population_moments
from .rng import replication_rngs, substream


def mc_error_of_sd(sd_estimate: float, replications: int) -> float:
    """Standard error of a Monte Carlo SD estimate, sd / sqrt(2 (R - 1))."""
    if replications < 2:
        raise ValidationError(["mc error needs at least 2 replications"])
    if sd_estimate < 0:
        raise ValidationError(["sd must be nonnegative"])
    return sd_estimate / np.sqrt(2.0 * (replications - 1))


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator for a synthetic finite population with two continuous covariates.

    The base response carries a weak linear signal in (u, w), calibrated so
    the population R-squared of the regression on (u, w) equals ``r2``.
    The randomization covariate is the joint discretization of w (three
    levels with proportions ``w_props``) and u (two levels, ``u_props``),
    labeled ``"w<i>|u<j>"``. Arms 2 and 3 are derived from the base response:

    * ``kind="interaction"``: arm 2 adds ``zeta * (u - mean(u))`` (no average
      effect, pure treatment-by-covariate interaction); arm 3 equals arm 2.
    * ``kind="shift"``: arms 2 and 3 add constant shifts of -1.3 and -1.0
      plus linear and quadratic covariate terms, so the linear working models
      are misspecified.
    """

    kind: str = "interaction"
    seed: int = 20240
    size: int = 481
    zeta: float = 0.0
    r2: float = 0.05
    base_slope_u: float = -0.25
    base_slope_w: float = 0.15
    w_props: tuple[float, float, float] = (0.24, 0.22, 0.54)
    u_props: tuple[float, float] = (0.77, 0.23)

    def __post_init__(self):
        if self.kind not in ("interaction", "shift"):
            raise ValidationError([f"unknown synthetic kind {self.kind!r}"])
        if not 0.0 < self.r2 < 1.0:
            raise ValidationError(["r2 must lie in (0, 1)"])
        for name, props in (("w_props", self.w_props), ("u_props", self.u_props)):
            if abs(sum(props) - 1.0) > 1e-9 or any(p <= 0 for p in props):
                raise ValidationError([f"{name} must be positive and sum to 1"])
        if self.size < 10:
            raise ValidationError(["synthetic population needs size >= 10"])

    @property
    def k(self) -> int:
        return 3

    def build(self) -> PopulationSpec:
        rng = substream(self.seed, 104729)
        u = rng.normal(0.0, 1.0, self.size)
        w = rng.normal(0.0, 1.0, self.size)
        noise = rng.normal(0.0, 1.0, self.size)
        linear = self.base_slope_u * u + self.base_slope_w * w
        # Orthogonalize the noise against span{1, u, w} and rescale so the
        # refitted R-squared of y1 on (u, w) equals r2 exactly.
        design = np.column_stack([np.ones(self.size), u, w])
        noise = noise - design @ np.linalg.lstsq(design, noise, rcond=None)[0]
        noise_sd = np.sqrt(linear.var() * (1.0 - self.r2) / (self.r2 * noise.var()))
        y1 = 10.0 + linear + noise_sd * noise
        w_levels = np.searchsorted(
            np.quantile(w, np.cumsum(self.w_props)[:-1]), w, side="right"
        )
        u_levels = np.searchsorted(
            np.quantile(u, np.cumsum(self.u_props)[:-1]), u, side="right"
        )
        z = np.array(
            [join_strata((f"w{i}", f"u{j}")) for i, j in zip(w_levels, u_levels)],
            dtype=object,
        )
        if self.kind == "interaction":
            y2 = y1 + self.zeta * (u - u.mean())
            y3 = y2.copy()
        else:
            u2c = u**2 - (u**2).mean()
            uc = u - u.mean()
            wc = w - w.mean()
            y2 = -1.3 + y1 - 0.5 * uc - 0.01 * u2c + 0.3 * wc
            y3 = -1.0 + y1 - 0.1 * uc - 0.01 * u2c - 0.1 * wc
        return PopulationSpec.uniform(
            y=np.column_stack([y1, y2, y3]),
            x=np.column_stack([u, w]),
            z=z,
            x_names=("u", "w"),
        )


_METHOD_KINDS = ("anova", "ancova", "anhecova", "anhecova_per_arm")


@dataclass(frozen=True)
class MethodSpec:
    """One estimator plus the covariate set it adjusts for.

    ``x_cols`` selects population covariate columns by index or by name;
    ``include_z_dummies`` prepends the full-rank dummy coding of the joint
    stratum levels.
    """

    kind: str
    x_cols: tuple = ()
    include_z_dummies: bool = False
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _METHOD_KINDS:
            raise ValidationError(
                [f"method kind must be one of {_METHOD_KINDS}, got {self.kind!r}"]
            )
        object.__setattr__(self, "x_cols", tuple(self.x_cols))

    def covariates_label(self, pop: PopulationSpec) -> str:
        parts = ["z"] if self.include_z_dummies else []
        for col in self.x_cols:
            if isinstance(col, str):
                parts.append(col)
            elif pop.x_names is not None:
                parts.append(pop.x_names[int(col)])
            else:
                parts.append(f"x{int(col)}")
        return "+".join(parts) if parts else "-"

    def display(self, pop: PopulationSpec) -> str:
        return self.label if self.label else self.kind


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one Monte Carlo study."""

    population: Union[PopulationSpec, SyntheticSpec]
    scheme: SchemeSpec
    n: int
    methods: tuple[MethodSpec, ...]
    contrasts: tuple[tuple[float, ...], ...]
    replications: int
    seed: int
    alpha: float = 0.05
    sampling: str = "iid"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(
            self, "contrasts", tuple(tuple(float(v) for v in c) for c in self.contrasts)
        )
        violations = []
        if self.replications < 1:
            violations.append("replications must be >= 1")
        if self.sampling not in ("iid", "fixed"):
            violations.append(f"sampling must be 'iid' or 'fixed', got {self.sampling!r}")
        if not 0.0 < self.alpha < 1.0:
            violations.append("alpha must lie in (0, 1)")
        if not self.methods:
            violations.append("at least one method is required")
        k = self.population.k
        if self.scheme.allocation.k != k:
            violations.append("scheme allocation arm count must match the population")
        for c in self.contrasts:
            if len(c) != k:
                violations.append(f"contrast {c} must have length {k}")
        if violations:
            raise ValidationError(violations)

    @property
    def allocation(self) -> ArmAllocation:
        return self.scheme.allocation


@dataclass(frozen=True)
class ReportRow:
    method: str
    covariates: str
    estimand: str
    bias: float
    sd: float
    avg_se: float
    coverage: float
    n_completed: int
    n_failed: int


@dataclass(frozen=True)
class SimulationReport:
    """Aggregated per-(method, estimand) metrics plus optional raw draws."""

    rows: tuple[ReportRow, ...]
    scheme_label: str
    allocation: tuple[float, ...]
    n: int
    replications: int
    seed: int
    alpha: float
    truth: dict = field(default_factory=dict)
    draws: Optional[dict] = None

    def row(self, method: str, estimand: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.estimand == estimand:
                return r
        raise KeyError(f"no row for method={method!r}, estimand={estimand!r}")

    def to_csv(self, path) -> None:
        """Write the report with the fixed column order used everywhere."""
        import csv

        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["method", "covariates", "estimand", "bias", "sd", "se", "cp"])
            for r in self.rows:
                writer.writerow(
                    [r.method, r.covariates, r.estimand]
                    + [repr(float(v)) for v in (r.bias, r.sd, r.avg_se, r.coverage)]
                )


def _contrast_label(c: tuple[float, ...]) -> str:
    arr = np.asarray(c)
    pos = np.flatnonzero(arr == 1.0)
    neg = np.flatnonzero(arr == -1.0)
    if pos.size == 1 and neg.size == 1 and np.count_nonzero(arr) == 2:
        return f"theta{pos[0] + 1}-theta{neg[0] + 1}"
    return "c[" + ",".join(repr(float(v)) for v in c) + "]"


def _scheme_label(scheme: SchemeSpec) -> str:
    return scheme.kind.kind.value


def _method_column(pop: PopulationSpec, spec: MethodSpec) -> np.ndarray:
    """Covariate matrix over the population support for one method."""
    cols = []
    if spec.include_z_dummies:
        dummies, _ = z_dummy_matrix(pop.z.tolist())
        cols.append(dummies)
    for col in spec.x_cols:
        if isinstance(col, str):
            if pop.x_names is None or col not in pop.x_names:
                raise ValidationError([f"population has no covariate named {col!r}"])
            j = pop.x_names.index(col)
        else:
            j = int(col)
            if not 0 <= j < pop.p:
                raise ValidationError([f"covariate index {j} out of range"])
        cols.append(pop.x[:, j : j + 1])
    if not cols:
        return np.zeros((pop.size, 0))
    return np.column_stack(cols)


def _fit_method(data: TrialDataset, kind: str):
    if kind == "anova":
        return estimate.fit_anova(data)
    if kind == "ancova":
        return estimate.fit_ancova(data)
    if kind == "anhecova":
        return estimate.fit_anhecova(data, pooled_cov=True)
    return estimate.fit_anhecova(data, pooled_cov=False)


def _margins_for(pop: PopulationSpec, scheme: SchemeSpec):
    """Per-support-row margin levels for minimization, split from the joint label."""
    kind = scheme.kind
    if not isinstance(kind, PocockSimonMinimization):
        return None
    m = len(kind.weights)
    if m == 1:
        return [(z,) for z in pop.z.tolist()]
    try:
        return [split_stratum(z, m) for z in pop.z.tolist()]
    except ValidationError as err:
        raise UnknownMargin(str(err)) from None


def run_scenario(
    config: ScenarioConfig, n_workers: int = 1, keep_draws: bool = False
) -> SimulationReport:
    """Run every replication of a scenario and aggregate the table metrics."""
    pop = (
        config.population.build()
        if isinstance(config.population, SyntheticSpec)
        else config.population
    )
    if config.sampling == "fixed" and config.n != pop.size:
        raise ValidationError(
            [f"fixed sampling requires n == population size ({pop.size}), got {config.n}"]
        )
    k = pop.k
    moments = population_moments(pop, config.allocation)
    contrasts = [np.asarray(c) for c in config.contrasts]
    truths = [float(c @ moments.theta) for c in contrasts]
    support_x = [_method_column(pop, spec) for spec in config.methods]
    margins = _margins_for(pop, config.scheme)
    n, big_r = config.n, config.replications
    n_methods, n_contrasts = len(config.methods), len(contrasts)

    est = np.full((n_methods, n_contrasts, big_r), np.nan)
    ses = np.full((n_methods, n_contrasts, big_r), np.nan)
    cover = np.full((n_methods, n_contrasts, big_r), np.nan)
    thetas = np.full((n_methods, big_r, k), np.nan)
    failed = np.zeros(n_methods, dtype=np.int64)

    fixed_idx = np.arange(pop.size)

    def one(r: int) -> None:
        sample_rng, assign_rng = replication_rngs(config.seed, r)
        if config.sampling == "fixed":
            idx = fixed_idx
        else:
            idx = sample_rng.choice(pop.size, size=n, p=pop.probs)
        z = pop.z[idx]
        rep_margins = [margins[i] for i in idx] if margins is not None else None
        arms = assign_all(config.scheme, z.tolist(), margins=rep_margins, rng=assign_rng)
        y_obs = pop.y[idx, arms - 1]
        for m, spec in enumerate(config.methods):
            x = support_x[m][idx]
            try:
                data = TrialDataset(arm=arms, y=y_obs, z=z, x=x, k=k)
                fit = _fit_method(data, spec.kind)
                thetas[m, r] = fit.theta_hat
                for j, c in enumerate(contrasts):
                    res = contrast_ci(fit, c, config.alpha)
                    est[m, j, r] = res.estimate
                    ses[m, j, r] = res.se
                    cover[m, j, r] = float(res.ci_low <= truths[j] <= res.ci_high)
            except CovadjustError:
                failed[m] += 1

    if n_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(one, range(big_r)))
    else:
        for r in range(big_r):
            one(r)

    rows = []
    for m, spec in enumerate(config.methods):
        method_label = spec.display(pop)
        cov_label = spec.covariates_label(pop)
        for j, c in enumerate(config.contrasts):
            vals = est[m, j]
            ok = ~np.isnan(vals)
            n_ok = int(ok.sum())
            if n_ok:
                bias = float(vals[ok].mean() - truths[j])
                sd = float(vals[ok].std(ddof=1)) if n_ok > 1 else 0.0
                avg_se = float(ses[m, j][ok].mean())
                cp = float(cover[m, j][ok].mean())
            else:
                bias = sd = avg_se = cp = float("nan")
            rows.append(
                ReportRow(
                    method=method_label,
                    covariates=cov_label,
                    estimand=_contrast_label(c),
                    bias=bias,
                    sd=sd,
                    avg_se=avg_se,
                    coverage=cp,
                    n_completed=n_ok,
                    n_failed=int(failed[m]),
                )
            )
    draws = None
    if keep_draws:
        draws = {}
        for m, spec in enumerate(config.methods):
            draws[spec.display(pop)] = {
                "theta": thetas[m],
                "est": est[m].copy(),
                "se": ses[m].copy(),
                "cover": cover[m].copy(),
            }
    return SimulationReport(
        rows=tuple(rows),
        scheme_label=_scheme_label(config.scheme),
        allocation=tuple(float(v) for v in config.allocation.pi),
        n=n,
        replications=big_r,
        seed=config.seed,
        alpha=config.alpha,
        truth={_contrast_label(c): t for c, t in zip(config.contrasts, truths)},
        draws=draws,
    )


def replicate_dataset(config: ScenarioConfig, r: int, method_index: int = 0):
    """Rebuild the exact trial dataset seen by one replication and method.

    Useful for exporting a simulated dataset for external re-analysis: the
    returned dataset depends only on (config, r), never on how many
    replications were run.
    """
    pop = (
        config.population.build()
        if isinstance(config.population, SyntheticSpec)
        else config.population
    )
    sample_rng, assign_rng = replication_rngs(config.seed, r)
    if config.sampling == "fixed":
        idx = np.arange(pop.size)
    else:
        idx = sample_rng.choice(pop.size, size=config.n, p=pop.probs)
    z = pop.z[idx]
    margins = _margins_for(pop, config.scheme)
    rep_margins = [margins[i] for i in idx] if margins is not None else None
    arms = assign_all(config.scheme, z.tolist(), margins=rep_margins, rng=assign_rng)
    y_obs = pop.y[idx, arms - 1]
    x = _method_column(pop, config.methods[method_index])[idx]
    return TrialDataset(arm=arms, y=y_obs, z=z, x=x, k=pop.k)


@dataclass(frozen=True)
class SweepRow:
    zeta: float
    method: str
    sd: float
    mc_error: float


def sweep_interaction(
    base_config: ScenarioConfig,
    zeta_grid: Sequence[float],
    n_workers: int = 1,
) -> list[SweepRow]:
    """Estimator SDs along a grid of treatment-by-covariate interaction strengths.

    Requires a synthetic interaction population; each grid point rebuilds the
    population with the new interaction coefficient and reruns the scenario.
    Only the first configured contrast is tracked.
    """
    if not isinstance(base_config.population, SyntheticSpec):
        raise ValidationError(["sweep_interaction needs a synthetic population spec"])
    if base_config.population.kind != "interaction":
        raise ValidationError(["sweep_interaction needs the interaction-form population"])
    estimand = _contrast_label(base_config.contrasts[0])
    rows = []
    for zeta in zeta_grid:
        config = replace(
            base_config, population=replace(base_config.population, zeta=float(zeta))
        )
        report = run_scenario(config, n_workers=n_workers)
        for spec in config.methods:
            label = spec.label if spec.label else spec.kind
            row = report.row(label, estimand)
            rows.append(
                SweepRow(
                    zeta=float(zeta),
                    method=label,
                    sd=row.sd,
                    mc_error=mc_error_of_sd(row.sd, row.n_completed),
                )
            )
    return rows


def sweep_to_csv(rows: Sequence[SweepRow], path) -> None:
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["zeta", "method", "sd", "mc_error"])
        for row in rows:
            writer.writerow(
                [repr(float(row.zeta)), row.method, repr(float(row.sd)), repr(float(row.mc_error))]
            )
