"""Command line interface: analyze, randomize, simulate, oracle.

File formats owned here:

* Trial CSV (UTF-8, header row required): columns ``arm`` (integer 1..k),
  ``y`` (float), zero or more ``z_<name>`` (strings, joined into one joint
  stratum with the reserved ``|`` separator), zero or more ``x_<name>``
  (floats).
* Population JSON: ``{"schema_version": 1, "k": ..., "x_names": [...],
  "support": [{"prob": ..., "y": [...], "x": [...], "z": "..."}]}``.
* Scenario JSON: see :data:`SCENARIO_SCHEMA`.
* Report CSV: fixed column order method, covariates, estimand, bias, sd,
  se, cp. All numeric CSV output uses shortest round-trip decimal formatting.

Exit codes: 0 success, 2 validation error, 3 numerical failure. Diagnostics
are emitted to stderr as JSON with a ``json_path`` locator when the failure
comes from a schema validation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional

import numpy as np
import jsonschema

from . import estimate as est_mod
from .data import (
    ArmAllocation,
    PocockSimonMinimization,
    PopulationSpec,
    SchemeSpec,
    Simple,
    StratifiedBiasedCoin,
    StratifiedPermutedBlock,
    join_strata,
    validate_dataset,
    z_dummy_matrix,
)
from .errors import (
    CovadjustError,
    DomainError,
    NotAContrast,
    SingularContrastCovariance,
    SingularDesign,
    SingularSigmaX,
    TooFewPatients,
    ValidationError,
)
from .inference import (
    Difference,
    LogOddsRatio,
    OddsRatio,
    Ratio,
    contrast_ci,
    treatment_effect_ci,
    two_sided_p,
)
from .randomize import assign_all, balance_report
from .asymptotics import (
    OmegaMap,
    contrast_variance_gaps,
    population_moments,
    v_car,
    v_simple,
)
from .simulate import (
    MethodSpec,
    ScenarioConfig,
    SimulationReport,
    SyntheticSpec,
    replicate_dataset,
    run_scenario,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (
    SingularDesign,
    SingularContrastCovariance,
    SingularSigmaX,
    TooFewPatients,
    DomainError,
    NotAContrast,
)

POPULATION_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "k", "support"],
    "properties": {
        "schema_version": {"const": 1},
        "k": {"type": "integer", "minimum": 1},
        "x_names": {"type": "array", "items": {"type": "string"}},
        "support": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["prob", "y", "z"],
                "properties": {
                    "prob": {"type": "number", "exclusiveMinimum": 0},
                    "y": {"type": "array", "items": {"type": "number"}},
                    "x": {"type": "array", "items": {"type": "number"}},
                    "z": {"type": "string"},
                },
            },
        },
    },
}

_SCHEME_SCHEMA = {
    "type": "object",
    "required": ["kind", "allocation"],
    "properties": {
        "kind": {"enum": ["simple", "permuted_block", "biased_coin", "minimization"]},
        "allocation": {"type": "array", "minItems": 2, "items": {"type": "number"}},
        "block_size": {"type": "integer", "minimum": 1},
        "bias": {"type": "number"},
        "p_best": {"type": "number"},
        "weights": {"type": "array", "items": {"type": "number"}},
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "population", "n", "scheme", "methods", "contrasts", "replications", "seed"],
    "properties": {
        "schema_version": {"const": 1},
        "population": {
            "oneOf": [
                POPULATION_SCHEMA,
                {
                    "type": "object",
                    "required": ["synthetic"],
                    "properties": {
                        "synthetic": {
                            "type": "object",
                            "required": ["kind", "seed"],
                            "properties": {
                                "kind": {"enum": ["interaction", "shift"]},
                                "seed": {"type": "integer"},
                                "size": {"type": "integer", "minimum": 10},
                                "zeta": {"type": "number"},
                                "r2": {"type": "number"},
                            },
                        }
                    },
                },
            ]
        },
        "sampling": {"enum": ["iid", "fixed"]},
        "n": {"type": "integer", "minimum": 2},
        "scheme": _SCHEME_SCHEMA,
        "methods": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["anova", "ancova", "anhecova", "anhecova_per_arm"]},
                    "covariates": {
                        "type": "array",
                        "items": {"type": ["string", "integer"]},
                    },
                    "include_z_dummies": {"type": "boolean"},
                    "label": {"type": "string"},
                },
            },
        },
        "contrasts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "array", "items": {"type": "number"}},
                    {
                        "type": "object",
                        "required": ["t", "s"],
                        "properties": {"t": {"type": "integer"}, "s": {"type": "integer"}},
                    },
                ]
            },
        },
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "alpha": {"type": "number"},
    },
}


class _CliFailure(Exception):
    def __init__(self, code: int, payload: dict):
        self.code = code
        self.payload = payload
        super().__init__(payload.get("message", ""))


def _fail(code: int, message: str, **extra) -> "_CliFailure":
    payload = {"error": True, "message": message}
    payload.update(extra)
    return _CliFailure(code, payload)


def _validate_schema(doc, schema, what: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = jsonschema.exceptions.best_match(errors)
        raise _fail(
            EXIT_VALIDATION,
            f"{what} failed schema validation: {first.message}",
            json_path=first.json_path,
        )


def _fmt(value: float) -> str:
    """Shortest round-trip decimal formatting."""
    return repr(float(value))


def _read_trial_csv(path: str):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise _fail(EXIT_VALIDATION, f"{path}: empty file (header row required)")
        fields = [f.strip() for f in reader.fieldnames]
        if "arm" not in fields or "y" not in fields:
            raise _fail(EXIT_VALIDATION, f"{path}: CSV must have 'arm' and 'y' columns")
        z_cols = [f for f in fields if f.startswith("z_")]
        x_cols = [f for f in fields if f.startswith("x_")]
        arms, ys, zs, xs = [], [], [], []
        for i, row in enumerate(reader):
            try:
                arms.append(int(float(row["arm"])))
                ys.append(float(row["y"]))
                xs.append([float(row[c]) for c in x_cols])
            except (TypeError, ValueError) as err:
                raise _fail(EXIT_VALIDATION, f"{path} row {i + 2}: {err}") from None
            zs.append(join_strata([row[c] for c in z_cols]) if z_cols else "")
    if not arms:
        raise _fail(EXIT_VALIDATION, f"{path}: no data rows")
    x = np.asarray(xs, float) if x_cols else np.zeros((len(arms), 0))
    return np.asarray(arms), np.asarray(ys, float), np.asarray(zs, object), x, x_cols, z_cols


def _population_from_json(doc) -> PopulationSpec:
    _validate_schema(doc, POPULATION_SCHEMA, "population")
    support = doc["support"]
    k = doc["k"]
    probs = [row["prob"] for row in support]
    ys = [row["y"] for row in support]
    xs = [row.get("x", []) for row in support]
    zs = [row["z"] for row in support]
    for i, y in enumerate(ys):
        if len(y) != k:
            raise _fail(
                EXIT_VALIDATION,
                f"support row {i} has {len(y)} potential responses, expected k={k}",
                json_path=f"$.support[{i}].y",
            )
    p = len(xs[0])
    for i, x in enumerate(xs):
        if len(x) != p:
            raise _fail(
                EXIT_VALIDATION,
                f"support row {i} has {len(x)} covariates, expected {p}",
                json_path=f"$.support[{i}].x",
            )
    x_names = tuple(doc["x_names"]) if "x_names" in doc else None
    return PopulationSpec(
        probs=np.asarray(probs, float),
        y=np.asarray(ys, float),
        x=np.asarray(xs, float) if p else np.zeros((len(xs), 0)),
        z=np.asarray(zs, object),
        x_names=x_names,
    )


def population_to_json(pop: PopulationSpec) -> dict:
    doc = {
        "schema_version": 1,
        "k": pop.k,
        "support": [
            {
                "prob": float(pop.probs[i]),
                "y": [float(v) for v in pop.y[i]],
                "x": [float(v) for v in pop.x[i]],
                "z": str(pop.z[i]),
            }
            for i in range(pop.size)
        ],
    }
    if pop.x_names is not None:
        doc["x_names"] = list(pop.x_names)
    return doc


def _scheme_from_json(doc) -> SchemeSpec:
    allocation = ArmAllocation.from_ratio(doc["allocation"])
    kind_name = doc["kind"]
    if kind_name == "simple":
        kind = Simple()
    elif kind_name == "permuted_block":
        if "block_size" not in doc:
            raise _fail(EXIT_VALIDATION, "permuted_block scheme needs block_size", json_path="$.scheme.block_size")
        kind = StratifiedPermutedBlock(block_size=doc["block_size"])
    elif kind_name == "biased_coin":
        kind = StratifiedBiasedCoin(bias=doc.get("bias", 2.0 / 3.0))
    else:
        kind = PocockSimonMinimization(
            weights=tuple(doc.get("weights", (1.0,))), p_best=doc.get("p_best", 0.8)
        )
    return SchemeSpec(kind=kind, allocation=allocation)


def _scenario_from_json(doc) -> ScenarioConfig:
    _validate_schema(doc, SCENARIO_SCHEMA, "scenario")
    pop_doc = doc["population"]
    if "synthetic" in pop_doc:
        syn = pop_doc["synthetic"]
        population = SyntheticSpec(
            kind=syn["kind"],
            seed=syn["seed"],
            size=syn.get("size", 481),
            zeta=syn.get("zeta", 0.0),
            r2=syn.get("r2", 0.05),
        )
        k = population.k
    else:
        population = _population_from_json(pop_doc)
        k = population.k
    contrasts = []
    for item in doc["contrasts"]:
        if isinstance(item, dict):
            c = [0.0] * k
            c[item["t"] - 1] = 1.0
            c[item["s"] - 1] = -1.0
            contrasts.append(tuple(c))
        else:
            contrasts.append(tuple(float(v) for v in item))
    methods = tuple(
        MethodSpec(
            kind=m["kind"],
            x_cols=tuple(m.get("covariates", ())),
            include_z_dummies=m.get("include_z_dummies", False),
            label=m.get("label"),
        )
        for m in doc["methods"]
    )
    return ScenarioConfig(
        population=population,
        scheme=_scheme_from_json(doc["scheme"]),
        n=doc["n"],
        methods=methods,
        contrasts=tuple(contrasts),
        replications=doc["replications"],
        seed=doc["seed"],
        alpha=doc.get("alpha", 0.05),
        sampling=doc.get("sampling", "iid"),
    )


def _write_json(doc, path: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False)
    if path:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        print(text)


def cmd_analyze(args) -> int:
    arm, y, z, x, x_cols, z_cols = _read_trial_csv(args.input)
    k = args.arms if args.arms else int(arm.max(initial=1))
    names = [c[2:] for c in x_cols]
    if args.covariates is not None:
        wanted = [w.strip() for w in args.covariates.split(",") if w.strip()]
        missing = [w for w in wanted if w not in names]
        if missing:
            raise _fail(EXIT_VALIDATION, f"unknown covariates {missing}; available: {names}")
        x = x[:, [names.index(w) for w in wanted]]
        names = wanted
    if args.include_z_dummies:
        if not z_cols:
            raise _fail(EXIT_VALIDATION, "--include-z-dummies needs z_* columns in the CSV")
        dummies, levels = z_dummy_matrix(z.tolist())
        x = np.column_stack([dummies, x]) if x.size else dummies
        names = [f"z={lev}" for lev in levels[1:]] + names
    data = validate_dataset(arm, y, z, x, k=k)
    if args.method == "anova":
        fit = est_mod.fit_anova(data)
    elif args.method == "ancova":
        fit = est_mod.fit_ancova(data)
    else:
        fit = est_mod.fit_anhecova(data, pooled_cov=(args.slopes == "pooled-cov"))
    if fit.vcov_hat is None:
        raise TooFewPatients("variance estimate unavailable (arm with < 2 patients)")
    pairs = args.contrast if args.contrast else [f"{t},1" for t in range(2, k + 1)]
    results = []
    for pair in pairs:
        try:
            t, s = (int(v) for v in pair.split(","))
        except ValueError:
            raise _fail(EXIT_VALIDATION, f"--contrast must be 't,s', got {pair!r}") from None
        if not (1 <= t <= k and 1 <= s <= k) or t == s:
            raise _fail(EXIT_VALIDATION, f"contrast arms must be distinct labels in 1..{k}")
        if args.effect == "diff":
            c = np.zeros(k)
            c[t - 1], c[s - 1] = 1.0, -1.0
            res = contrast_ci(fit, c, args.alpha)
            p_value = two_sided_p(res.estimate, res.se)
        else:
            effect_cls = {"ratio": Ratio, "odds-ratio": OddsRatio, "log-odds-ratio": LogOddsRatio}[args.effect]
            res = treatment_effect_ci(fit, effect_cls(t, s), args.alpha)
            null = 0.0 if args.effect == "log-odds-ratio" else 1.0
            if res.estimate > 0 and args.effect != "log-odds-ratio":
                p_value = two_sided_p(np.log(res.estimate), res.se / res.estimate)
            else:
                p_value = two_sided_p(res.estimate - null, res.se)
        results.append(
            {
                "t": t,
                "s": s,
                "effect": args.effect,
                "estimate": res.estimate,
                "se": res.se,
                "ci_low": res.ci_low,
                "ci_high": res.ci_high,
                "p_value": p_value,
            }
        )
    report = {
        "schema_version": 1,
        "method": args.method,
        "slopes": args.slopes if args.method == "anhecova" else None,
        "covariates": names,
        "n": data.n,
        "k": k,
        "arm_counts": data.arm_counts().tolist(),
        "alpha": args.alpha,
        "theta_hat": [float(v) for v in fit.theta_hat],
        "se_theta": [float(v) for v in np.sqrt(np.diag(fit.vcov_hat) / data.n)],
        "contrasts": results,
    }
    if args.output and args.output.endswith(".csv"):
        with open(args.output, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["method", "covariates", "effect", "t", "s", "estimate", "se", "ci_low", "ci_high", "p_value"]
            )
            for res in results:
                writer.writerow(
                    [args.method, "+".join(names) if names else "-", res["effect"], res["t"], res["s"]]
                    + [_fmt(res[kname]) for kname in ("estimate", "se", "ci_low", "ci_high", "p_value")]
                )
    else:
        _write_json(report, args.output)
    return EXIT_OK


def cmd_randomize(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise _fail(EXIT_VALIDATION, f"{args.input}: empty file")
        z_cols = [f for f in reader.fieldnames if f.startswith("z_")]
        rows = list(reader)
    margins = [tuple(row[c] for c in z_cols) for row in rows] if z_cols else [() for _ in rows]
    z = [join_strata(m) if m else "" for m in margins]
    allocation = ArmAllocation.from_ratio(args.alloc)
    if args.scheme == "simple":
        kind = Simple()
    elif args.scheme == "pb":
        kind = StratifiedPermutedBlock(block_size=args.block_size)
    elif args.scheme == "bc":
        kind = StratifiedBiasedCoin(bias=args.bias)
    else:
        weights = (
            tuple(float(v) for v in args.weights.split(","))
            if args.weights
            else tuple(1.0 for _ in (z_cols or [""]))
        )
        kind = PocockSimonMinimization(weights=weights, p_best=args.p_best)
    scheme = SchemeSpec(kind=kind, allocation=allocation)
    margin_arg = margins if (args.scheme == "ps" and z_cols) else None
    arms = assign_all(scheme, z, margins=margin_arg, seed=args.seed)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(list(rows[0].keys()) + ["arm"] if rows else ["arm"])
            for row, arm in zip(rows, arms):
                writer.writerow(list(row.values()) + [int(arm)])
    table = balance_report(arms, z, allocation)
    doc = {
        "schema_version": 1,
        "scheme": args.scheme,
        "allocation": [float(v) for v in allocation.pi],
        "seed": args.seed,
        "n": len(rows),
        "strata": [
            {
                "stratum": row.stratum,
                "n": row.n,
                "counts": list(row.counts),
                "deviations": [float(d) for d in row.deviations],
            }
            for row in table
        ],
    }
    _write_json(doc, args.report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as handle:
        doc = json.load(handle)
    config = _scenario_from_json(doc)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    report = run_scenario(config, n_workers=args.threads, keep_draws=bool(args.raw_draws))
    report.to_csv(args.output)
    if args.raw_draws:
        _write_raw_draws(report, config, args.raw_draws)
    if args.dump_dataset:
        rep_index, path = int(args.dump_dataset[0]), args.dump_dataset[1]
        _write_dataset_csv(replicate_dataset(config, rep_index), path)
    summary = {
        "schema_version": 1,
        "scheme": report.scheme_label,
        "n": report.n,
        "replications": report.replications,
        "seed": report.seed,
        "report": args.output,
        "rows": [
            {
                "method": r.method,
                "covariates": r.covariates,
                "estimand": r.estimand,
                "n_completed": r.n_completed,
                "n_failed": r.n_failed,
            }
            for r in report.rows
        ],
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _write_raw_draws(report: SimulationReport, config: ScenarioConfig, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "replication", "estimand", "estimate", "se", "covered"])
        for spec in config.methods:
            label = spec.label if spec.label else spec.kind
            block = report.draws[label]
            estimands = [r.estimand for r in report.rows if r.method == label]
            for j, estimand in enumerate(estimands):
                for r in range(report.replications):
                    value = block["est"][j, r]
                    if np.isnan(value):
                        continue
                    writer.writerow(
                        [
                            label,
                            r,
                            estimand,
                            _fmt(value),
                            _fmt(block["se"][j, r]),
                            int(block["cover"][j, r]),
                        ]
                    )


def _write_dataset_csv(data, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = ["arm", "y", "z_joint"] + [f"x_c{j}" for j in range(data.p)]
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow(
                [int(data.arm[i]), _fmt(data.y[i]), str(data.z[i])]
                + [_fmt(v) for v in data.x[i]]
            )


def cmd_oracle(args) -> int:
    with open(args.population, encoding="utf-8") as handle:
        doc = json.load(handle)
    pop = _population_from_json(doc)
    allocation = ArmAllocation.from_ratio(args.alloc)
    if allocation.k != pop.k:
        raise _fail(EXIT_VALIDATION, f"allocation has {allocation.k} arms, population has {pop.k}")
    moments = population_moments(pop, allocation)
    if args.b_file:
        with open(args.b_file, encoding="utf-8") as handle:
            b = np.asarray(json.load(handle), float)
    elif args.b == "zero":
        b = np.zeros((pop.p, pop.k))
    elif args.b == "pooled":
        b = np.repeat(moments.pooled_beta.reshape(-1, 1), pop.k, axis=1)
    else:
        b = moments.beta
    result = {
        "schema_version": 1,
        "k": pop.k,
        "p": pop.p,
        "allocation": [float(v) for v in allocation.pi],
        "theta": [float(v) for v in moments.theta],
        "mu_x": [float(v) for v in moments.mu_x],
        "sigma_x": moments.sigma_x.tolist(),
        "beta": moments.beta.tolist(),
        "pooled_beta": [float(v) for v in moments.pooled_beta],
        "b": b.tolist(),
        "v_simple": v_simple(pop, allocation, b).tolist(),
    }
    omega = None
    if args.omega_file:
        with open(args.omega_file, encoding="utf-8") as handle:
            odoc = json.load(handle)
        omega = OmegaMap({z: np.asarray(m, float) for z, m in odoc.items()}, allocation)
    elif args.omega == "simple":
        omega = OmegaMap.simple_randomization(allocation, pop.strata)
    elif args.omega == "zero":
        omega = OmegaMap.zero(allocation, pop.strata)
    if omega is not None:
        result["v_car"] = v_car(pop, allocation, b, omega).tolist()
    gaps = {}
    for t in range(1, pop.k + 1):
        for s in range(t + 1, pop.k + 1):
            anova_gap, ancova_gap = contrast_variance_gaps(pop, allocation, t, s)
            gaps[f"{t},{s}"] = {
                "anova_minus_anhecova": anova_gap,
                "ancova_minus_anhecova": ancova_gap,
            }
    result["contrast_variance_gaps"] = gaps
    _write_json(result, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covadjust",
        description="Covariate adjustment toolkit for randomized trials",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate treatment effects from a trial CSV")
    p.add_argument("--input", required=True, help="trial CSV (arm, y, z_*, x_* columns)")
    p.add_argument("--method", choices=["anova", "ancova", "anhecova"], default="anhecova")
    p.add_argument(
        "--slopes",
        choices=["pooled-cov", "per-arm"],
        default="pooled-cov",
        help="slope variant for anhecova (default pooled-cov)",
    )
    p.add_argument("--covariates", help="comma list of x_* names to adjust for (default all)")
    p.add_argument("--include-z-dummies", action="store_true", help="add joint-stratum dummies")
    p.add_argument("--contrast", action="append", help="arm pair 't,s'; repeatable")
    p.add_argument("--effect", choices=["diff", "ratio", "odds-ratio", "log-odds-ratio"], default="diff")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--arms", type=int, help="arm count k (default max arm label)")
    p.add_argument("--output", help="write report here (.json or .csv); default stdout JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("randomize", help="assign treatments for an enrollment CSV")
    p.add_argument("--input", required=True, help="CSV with optional z_* columns, enrollment order")
    p.add_argument("--scheme", choices=["simple", "pb", "bc", "ps"], required=True)
    p.add_argument("--alloc", required=True, help="allocation ratio, e.g. 1,1 or 1:2:2")
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--bias", type=float, default=2.0 / 3.0)
    p.add_argument("--p-best", type=float, default=0.8)
    p.add_argument("--weights", help="comma list of margin weights for ps (default 1 per z_* column)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", help="write input rows plus an arm column here")
    p.add_argument("--report", help="write the balance report JSON here (default stdout)")
    p.set_defaults(func=cmd_randomize)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario config")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output", required=True, help="report CSV path")
    p.add_argument("--raw-draws", help="also write per-replication draws CSV here")
    p.add_argument(
        "--dump-dataset",
        nargs=2,
        metavar=("REPLICATION", "PATH"),
        help="export one replication's simulated trial as an analyze-compatible CSV",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact asymptotic quantities for a population JSON")
    p.add_argument("--population", required=True, help="population JSON")
    p.add_argument("--alloc", required=True, help="allocation ratio, e.g. 1,2,2")
    p.add_argument("--b", choices=["zero", "pooled", "per-arm"], default="per-arm")
    p.add_argument("--b-file", help="JSON file with an explicit p x k slope matrix")
    p.add_argument("--omega", choices=["simple", "zero"], help="assignment covariance map")
    p.add_argument("--omega-file", help="JSON file mapping stratum label to k x k matrix")
    p.add_argument("--output", help="write JSON here (default stdout)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliFailure as err:
        print(json.dumps(err.payload), file=sys.stderr)
        return err.code
    except ValidationError as err:
        print(
            json.dumps({"error": True, "kind": type(err).__name__, "violations": err.violations}),
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    except _NUMERICAL_ERRORS as err:
        print(json.dumps({"error": True, "kind": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return EXIT_NUMERICAL
    except CovadjustError as err:
        print(json.dumps({"error": True, "kind": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(json.dumps({"error": True, "kind": "OSError", "message": str(err)}), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
