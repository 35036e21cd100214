"""Study orchestration: scenario catalog, replication engine, and report emission.

A study crosses scenarios with MT arm sizes and, per cell, runs N_sim
replications. Each replication generates a dataset, builds all required
weight sets, runs the frequentist fits and the Bayesian samplers, and logs one
estimate per method. Per-replication seeds are derived from the master seed
by a counter-based scheme (cell index, replication index, method slot), so
results are independent of worker scheduling and any single replication can
be reproduced in isolation.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bayesborrow, fullmatch, metrics, propensity, survfit, truthoracle
from .datagen import ScenarioSpec, gen_dataset
from .exceptions import ConfigError, EstimationError, HybridControlError

#: Fixed method slots; the position doubles as the seed-derivation ordinal.
METHOD_ORDER = (
    "NB", "FB", "NPS", "NPD", "IPS", "IPD", "WPS", "WPD",
    "SFM.Cox", "SIPTW.Cox", "JFM.Cox", "JIPTW.Cox",
    "SFM.AFT", "SIPTW.AFT", "JFM.AFT", "JIPTW.AFT",
)
BAYES_METHODS = bayesborrow.VARIANTS
FREQ_FAMILIES = {"SFM": fullmatch.separate_fm, "JFM": fullmatch.joint_fm,
                 "SIPTW": propensity.separate_iptw, "JIPTW": propensity.joint_iptw}

_SIM_DOMAIN = 0
_TRUTH_DOMAIN = 1


def builtin_scenarios() -> list[ScenarioSpec]:
    """The four-scenario catalog of conditional hazard-ratio contrasts."""
    log = math.log
    return [
        ScenarioSpec(name="1", beta=(0.0, 0.0, 0.0)),
        ScenarioSpec(name="2", beta=(log(0.5), 0.0, 0.0)),
        ScenarioSpec(name="3", beta=(log(0.5), log(3.0), log(3.0))),
        ScenarioSpec(name="4", beta=(log(0.5), log(12.0), log(3.0))),
    ]


def normalize_method(name: str) -> str:
    cleaned = name.strip().replace("-", ".")
    for known in METHOD_ORDER:
        if cleaned.lower() == known.lower():
            return known
    raise ConfigError(f"unknown method {name!r}; expected one of {METHOD_ORDER}")


def method_group(method: str) -> str:
    if method in BAYES_METHODS:
        return "bayes"
    return "aft" if method.endswith(".AFT") else "cox"


@dataclass
class StudyConfig:
    """Everything needed to reproduce a study byte for byte."""

    scenarios: list[ScenarioSpec] = field(default_factory=builtin_scenarios)
    mt_sizes: tuple[int, ...] = (16, 40)
    n_sim: int = 500
    seed: int = 0
    methods: tuple[str, ...] = METHOD_ORDER
    oracle_reps: int = 10_000
    bayes_chains: int = 3
    bayes_adapt: int = 1000
    bayes_sample: int = 2000
    workers: int = 1
    max_failure_fraction: float = 0.25
    full_ps_model: bool = False
    same_form: str = "pooled"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        for s in self.scenarios:
            s.validate()
        if len({s.name for s in self.scenarios}) != len(self.scenarios):
            raise ConfigError("scenario names must be unique")
        if self.n_sim < 2:
            raise ConfigError("n_sim must be >= 2")
        if not self.methods:
            raise ConfigError("method list must not be empty")
        self.methods = tuple(normalize_method(m) for m in self.methods)
        if not self.mt_sizes:
            raise ConfigError("mt_sizes must not be empty")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 <= self.max_failure_fraction <= 1.0:
            raise ConfigError("max_failure_fraction must lie in [0, 1]")
        if self.same_form not in ("pooled", "weighted"):
            raise ConfigError("same_form must be 'pooled' or 'weighted'")

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_dict() for s in self.scenarios],
            "mt_sizes": list(self.mt_sizes),
            "n_sim": self.n_sim,
            "seed": self.seed,
            "methods": list(self.methods),
            "oracle_reps": self.oracle_reps,
            "bayes": {"chains": self.bayes_chains, "adapt": self.bayes_adapt,
                      "sample": self.bayes_sample},
            "workers": self.workers,
            "max_failure_fraction": self.max_failure_fraction,
            "full_ps_model": self.full_ps_model,
            "same_form": self.same_form,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        try:
            scenarios = d.get("scenarios")
            if scenarios is None:
                specs = builtin_scenarios()
            else:
                specs = []
                catalog = {s.name: s for s in builtin_scenarios()}
                for item in scenarios:
                    if isinstance(item, (int, str)) and str(item) in catalog:
                        specs.append(catalog[str(item)])
                    elif isinstance(item, dict):
                        specs.append(ScenarioSpec.from_dict(item))
                    else:
                        raise ConfigError(f"unrecognized scenario entry {item!r}")
            bayes = d.get("bayes", {})
            cfg = cls(
                scenarios=specs,
                mt_sizes=tuple(int(v) for v in d.get("mt_sizes", (16, 40))),
                n_sim=int(d.get("n_sim", 500)),
                seed=int(d.get("seed", 0)),
                methods=tuple(d.get("methods", METHOD_ORDER)),
                oracle_reps=int(d.get("oracle_reps", 10_000)),
                bayes_chains=int(bayes.get("chains", 3)),
                bayes_adapt=int(bayes.get("adapt", 1000)),
                bayes_sample=int(bayes.get("sample", 2000)),
                workers=int(d.get("workers", 1)),
                max_failure_fraction=float(d.get("max_failure_fraction", 0.25)),
                full_ps_model=bool(d.get("full_ps_model", False)),
                same_form=str(d.get("same_form", "pooled")),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid study config: {exc}") from exc
        cfg.validate()
        return cfg


@dataclass
class StudyReport:
    """Config echo, truths, per-cell summaries, and the per-replication log."""

    config: dict
    truths: dict[str, truthoracle.TruthResult]
    summaries: list[dict]
    estimates: list[dict]

    def failure_fractions(self) -> dict[tuple, float]:
        out = {}
        n_sim = self.config["n_sim"]
        for row in self.summaries:
            out[(row["scenario"], row["mt_size"], row["method"])] = row["n_failed"] / n_sim
        return out


def _replication(scenario: ScenarioSpec, methods, master_seed: int, cell_idx: int,
                 rep_idx: int, bayes_cfg: tuple[int, int, int], full_ps_model: bool,
                 same_form: str) -> list[dict]:
    """Run one replication; returns one row per method."""
    chains, adapt, sample = bayes_cfg
    data = gen_dataset(scenario, np.random.SeedSequence(
        master_seed, spawn_key=(_SIM_DOMAIN, cell_idx, rep_idx)))
    rows = []

    families = sorted({m.split(".")[0] for m in methods if m not in BAYES_METHODS})
    weight_sets = {}
    family_errors = {}
    for family in families:
        try:
            weight_sets[family] = FREQ_FAMILIES[family](data, full_ps_model)
        except HybridControlError as exc:
            family_errors[family] = f"failed:{type(exc).__name__}"

    bayes_requested = [m for m in methods if m in BAYES_METHODS]
    need_nb = bool(bayes_requested)
    posterior = {}
    bayes_errors = {}
    run_variants = sorted(set(bayes_requested) | ({"NB"} if need_nb else set()),
                          key=METHOD_ORDER.index)
    for variant in run_variants:
        seed = np.random.SeedSequence(
            master_seed,
            spawn_key=(_SIM_DOMAIN, cell_idx, rep_idx, 2 + METHOD_ORDER.index(variant)))
        try:
            posterior[variant] = bayesborrow.mcmc_run(
                data, variant, chains=chains, adapt_iters=adapt, sample_iters=sample,
                seed=seed, same_form=same_form)
        except HybridControlError as exc:
            bayes_errors[variant] = f"failed:{type(exc).__name__}"

    nb_var = None
    if "NB" in posterior:
        _, nb_var = posterior["NB"].summary()

    for method in methods:
        row = {"scenario": scenario.name, "mt_size": scenario.n_mt, "method": method,
               "rep": rep_idx, "estimate": float("nan"), "ess": float("nan"),
               "status": "ok"}
        if method in BAYES_METHODS:
            if method in bayes_errors:
                row["status"] = bayes_errors[method]
            else:
                result = posterior[method]
                mean, var = result.summary()
                row["estimate"] = mean
                rhat = result.rhat.get("delta", float("nan"))
                if np.isfinite(rhat) and rhat > 1.1:
                    row["status"] = "failed:MixingFailure"
                elif method != "NB" and nb_var is not None and var > 0 and nb_var > 0:
                    row["ess"] = metrics.ess_bayesian(var, nb_var,
                                                      scenario.n_mt + scenario.n_mc)
        else:
            family, model = method.split(".")
            if family in family_errors:
                row["status"] = family_errors[family]
            else:
                try:
                    fit = survfit.estimate_frequentist(data, weight_sets[family],
                                                       model.lower())
                    row["estimate"] = fit.log_hr
                    row["ess"] = weight_sets[family].htd_ess
                except HybridControlError as exc:
                    row["status"] = f"failed:{type(exc).__name__}"
        rows.append(row)
    return rows


def _replication_task(args):
    return _replication(*args)


def compute_truths(config: StudyConfig) -> dict[str, truthoracle.TruthResult]:
    """One oracle run per distinct truth key; scenarios sharing beta1 reuse it."""
    truths: dict[str, truthoracle.TruthResult] = {}
    by_key: dict[str, truthoracle.TruthResult] = {}
    for idx, scenario in enumerate(config.scenarios):
        key = truthoracle.truth_key(scenario)
        if key not in by_key:
            rng = np.random.default_rng(np.random.SeedSequence(
                config.seed, spawn_key=(_TRUTH_DOMAIN, idx)))
            by_key[key] = truthoracle.true_marginal_loghr(
                scenario, reps=config.oracle_reps, rng=rng)
        src = by_key[key]
        truths[scenario.name] = truthoracle.TruthResult(
            scenario=scenario.name, theta0=src.theta0, reps=src.reps, mcse=src.mcse)
    return truths


def run_study(config: StudyConfig,
              truths: dict[str, truthoracle.TruthResult] | None = None) -> StudyReport:
    """Run every (scenario, MT size) cell for N_sim replications and aggregate."""
    config.validate()
    if truths is None:
        truths = compute_truths(config)

    cells = []
    for si, scenario in enumerate(config.scenarios):
        for mi, mt in enumerate(config.mt_sizes):
            cells.append((si * len(config.mt_sizes) + mi, scenario.with_mt_size(mt)))

    bayes_cfg = (config.bayes_chains, config.bayes_adapt, config.bayes_sample)
    tasks = [(cell_scenario, config.methods, config.seed, cell_idx, rep,
              bayes_cfg, config.full_ps_model, config.same_form)
             for cell_idx, cell_scenario in cells
             for rep in range(config.n_sim)]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_task = list(pool.map(_replication_task, tasks,
                                     chunksize=max(1, len(tasks) // (config.workers * 8))))
    else:
        per_task = [_replication_task(t) for t in tasks]

    estimates = [row for rows in per_task for row in rows]

    summaries = []
    for cell_idx, cell_scenario in cells:
        theta0 = truths[cell_scenario.name].theta0
        for method in config.methods:
            rows = [r for r in estimates
                    if r["scenario"] == cell_scenario.name
                    and r["mt_size"] == cell_scenario.n_mt and r["method"] == method]
            ok = [r for r in rows if r["status"] == "ok"]
            est = np.array([r["estimate"] for r in ok])
            if est.size >= 2:
                bias, variance, mse = metrics.summarize(est, theta0)
            else:
                bias = variance = mse = float("nan")
            ess_vals = np.array([r["ess"] for r in ok], dtype=float)
            mean_ess = (float(np.nanmean(ess_vals))
                        if ess_vals.size and not np.all(np.isnan(ess_vals))
                        else float("nan"))
            summaries.append({
                "scenario": cell_scenario.name, "mt_size": cell_scenario.n_mt,
                "method": method, "bias": bias, "variance": variance, "mse": mse,
                "ess": mean_ess, "n_used": len(ok), "n_failed": len(rows) - len(ok),
            })

    return StudyReport(config=config.to_dict(), truths=truths,
                       summaries=summaries, estimates=estimates)


_GROUP_TITLES = (("bayes", "Bayesian Weibull"), ("aft", "Frequentist Weibull (AFT)"),
                 ("cox", "Frequentist (Cox)"))
_METRIC_COLUMNS = ("bias", "variance", "mse", "ess")


def best_methods(rows) -> dict[tuple, str]:
    """Winners per (scenario, mt_size, group, metric): min for bias/variance/mse, max ESS."""
    winners: dict[tuple, str] = {}
    cells = sorted({(r["scenario"], r["mt_size"]) for r in rows}, key=str)
    for scenario, mt in cells:
        for group, _ in _GROUP_TITLES:
            members = [r for r in rows
                       if r["scenario"] == scenario and r["mt_size"] == mt
                       and method_group(r["method"]) == group]
            for metric in _METRIC_COLUMNS:
                scored = [r for r in members if not math.isnan(r[metric])]
                if not scored:
                    continue
                if metric == "ess":
                    pick = max(scored, key=lambda r: (r[metric], r["method"]))
                else:
                    pick = min(scored, key=lambda r: (r[metric], r["method"]))
                winners[(scenario, mt, group, metric)] = pick["method"]
    return winners


def format_report_table(rows) -> str:
    """Plain-text table mirroring the appendix layout with best-method lines."""
    winners = best_methods(rows)
    lines = []
    cells = sorted({(r["scenario"], r["mt_size"]) for r in rows}, key=str)
    for scenario, mt in cells:
        lines.append(f"Scenario {scenario}, MT={mt}")
        lines.append(f"{'method':<12}{'bias':>10}{'variance':>10}{'mse':>10}{'ess':>10}"
                     f"{'n':>7}{'failed':>8}")
        for group, title in _GROUP_TITLES:
            members = [r for r in rows
                       if r["scenario"] == scenario and r["mt_size"] == mt
                       and method_group(r["method"]) == group]
            members.sort(key=lambda r: METHOD_ORDER.index(r["method"]))
            if not members:
                continue
            lines.append(f"-- {title}")
            for r in members:
                marks = "".join(
                    "*" if winners.get((scenario, mt, group, m)) == r["method"] else " "
                    for m in _METRIC_COLUMNS)
                ess = "-" if math.isnan(r["ess"]) else f"{r['ess']:.1f}"
                lines.append(f"{r['method']:<12}{r['bias']:>10.3f}{r['variance']:>10.3f}"
                             f"{r['mse']:>10.3f}{ess:>10}{r['n_used']:>7}"
                             f"{r['n_failed']:>8} {marks}")
            for metric in _METRIC_COLUMNS:
                best = winners.get((scenario, mt, group, metric))
                if best:
                    lines.append(f"   best {metric}: {best}")
        lines.append("")
    return "\n".join(lines) + "\n"


def emit_report(report: StudyReport, out_dir,
                formats=("summary", "estimates", "table", "long", "truth")) -> dict[str, str]:
    """Write the report files; returns {format: path}."""
    if not report.summaries:
        raise ConfigError("cannot emit an empty report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    if "summary" in formats:
        path = os.path.join(out_dir, "summary.csv")
        metrics.write_summary_csv(report.summaries, path)
        paths["summary"] = path
    if "estimates" in formats:
        path = os.path.join(out_dir, "estimates.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "mt_size", "method", "rep", "estimate",
                             "ess", "status"])
            for r in report.estimates:
                writer.writerow([
                    r["scenario"], r["mt_size"], r["method"], r["rep"],
                    "" if math.isnan(r["estimate"]) else repr(r["estimate"]),
                    "" if math.isnan(r["ess"]) else repr(r["ess"]), r["status"],
                ])
        paths["estimates"] = path
    if "table" in formats:
        path = os.path.join(out_dir, "report.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_report_table(report.summaries))
        paths["table"] = path
    if "long" in formats:
        path = os.path.join(out_dir, "long.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scenario", "mt_size", "method", "metric", "value"])
            for r in report.summaries:
                for metric in _METRIC_COLUMNS:
                    writer.writerow([r["scenario"], r["mt_size"], r["method"], metric,
                                     "" if math.isnan(r[metric]) else repr(r[metric])])
        paths["long"] = path
    if "truth" in formats:
        path = os.path.join(out_dir, "truth.csv")
        truthoracle.save_truth_cache(report.truths.values(), path)
        paths["truth"] = path
    if "config" in formats or True:
        path = os.path.join(out_dir, "config.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.config, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths["config"] = path
    return paths
