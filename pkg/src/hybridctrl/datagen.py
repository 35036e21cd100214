"""Synthetic three-source trial data: covariates, arm assignment, Weibull events, censoring.

Subjects come from four sources: the current trial's experimental arm (MT) and
control arm (MC), plus the control arms of two historical trials (HC0, HC1).
Event times are Weibull with per-subject scale exp(eta) and common shape p,
where eta is linear in arm effects, covariates, and a biomarker-by-treatment
interaction. Censoring times are normal, centered at a multiple of each arm's
mean event time.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ConfigError

ARMS = ("MT", "MC", "HC0", "HC1")
CURRENT_ARMS = ("MT", "MC")
HISTORICAL_ARMS = ("HC0", "HC1")
N_COVARIATES = 13
#: 1-based index of the biomarker that modifies the treatment effect.
EFFECT_MODIFIER_INDEX = 8

#: Covariate coefficients on the log-hazard scale: 0.01 to 0.07 in steps of 0.005.
DEFAULT_GAMMA = tuple(round(0.01 + 0.005 * k, 5) for k in range(N_COVARIATES))
DEFAULT_XI = 0.01
DEFAULT_SHAPE = 2.0
DEFAULT_CENSOR_MULTIPLIER = 1.5
DEFAULT_CENSOR_VARIANCE = 0.1


def _as_arm_map(value, name: str) -> dict[str, float]:
    """Broadcast a scalar to all four arms, or validate an explicit arm map."""
    if isinstance(value, Mapping):
        missing = [a for a in ARMS if a not in value]
        if missing:
            raise ConfigError(f"{name} missing arms {missing}")
        return {a: float(value[a]) for a in ARMS}
    v = float(value)
    return {a: v for a in ARMS}


@dataclass(frozen=True)
class Covariate:
    """One baseline covariate with per-arm sampling parameters.

    ``kind`` is "continuous" (normal, per-arm mean/sd) or "binary"
    (Bernoulli, per-arm prevalence).
    """

    kind: str
    mean: Mapping[str, float] | None = None
    sd: Mapping[str, float] | None = None
    prevalence: Mapping[str, float] | None = None

    def validate(self) -> None:
        if self.kind == "continuous":
            if self.mean is None or self.sd is None:
                raise ConfigError("continuous covariate needs mean and sd")
            for arm in ARMS:
                if self.sd[arm] < 0:
                    raise ConfigError(f"sd must be >= 0, got {self.sd[arm]} for {arm}")
        elif self.kind == "binary":
            if self.prevalence is None:
                raise ConfigError("binary covariate needs prevalence")
            for arm in ARMS:
                p = self.prevalence[arm]
                if not 0.0 <= p <= 1.0:
                    raise ConfigError(f"prevalence must be in [0, 1], got {p} for {arm}")
        else:
            raise ConfigError(f"unknown covariate kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "continuous":
            return {"kind": "continuous", "mean": dict(self.mean), "sd": dict(self.sd)}
        return {"kind": "binary", "prevalence": dict(self.prevalence)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Covariate":
        kind = d["kind"]
        if kind == "continuous":
            cov = cls(kind=kind, mean=_as_arm_map(d["mean"], "mean"), sd=_as_arm_map(d["sd"], "sd"))
        else:
            cov = cls(kind=kind, prevalence=_as_arm_map(d["prevalence"], "prevalence"))
        cov.validate()
        return cov


def continuous(mean: float, sd: float, *, hist_mean: float | None = None,
               hist_sd: float | None = None) -> Covariate:
    """Continuous covariate, identical in MT/MC, optionally shifted in HC0/HC1."""
    hm = mean if hist_mean is None else hist_mean
    hs = sd if hist_sd is None else hist_sd
    cov = Covariate(
        kind="continuous",
        mean={"MT": mean, "MC": mean, "HC0": hm, "HC1": hm},
        sd={"MT": sd, "MC": sd, "HC0": hs, "HC1": hs},
    )
    cov.validate()
    return cov


def binary(prevalence: float, *, hist_prevalence: float | None = None) -> Covariate:
    """Binary covariate, identical in MT/MC, optionally shifted in HC0/HC1."""
    hp = prevalence if hist_prevalence is None else hist_prevalence
    cov = Covariate(kind="binary",
                    prevalence={"MT": prevalence, "MC": prevalence, "HC0": hp, "HC1": hp})
    cov.validate()
    return cov


@dataclass(frozen=True)
class CovariateSpec:
    """The 13 baseline covariates. Covariate 8 is the treatment effect modifier."""

    covariates: tuple[Covariate, ...]

    #: 1-based index of the effect modifier (fixed by the outcome model).
    effect_modifier: int = EFFECT_MODIFIER_INDEX

    def validate(self) -> None:
        if len(self.covariates) != N_COVARIATES:
            raise ConfigError(f"expected {N_COVARIATES} covariates, got {len(self.covariates)}")
        if self.effect_modifier != EFFECT_MODIFIER_INDEX:
            raise ConfigError("the effect modifier is covariate 8")
        for cov in self.covariates:
            cov.validate()
        # MT and MC must share parameters covariate by covariate.
        for i, cov in enumerate(self.covariates, start=1):
            if cov.kind == "continuous":
                same = cov.mean["MT"] == cov.mean["MC"] and cov.sd["MT"] == cov.sd["MC"]
            else:
                same = cov.prevalence["MT"] == cov.prevalence["MC"]
            if not same:
                raise ConfigError(f"covariate {i}: MT and MC parameters must match")

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(c.kind for c in self.covariates)

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self.covariates]

    @classmethod
    def from_list(cls, items: Sequence[Mapping]) -> "CovariateSpec":
        spec = cls(covariates=tuple(Covariate.from_dict(d) for d in items))
        spec.validate()
        return spec


def default_covariates() -> CovariateSpec:
    """Default covariate summaries standing in for the (proprietary) trial data.

    Eight continuous and five binary covariates. Historical arms are shifted by
    0.3 sd (continuous) or 0.10 (prevalence) with alternating signs, so every
    covariate is imbalanced while the net covariate-driven log-hazard offset
    between current and historical controls stays small; historical sds are
    inflated 1.1x, reflecting the broader populations of larger historical
    trials. Magnitudes put substantial heterogeneity on the log-hazard scale
    (sd of the covariate contribution ~ 1.9), which is what separates marginal
    from conditional hazard ratios in this design.
    """
    c = continuous
    b = binary
    covs = (
        c(70.0, 65.0, hist_mean=89.5, hist_sd=71.5),   # x1
        c(30.0, 46.0, hist_mean=16.2, hist_sd=50.6),   # x2
        c(15.0, 36.0, hist_mean=25.8, hist_sd=39.6),   # x3
        c(95.0, 29.0, hist_mean=86.3, hist_sd=31.9),   # x4
        c(0.0, 23.0, hist_mean=-6.9, hist_sd=25.3),    # x5
        c(12.0, 18.0, hist_mean=17.4, hist_sd=19.8),   # x6
        c(8.0, 16.0, hist_mean=3.2, hist_sd=17.6),     # x7
        b(0.40, hist_prevalence=0.50),                 # x8, effect-modifying biomarker
        c(1.0, 13.0, hist_mean=4.9, hist_sd=14.3),     # x9
        b(0.50, hist_prevalence=0.40),                 # x10
        b(0.30, hist_prevalence=0.40),                 # x11
        b(0.45, hist_prevalence=0.35),                 # x12
        b(0.25, hist_prevalence=0.15),                 # x13
    )
    spec = CovariateSpec(covariates=covs)
    spec.validate()
    return spec


@dataclass(frozen=True)
class ScenarioSpec:
    """Full data-generating configuration for one simulated study arm layout.

    ``beta`` holds the conditional log hazard ratios (MT, HC0, HC1) versus MC;
    MC is the reference level of the source variable.
    """

    name: str = "custom"
    n_mt: int = 16
    n_mc: int = 15
    n_hc0: int = 100
    n_hc1: int = 300
    beta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    beta0: float = 0.0
    gamma: tuple[float, ...] = DEFAULT_GAMMA
    xi: float = DEFAULT_XI
    shape_p: float = DEFAULT_SHAPE
    censor_mean_multiplier: float = DEFAULT_CENSOR_MULTIPLIER
    censor_variance: float = DEFAULT_CENSOR_VARIANCE
    covariates: CovariateSpec = field(default_factory=default_covariates)

    def validate(self) -> None:
        for label, n in self.arm_sizes.items():
            if n < 1:
                raise ConfigError(f"arm {label} size must be >= 1, got {n}")
        if self.shape_p <= 0:
            raise ConfigError("shape_p must be > 0")
        if self.censor_variance < 0:
            raise ConfigError("censor_variance must be >= 0")
        if self.censor_mean_multiplier <= 0:
            raise ConfigError("censor_mean_multiplier must be > 0")
        if len(self.beta) != 3:
            raise ConfigError("beta must have 3 entries (MT, HC0, HC1 vs MC)")
        if len(self.gamma) != N_COVARIATES:
            raise ConfigError(f"gamma must have {N_COVARIATES} entries")
        self.covariates.validate()

    @property
    def arm_sizes(self) -> dict[str, int]:
        return {"MT": self.n_mt, "MC": self.n_mc, "HC0": self.n_hc0, "HC1": self.n_hc1}

    def arm_effect(self, arm: str) -> float:
        """Conditional log-HR offset of ``arm`` versus the MC reference."""
        return {"MC": 0.0, "MT": self.beta[0], "HC0": self.beta[1], "HC1": self.beta[2]}[arm]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "arms": dict(self.arm_sizes),
            "beta": list(self.beta),
            "beta0": self.beta0,
            "gamma": list(self.gamma),
            "xi": self.xi,
            "shape_p": self.shape_p,
            "censoring": {"mean_multiplier": self.censor_mean_multiplier,
                          "variance": self.censor_variance},
            "covariates": self.covariates.to_list(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        try:
            arms = d["arms"]
            censoring = d.get("censoring", {})
            spec = cls(
                name=str(d.get("name", "custom")),
                n_mt=int(arms["MT"]),
                n_mc=int(arms["MC"]),
                n_hc0=int(arms["HC0"]),
                n_hc1=int(arms["HC1"]),
                beta=tuple(float(v) for v in d["beta"]),
                beta0=float(d.get("beta0", 0.0)),
                gamma=tuple(float(v) for v in d.get("gamma", DEFAULT_GAMMA)),
                xi=float(d.get("xi", DEFAULT_XI)),
                shape_p=float(d.get("shape_p", DEFAULT_SHAPE)),
                censor_mean_multiplier=float(censoring.get("mean_multiplier",
                                                           DEFAULT_CENSOR_MULTIPLIER)),
                censor_variance=float(censoring.get("variance", DEFAULT_CENSOR_VARIANCE)),
                covariates=(CovariateSpec.from_list(d["covariates"])
                            if "covariates" in d else default_covariates()),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario definition: {exc}") from exc
        spec.validate()
        return spec

    def with_mt_size(self, n_mt: int) -> "ScenarioSpec":
        return replace(self, n_mt=int(n_mt))


def load_scenario(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return ScenarioSpec.from_dict(json.load(fh))


def save_scenario(scenario: ScenarioSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class TrialData:
    """A generated dataset in column form, subjects ordered MT, MC, HC0, HC1."""

    ids: np.ndarray
    source: np.ndarray
    treatment: np.ndarray
    x: np.ndarray
    time: np.ndarray
    event: np.ndarray
    event_time: np.ndarray
    censor_time: np.ndarray
    scenario: str = "custom"
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    def arm_mask(self, *arms: str) -> np.ndarray:
        return np.isin(self.source, arms)

    @property
    def htd_mask(self) -> np.ndarray:
        return self.arm_mask(*HISTORICAL_ARMS)

    def validate(self) -> None:
        if len(np.unique(self.ids)) != self.n:
            raise ConfigError("subject ids are not unique")
        if not np.array_equal(self.treatment == 1, self.source == "MT"):
            raise ConfigError("treatment must be 1 exactly for MT subjects")
        if np.any(self.time <= 0):
            raise ConfigError("observed times must be positive")
        if not np.allclose(self.time, np.minimum(self.event_time, self.censor_time)):
            raise ConfigError("observed time must be min(event, censor)")
        if not np.array_equal(self.event, self.event_time <= self.censor_time):
            raise ConfigError("event flag inconsistent with latent times")

    def to_csv(self, path) -> None:
        """Write `id,source,treatment,x1..x13,time,event` rows."""
        header = ["id", "source", "treatment"] + [f"x{i}" for i in range(1, N_COVARIATES + 1)]
        header += ["time", "event"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [int(self.ids[i]), str(self.source[i]), int(self.treatment[i])]
                row += [repr(float(v)) for v in self.x[i]]
                row += [repr(float(self.time[i])), int(self.event[i])]
                writer.writerow(row)


def gen_covariates(spec: CovariateSpec, arm: str, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw an (n, 13) covariate matrix for one arm; columns are independent."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if arm not in ARMS:
        raise ConfigError(f"unknown arm {arm!r}")
    spec.validate()
    out = np.empty((n, N_COVARIATES))
    for j, cov in enumerate(spec.covariates):
        if cov.kind == "continuous":
            out[:, j] = rng.normal(cov.mean[arm], cov.sd[arm], size=n)
        else:
            out[:, j] = (rng.random(n) < cov.prevalence[arm]).astype(float)
    return out


def linear_predictor(x: np.ndarray, source, treatment, scenario: ScenarioSpec):
    """Log-scale linear predictor eta = beta0 + beta_D + gamma.x + xi*x8*A.

    Accepts a single subject (x of shape (13,), scalar source/treatment) or a
    batch (x of shape (n, 13) with matching arrays); returns a float or array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    src = np.atleast_1d(np.asarray(source))
    a = np.atleast_1d(np.asarray(treatment, dtype=float))
    gamma = np.asarray(scenario.gamma)
    offsets = np.zeros(src.shape[0])
    for arm in ARMS:
        offsets[src == arm] = scenario.arm_effect(arm)
    eta = (scenario.beta0 + offsets + xs @ gamma
           + scenario.xi * xs[:, EFFECT_MODIFIER_INDEX - 1] * a)
    return float(eta[0]) if single else eta


def gen_event_time(eta, p: float, u):
    """Invert the Weibull survival function: T = (-log u / exp(eta))^(1/p)."""
    if p <= 0:
        raise ConfigError("shape p must be > 0")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ConfigError("uniform draws must lie strictly inside (0, 1)")
    eta = np.asarray(eta, dtype=float)
    t = (-np.log(u) / np.exp(eta)) ** (1.0 / p)
    return float(t) if t.ndim == 0 else t


def gen_censoring(event_times: np.ndarray, multiplier: float, variance: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Normal censoring times centered at multiplier x mean(arm event times).

    Nonpositive draws are resampled so every censoring time is positive,
    preserving the normal shape above zero.
    """
    event_times = np.asarray(event_times, dtype=float)
    if event_times.size == 0:
        raise ConfigError("cannot generate censoring for an empty arm")
    if variance < 0:
        raise ConfigError("censor variance must be >= 0")
    mean_c = multiplier * float(event_times.mean())
    if mean_c <= 0:
        raise ConfigError("censoring mean must be positive")
    sd = float(np.sqrt(variance))
    n = event_times.shape[0]
    c = rng.normal(mean_c, sd, size=n)
    while True:
        bad = c <= 0
        if not bad.any():
            return c
        c[bad] = rng.normal(mean_c, sd, size=int(bad.sum()))


def gen_dataset(scenario: ScenarioSpec, seed) -> TrialData:
    """Generate one full dataset; deterministic given the seed.

    ``seed`` may be an int, a ``numpy.random.SeedSequence``, or a Generator.
    """
    scenario.validate()
    rng = np.random.default_rng(seed)
    tiny = np.finfo(float).tiny
    blocks = []
    for arm in ARMS:
        n = scenario.arm_sizes[arm]
        x = gen_covariates(scenario.covariates, arm, n, rng)
        a = np.full(n, 1 if arm == "MT" else 0, dtype=np.int8)
        eta = linear_predictor(x, np.full(n, arm), a, scenario)
        u = np.clip(rng.random(n), tiny, 1.0 - 1e-16)
        t = gen_event_time(eta, scenario.shape_p, u)
        c = gen_censoring(t, scenario.censor_mean_multiplier, scenario.censor_variance, rng)
        blocks.append((arm, a, x, t, c))
    n_total = sum(b[3].shape[0] for b in blocks)
    source = np.concatenate([np.full(b[3].shape[0], b[0], dtype="U3") for b in blocks])
    treatment = np.concatenate([b[1] for b in blocks])
    x = np.vstack([b[2] for b in blocks])
    t = np.concatenate([b[3] for b in blocks])
    c = np.concatenate([b[4] for b in blocks])
    data = TrialData(
        ids=np.arange(1, n_total + 1, dtype=np.int64),
        source=source,
        treatment=treatment,
        x=x,
        time=np.minimum(t, c),
        event=t <= c,
        event_time=t,
        censor_time=c,
        scenario=scenario.name,
        seed=seed if isinstance(seed, int) else None,
    )
    data.validate()
    return data
