"""Hybrid-control simulation engine and estimator library.

Generates three-source survival trial data, estimates the marginal log hazard
ratio with propensity-score weighting/matching (Cox and Weibull AFT outcome
models) and commensurate-prior Bayesian borrowing, computes the ground truth
by counterfactual Monte Carlo, and aggregates bias/variance/MSE/ESS over
replicated studies.
"""

from .bayesborrow import (
    BayesParams,
    PosteriorResult,
    log_likelihood,
    log_prior,
    mcmc_run,
    posterior_summary,
)
from .datagen import (
    CovariateSpec,
    ScenarioSpec,
    TrialData,
    default_covariates,
    gen_censoring,
    gen_covariates,
    gen_dataset,
    gen_event_time,
    linear_predictor,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DegenerateScaleError,
    EstimationError,
    HybridControlError,
    MixingFailure,
    MonotoneLikelihoodError,
    SeparationError,
    SingularDesignError,
)
from .fullmatch import (
    FullMatchResult,
    MatchProblem,
    joint_fm,
    optimal_full_match,
    separate_fm,
    subclass_weights,
)
from .harness import StudyConfig, StudyReport, builtin_scenarios, emit_report, run_study
from .metrics import MethodSummary, ess_bayesian, ess_frequentist, summarize
from .propensity import (
    LogisticIRLS,
    LogisticModel,
    WeightSet,
    fit_logistic,
    joint_iptw,
    ps_design,
    separate_iptw,
)
from .survfit import (
    FitResult,
    SurvivalSamples,
    WeibullAFTRegressor,
    WeightedCoxPH,
    aft_to_loghr,
    assemble_samples,
    estimate_frequentist,
    fit_cox_weighted,
    fit_weibull_aft_weighted,
)
from .truthoracle import TruthResult, true_marginal_loghr

__version__ = "0.1.0"

__all__ = [
    "BayesParams",
    "ConfigError",
    "ConvergenceError",
    "CovariateSpec",
    "DegenerateScaleError",
    "EstimationError",
    "FitResult",
    "FullMatchResult",
    "HybridControlError",
    "LogisticIRLS",
    "LogisticModel",
    "MatchProblem",
    "MethodSummary",
    "MixingFailure",
    "MonotoneLikelihoodError",
    "PosteriorResult",
    "ScenarioSpec",
    "SeparationError",
    "SingularDesignError",
    "StudyConfig",
    "StudyReport",
    "SurvivalSamples",
    "TrialData",
    "TruthResult",
    "WeibullAFTRegressor",
    "WeightSet",
    "WeightedCoxPH",
    "aft_to_loghr",
    "assemble_samples",
    "builtin_scenarios",
    "default_covariates",
    "emit_report",
    "ess_bayesian",
    "ess_frequentist",
    "estimate_frequentist",
    "fit_cox_weighted",
    "fit_logistic",
    "fit_weibull_aft_weighted",
    "gen_censoring",
    "gen_covariates",
    "gen_dataset",
    "gen_event_time",
    "joint_fm",
    "joint_iptw",
    "linear_predictor",
    "log_likelihood",
    "log_prior",
    "mcmc_run",
    "optimal_full_match",
    "posterior_summary",
    "ps_design",
    "run_study",
    "separate_fm",
    "separate_iptw",
    "subclass_weights",
    "summarize",
    "true_marginal_loghr",
]
