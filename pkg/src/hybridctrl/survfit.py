"""Weighted survival regression: Cox partial likelihood and Weibull AFT.

Both fitters take per-subject weights produced by the weighting/matching
schemes, regress the outcome on the treatment indicator (plus trial factor Q
for the joint schemes), and report the treatment coefficient on the log
hazard-ratio scale. AFT coefficients are converted through the estimated
scale: log HR = -coef / sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_matrix, check_vector, check_weights
from .datagen import TrialData
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DegenerateScaleError,
    EstimationError,
    MonotoneLikelihoodError,
)
from .propensity import WeightSet

TRIAL_LEVELS = ("CUR", "HC0", "HC1")

_COEF_NORM_GUARD = 1e3
_EXP_CAP = 60.0


@dataclass
class SurvivalSamples:
    """Analysis rows: observed time, event flag, treatment, trial factor, weight."""

    time: np.ndarray
    event: np.ndarray
    treatment: np.ndarray
    trial: np.ndarray
    weight: np.ndarray

    def validate(self) -> None:
        if np.any(self.time <= 0):
            raise ConfigError("times must be positive")
        if np.any(self.weight < 0) or not np.all(np.isfinite(self.weight)):
            raise ConfigError("weights must be finite and nonnegative")
        unknown = set(np.unique(self.trial)) - set(TRIAL_LEVELS)
        if unknown:
            raise ConfigError(f"unknown trial levels {sorted(unknown)}")

    @property
    def n(self) -> int:
        return self.time.shape[0]

    def design(self, adjust_trial: bool, intercept: bool) -> tuple[np.ndarray, tuple[str, ...]]:
        cols = [np.asarray(self.treatment, dtype=float)]
        names = ["treatment"]
        if adjust_trial:
            for level in TRIAL_LEVELS[1:]:
                cols.append((self.trial == level).astype(float))
                names.append(f"trial_{level}")
        if intercept:
            cols.insert(0, np.ones(self.n))
            names.insert(0, "intercept")
        return np.column_stack(cols), tuple(names)


def assemble_samples(data: TrialData, weights: WeightSet) -> SurvivalSamples:
    """Stack all four arms with their analysis weights; MT and MC map to trial CUR."""
    trial = np.where(np.isin(data.source, ("MT", "MC")), "CUR", data.source)
    samples = SurvivalSamples(
        time=data.time.astype(float),
        event=data.event.astype(bool),
        treatment=data.treatment.astype(float),
        trial=trial.astype("U3"),
        weight=np.asarray(weights.weights, dtype=float),
    )
    samples.validate()
    return samples


@dataclass
class FitResult:
    """A marginal log-HR point estimate with convergence metadata."""

    log_hr: float
    coef: np.ndarray
    coef_names: tuple[str, ...]
    model: str
    converged: bool
    n_iter: int
    scale: float | None = None
    shape: float | None = None
    loglik: float | None = None


def _cox_quantities(beta, x, w, event_rows, risk_start):
    """Weighted Breslow partial log-likelihood with gradient and Hessian."""
    eta = x @ beta
    r = w * np.exp(np.clip(eta, -_EXP_CAP, _EXP_CAP))
    rx = r[:, None] * x
    s0 = np.cumsum(r[::-1])[::-1]
    s1 = np.cumsum(rx[::-1], axis=0)[::-1]
    s2 = np.cumsum((rx[:, :, None] * x[:, None, :])[::-1], axis=0)[::-1]

    we = w[event_rows]
    s0_e = s0[risk_start]
    s1_e = s1[risk_start]
    s2_e = s2[risk_start]
    ll = float(np.sum(we * (eta[event_rows] - np.log(s0_e))))
    xbar = s1_e / s0_e[:, None]
    grad = (we[:, None] * (x[event_rows] - xbar)).sum(axis=0)
    vmat = s2_e / s0_e[:, None, None] - xbar[:, :, None] * xbar[:, None, :]
    hess = -(we[:, None, None] * vmat).sum(axis=0)
    return ll, grad, hess


def _newton(objective, beta0, tol, max_iter, context):
    """Maximize by damped Newton: step halving plus escalating ridge.

    The ridge handles regions where the Hessian is indefinite (weighted AFT
    away from the optimum); near the maximum the pure Newton step wins.
    """
    beta = np.asarray(beta0, dtype=float)
    k = beta.shape[0]
    ll, grad, hess = objective(beta)
    if not np.isfinite(ll):
        raise ConvergenceError(f"{context}: invalid starting point")
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(grad))) < tol:
            return beta, ll, True, it
        neg_h = -hess
        scale = max(float(np.max(np.abs(np.diag(neg_h)))), 1.0)
        improved = False
        for lam in (0.0, 1e-6, 1e-3, 1e-1, 1.0, 1e2):
            try:
                step = np.linalg.solve(neg_h + lam * scale * np.eye(k), grad)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(step)):
                continue
            alpha = 1.0
            for _ in range(12):
                cand = beta + alpha * step
                ll_new, grad_new, hess_new = objective(cand)
                if np.isfinite(ll_new) and ll_new > ll - 1e-12:
                    improved = True
                    break
                alpha *= 0.5
            if improved:
                break
        if not improved:
            raise ConvergenceError(f"{context}: no ascent step found")
        beta, ll, grad, hess = cand, ll_new, grad_new, hess_new
        if float(np.max(np.abs(beta))) > _COEF_NORM_GUARD:
            raise MonotoneLikelihoodError(f"{context}: coefficients diverged")
    raise ConvergenceError(f"{context}: no convergence in {max_iter} iterations")


def fit_cox_weighted(samples: SurvivalSamples, adjust_trial: bool = False,
                     tol: float = 1e-9, max_iter: int = 60) -> FitResult:
    """Weighted Cox proportional hazards fit (Breslow ties) by Newton iteration.

    The design is the treatment indicator, plus trial-factor dummies when
    ``adjust_trial`` is set. Returns the treatment coefficient as ``log_hr``.
    """
    samples.validate()
    if int(np.sum(samples.event)) < 2:
        raise EstimationError("need at least 2 events for a Cox fit")
    x, names = samples.design(adjust_trial, intercept=False)
    order = np.argsort(samples.time, kind="stable")
    t = samples.time[order]
    x = x[order]
    w = samples.weight[order]
    ev = samples.event[order]
    # Zero-weight events contribute nothing but would produce 0 * log(0).
    event_rows = np.flatnonzero(ev & (w > 0))
    if event_rows.size == 0:
        raise EstimationError("all events carry zero weight")
    # Breslow: the risk set of an event at t is every subject with time >= t.
    risk_start = np.searchsorted(t, t[event_rows], side="left")

    def objective(beta):
        return _cox_quantities(beta, x, w, event_rows, risk_start)

    beta, ll, converged, it = _newton(objective, np.zeros(x.shape[1]),
                                      tol, max_iter, "cox")
    return FitResult(log_hr=float(beta[0]), coef=beta, coef_names=names,
                     model="cox", converged=converged, n_iter=it, loglik=ll)


def _aft_quantities(theta, y, x, w, delta):
    k = x.shape[1]
    b, s = theta[:k], theta[k]
    if not -30.0 <= s <= 30.0:
        # Off-scale sigma: report -inf so the line search backtracks.
        return -np.inf, np.zeros(k + 1), -np.eye(k + 1)
    sigma = np.exp(s)
    z = np.clip((y - x @ b) / sigma, -_EXP_CAP, _EXP_CAP)
    ez = np.exp(z)
    u = delta - ez
    ll = float(np.sum(w * (delta * (z - s) - ez)))
    g_b = -(x.T @ (w * u)) / sigma
    g_s = float(np.sum(w * (-delta - u * z)))
    grad = np.append(g_b, g_s)
    wez = w * ez
    h_bb = -(x * wez[:, None]).T @ x / sigma**2
    m = w * (u - z * ez)
    h_bs = (x.T @ m) / sigma
    h_ss = float(np.sum(w * z * (u - z * ez)))
    hess = np.empty((k + 1, k + 1))
    hess[:k, :k] = h_bb
    hess[:k, k] = h_bs
    hess[k, :k] = h_bs
    hess[k, k] = h_ss
    return ll, grad, hess


def fit_weibull_aft_weighted(samples: SurvivalSamples, adjust_trial: bool = False,
                             tol: float = 1e-8, max_iter: int = 80) -> FitResult:
    """Weighted Weibull AFT fit: Gumbel likelihood on log-times, Newton on (b, log sigma).

    Censored observations contribute the survival term only. ``log_hr`` is the
    converted treatment coefficient, -coef/sigma.
    """
    samples.validate()
    if int(np.sum(samples.event)) < 2:
        raise EstimationError("need at least 2 events for an AFT fit")
    x, names = samples.design(adjust_trial, intercept=True)
    # Zero-weight rows contribute nothing; drop them so extreme linear
    # predictors on dead rows cannot poison the gradients with inf * 0.
    live = samples.weight > 0
    delta = samples.event[live].astype(float)
    x = x[live]
    y = np.log(samples.time[live])
    w = samples.weight[live]
    if float(np.sum(delta)) < 2:
        raise EstimationError("fewer than 2 positively weighted events")

    wev = w * delta
    if wev.sum() <= 0:
        raise EstimationError("all events carry zero weight")
    mu0 = float(np.sum(wev * y) / np.sum(wev))
    sd0 = float(np.sqrt(np.sum(wev * (y - mu0) ** 2) / np.sum(wev)))
    theta0 = np.zeros(x.shape[1] + 1)
    theta0[0] = mu0
    theta0[-1] = np.log(max(sd0, 0.1))

    def objective(theta):
        return _aft_quantities(theta, y, x, w, delta)

    theta, ll, converged, it = _newton(objective, theta0, tol, max_iter, "weibull-aft")
    sigma = float(np.exp(theta[-1]))
    if sigma < 1e-6:
        raise DegenerateScaleError(f"AFT scale collapsed to {sigma:.2e}")
    coef = theta[:-1]
    a_idx = names.index("treatment")
    return FitResult(log_hr=aft_to_loghr(float(coef[a_idx]), sigma), coef=coef,
                     coef_names=names, model="aft", converged=converged,
                     n_iter=it, scale=sigma, shape=1.0 / sigma, loglik=ll)


def aft_to_loghr(coef: float, sigma: float) -> float:
    """Convert an AFT coefficient to a log hazard ratio: -coef / sigma."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    return -coef / sigma


def estimate_frequentist(data: TrialData, weights: WeightSet, model: str) -> FitResult:
    """Fit the weighted outcome regression implied by a weight set.

    Separate weight sets regress on treatment alone; joint ones include the
    trial factor Q. ``model`` is "cox" or "aft".
    """
    samples = assemble_samples(data, weights)
    if model == "cox":
        return fit_cox_weighted(samples, adjust_trial=weights.requires_q)
    if model == "aft":
        return fit_weibull_aft_weighted(samples, adjust_trial=weights.requires_q)
    raise ConfigError(f"unknown model {model!r}; expected 'cox' or 'aft'")


def _split_y(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ConfigError("y must be a 2-column array: time, event")
    return y[:, 0], y[:, 1].astype(bool)


class WeightedCoxPH(BaseEstimator):
    """sklearn-style weighted Cox regression on an arbitrary design matrix.

    ``fit`` expects ``y`` as a 2-column array (time, event flag); weights go in
    ``sample_weight``. The fitted linear risk score is ``decision_function``.
    """

    def __init__(self, tol: float = 1e-9, max_iter: int = 60):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X)
        time, event = _split_y(y)
        w = check_weights(sample_weight, X.shape[0])
        order = np.argsort(time, kind="stable")
        xs, ts, ws, es = X[order], time[order], w[order], event[order]
        event_rows = np.flatnonzero(es & (ws > 0))
        if event_rows.size < 2:
            raise EstimationError("need at least 2 events for a Cox fit")
        risk_start = np.searchsorted(ts, ts[event_rows], side="left")

        def objective(beta):
            return _cox_quantities(beta, xs, ws, event_rows, risk_start)

        beta, ll, _, it = _newton(objective, np.zeros(X.shape[1]),
                                  self.tol, self.max_iter, "cox")
        self.coef_ = beta
        self.loglik_ = ll
        self.n_iter_ = it
        return self

    def decision_function(self, X):
        return check_matrix(X) @ self.coef_

    def predict(self, X):
        return self.decision_function(X)


class WeibullAFTRegressor(BaseEstimator):
    """sklearn-style weighted Weibull AFT regression; predicts log-time location."""

    def __init__(self, tol: float = 1e-8, max_iter: int = 80):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        X = check_matrix(X)
        time, event = _split_y(y)
        w = check_weights(sample_weight, X.shape[0])
        live = w > 0
        X, time, event, w = X[live], time[live], event[live], w[live]
        delta = event.astype(float)
        if delta.sum() < 2:
            raise EstimationError("need at least 2 events for an AFT fit")
        xx = np.column_stack([np.ones(X.shape[0]), X])
        ylog = np.log(time)
        wev = w * delta
        mu0 = float(np.sum(wev * ylog) / np.sum(wev))
        sd0 = float(np.sqrt(np.sum(wev * (ylog - mu0) ** 2) / np.sum(wev)))
        theta0 = np.zeros(xx.shape[1] + 1)
        theta0[0] = mu0
        theta0[-1] = np.log(max(sd0, 0.1))

        def objective(theta):
            return _aft_quantities(theta, ylog, xx, w, delta)

        theta, ll, _, it = _newton(objective, theta0, self.tol, self.max_iter,
                                   "weibull-aft")
        self.intercept_ = float(theta[0])
        self.coef_ = theta[1:-1]
        self.scale_ = float(np.exp(theta[-1]))
        self.loglik_ = ll
        self.n_iter_ = it
        return self

    def predict(self, X):
        return self.intercept_ + check_matrix(X) @ self.coef_
