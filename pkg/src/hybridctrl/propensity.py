"""Logistic propensity models (IRLS) and the separate/joint IPTW weight schemes.

Propensity scores model current-trial membership (MT) against historical
controls. Historical subjects are weighted by ps/(1-ps) so that they resemble
the current-trial population; current-trial subjects (MT and MC) always carry
weight 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from ._validation import check_binary, check_matrix
from .datagen import TrialData
from .exceptions import ConfigError, ConvergenceError, SeparationError, SingularDesignError

#: Propensity scores are clamped to this open interval before weighting.
PS_CLIP = 1e-6
#: Covariates 11-13 (outcome coefficients 0.06, 0.065, 0.07 under the default
#: gamma) are treated as unmeasured and left out of the propensity design.
N_MEASURED = 10

_COEF_NORM_GUARD = 1e3


@dataclass
class LogisticModel:
    """A fitted logistic regression: coefficients plus convergence metadata."""

    coef: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        design = check_matrix(design, "design")
        return expit(design @ self.coef)


def fit_logistic(design, labels, tol: float = 1e-8, max_iter: int = 100) -> LogisticModel:
    """Maximize the Bernoulli log-likelihood by iteratively reweighted least squares.

    ``design`` must already contain any intercept column. Convergence is
    declared when the gradient max-norm falls below ``tol`` or the Newton step
    becomes numerically zero.

    Raises
    ------
    SeparationError
        If the labels are single-class or the coefficients diverge (norm
        guard 1e3), the hallmark of separated data.
    SingularDesignError
        If the weighted normal equations are rank deficient.
    ConvergenceError
        If ``max_iter`` is exhausted.
    """
    x = check_matrix(design, "design")
    y = check_binary(labels, x.shape[0], "labels")
    n, k = x.shape
    if n <= k:
        raise ConfigError(f"need more observations than parameters (n={n}, k={k})")
    if y.min() == y.max():
        raise SeparationError("labels contain a single class; MLE undefined")

    beta = np.zeros(k)
    for it in range(1, max_iter + 1):
        eta = np.clip(x @ beta, -35.0, 35.0)
        mu = expit(eta)
        grad = x.T @ (y - mu)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            return LogisticModel(coef=beta, converged=True, n_iter=it, grad_norm=grad_norm)
        w = mu * (1.0 - mu)
        hess = (x * w[:, None]).T @ x
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("weighted normal equations are singular") from exc
        if not np.all(np.isfinite(step)):
            raise SingularDesignError("IRLS step is not finite")
        beta = beta + step
        if float(np.max(np.abs(beta))) > _COEF_NORM_GUARD:
            raise SeparationError("coefficients diverged; data are separated")
        if float(np.linalg.norm(step)) < 1e-10:
            eta = np.clip(x @ beta, -35.0, 35.0)
            grad_norm = float(np.max(np.abs(x.T @ (y - expit(eta)))))
            return LogisticModel(coef=beta, converged=True, n_iter=it, grad_norm=grad_norm)
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")


def ps_design(data: TrialData, full_ps_model: bool = False) -> np.ndarray:
    """Design matrix for the propensity model: intercept + main effects.

    By default only the 10 "measured" covariates enter (columns in covariate
    index order 1..10) and no interaction or nonlinear terms are included.
    ``full_ps_model=True`` restores all 13 covariates.
    """
    k = data.x.shape[1] if full_ps_model else N_MEASURED
    return np.column_stack([np.ones(data.n), data.x[:, :k]])


@dataclass
class WeightSet:
    """Per-subject analysis weights plus provenance.

    ``ps`` holds the estimated propensity score for each historical subject
    (NaN for current-trial subjects; for matched weights the scores built the
    subclasses rather than the weights). ``requires_q`` marks weight sets whose
    downstream regression must include the trial factor Q.
    """

    method: str
    ids: np.ndarray
    source: np.ndarray
    weights: np.ndarray
    ps: np.ndarray
    requires_q: bool
    htd_ess: float = field(init=False)

    def __post_init__(self) -> None:
        current = np.isin(self.source, ("MT", "MC"))
        if not np.all(self.weights[current] == 1.0):
            raise ConfigError("MT and MC subjects must have weight exactly 1")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ConfigError("weights must be finite and nonnegative")
        htd = self.weights[~current]
        sq = float(np.sum(htd**2))
        self.htd_ess = float(np.sum(htd)) ** 2 / sq if sq > 0 else 0.0

    def to_csv(self, path) -> None:
        """Audit export: `id,method,ps,weight`."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "method", "ps", "weight"])
            for i in range(self.ids.shape[0]):
                ps = "" if np.isnan(self.ps[i]) else repr(float(self.ps[i]))
                writer.writerow([int(self.ids[i]), self.method, ps,
                                 repr(float(self.weights[i]))])


def weight_from_ps(ps) -> np.ndarray:
    """Historical-control weight ps/(1-ps), with ps clamped away from {0, 1}."""
    ps = np.clip(np.asarray(ps, dtype=float), PS_CLIP, 1.0 - PS_CLIP)
    return ps / (1.0 - ps)


def propensity_scores(data: TrialData, htd_arms: tuple[str, ...],
                      full_ps_model: bool = False) -> tuple[LogisticModel, np.ndarray, np.ndarray]:
    """Fit MT-vs-historical membership on MT plus the given historical arms.

    Returns the fitted model, the row indices of the subset used, and the
    fitted propensity scores for those rows.
    """
    mask = data.arm_mask("MT", *htd_arms)
    idx = np.flatnonzero(mask)
    design = ps_design(data, full_ps_model)[idx]
    labels = (data.source[idx] == "MT").astype(float)
    model = fit_logistic(design, labels)
    return model, idx, model.predict_proba(design)


def separate_iptw(data: TrialData, full_ps_model: bool = False) -> WeightSet:
    """SIPTW: two propensity models, MT vs HC0 and MT vs HC1."""
    weights = np.ones(data.n)
    ps_col = np.full(data.n, np.nan)
    for arm in ("HC0", "HC1"):
        _, idx, ps = propensity_scores(data, (arm,), full_ps_model)
        in_arm = data.source[idx] == arm
        rows = idx[in_arm]
        ps_col[rows] = ps[in_arm]
        weights[rows] = weight_from_ps(ps[in_arm])
    return WeightSet(method="SIPTW", ids=data.ids, source=data.source,
                     weights=weights, ps=ps_col, requires_q=False)


def joint_iptw(data: TrialData, full_ps_model: bool = False) -> WeightSet:
    """JIPTW: one propensity model on MT vs pooled HC0+HC1; Q required downstream."""
    weights = np.ones(data.n)
    ps_col = np.full(data.n, np.nan)
    _, idx, ps = propensity_scores(data, ("HC0", "HC1"), full_ps_model)
    hist = data.source[idx] != "MT"
    rows = idx[hist]
    ps_col[rows] = ps[hist]
    weights[rows] = weight_from_ps(ps[hist])
    return WeightSet(method="JIPTW", ids=data.ids, source=data.source,
                     weights=weights, ps=ps_col, requires_q=True)


class LogisticIRLS(BaseEstimator):
    """sklearn-style wrapper around the IRLS logistic solver.

    Parameters
    ----------
    fit_intercept : bool
        Prepend an intercept column to X.
    tol, max_iter : float, int
        IRLS stopping controls.
    """

    def __init__(self, fit_intercept: bool = True, tol: float = 1e-8, max_iter: int = 100):
        self.fit_intercept = fit_intercept
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_matrix(X)
        if self.fit_intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        model = fit_logistic(X, y, tol=self.tol, max_iter=self.max_iter)
        if self.fit_intercept:
            self.intercept_ = float(model.coef[0])
            self.coef_ = model.coef[1:].copy()
        else:
            self.intercept_ = 0.0
            self.coef_ = model.coef.copy()
        self.n_iter_ = model.n_iter
        self.converged_ = model.converged
        return self

    def decision_function(self, X):
        X = check_matrix(X)
        return self.intercept_ + X @ self.coef_

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)
