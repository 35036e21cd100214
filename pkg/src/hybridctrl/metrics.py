"""Bias/variance/MSE over replications and both effective-sample-size measures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError


def summarize(estimates, theta0: float) -> tuple[float, float, float]:
    """Bias |mean - theta0|, variance (n-1 denominator), and MSE (n denominator)."""
    est = np.asarray(estimates, dtype=float)
    if est.size < 2:
        raise ConfigError("need at least 2 estimates to summarize")
    mean = est.mean()
    bias = float(abs(mean - theta0))
    variance = float(np.sum((est - mean) ** 2) / (est.size - 1))
    mse = float(np.sum((est - theta0) ** 2) / est.size)
    return bias, variance, mse


def ess_frequentist(htd_weights) -> float:
    """Kish effective sample size of the historical-control weights: (sum w)^2 / sum w^2."""
    w = np.asarray(htd_weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise ConfigError("weights must be a nonempty, nonnegative vector")
    sq = float(np.sum(w**2))
    if sq == 0.0:
        raise ConfigError("weights must not all be zero")
    return float(np.sum(w)) ** 2 / sq


def ess_bayesian(posterior_var_method: float, posterior_var_nb: float,
                 n_current: int) -> float:
    """Variance-ratio ESS anchored at the nonborrowing posterior.

    n_current x var_NB / var_method: equals the current-trial size when
    borrowing adds nothing, and grows as the method's posterior tightens.
    """
    if posterior_var_method <= 0 or posterior_var_nb <= 0:
        raise ConfigError("posterior variances must be positive")
    return float(n_current) * posterior_var_nb / posterior_var_method


@dataclass(frozen=True)
class MethodSummary:
    """Aggregated performance of one method in one (scenario, MT size) cell."""

    method: str
    n_used: int
    bias: float
    variance: float
    mse: float
    mean_ess: float
    n_failed: int


SUMMARY_COLUMNS = ("scenario", "mt_size", "method", "bias", "variance", "mse",
                   "ess", "n_used", "n_failed")


def write_summary_csv(rows, path) -> None:
    """Emit summary rows (dicts keyed by SUMMARY_COLUMNS) as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            out = []
            for col in SUMMARY_COLUMNS:
                v = row[col]
                if isinstance(v, float):
                    out.append("" if math.isnan(v) else repr(v))
                else:
                    out.append(v)
            writer.writerow(out)


def read_summary_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row: dict = dict(raw)
            for col in ("bias", "variance", "mse", "ess"):
                row[col] = float(raw[col]) if raw[col] not in ("", None) else float("nan")
            for col in ("mt_size", "n_used", "n_failed"):
                if raw.get(col) not in ("", None):
                    row[col] = int(raw[col])
            rows.append(row)
    return rows
