"""Input-validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError


def check_matrix(x, name: str = "X") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ConfigError(f"{name} must be 2-dimensional, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ConfigError(f"{name} contains non-finite values")
    return x


def check_vector(v, n: int | None = None, name: str = "y") -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if n is not None and v.shape[0] != n:
        raise ConfigError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{name} contains non-finite values")
    return v


def check_binary(v, n: int | None = None, name: str = "y") -> np.ndarray:
    v = check_vector(v, n, name)
    if not np.all((v == 0.0) | (v == 1.0)):
        raise ConfigError(f"{name} must contain only 0/1 values")
    return v


def check_weights(w, n: int, name: str = "weights") -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = check_vector(w, n, name)
    if np.any(w < 0):
        raise ConfigError(f"{name} must be nonnegative")
    return w
