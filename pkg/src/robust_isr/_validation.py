"""Input validation helpers shared by the estimators and config loaders."""

from __future__ import annotations

import numbers

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a parameter or configuration value is invalid.

    ``key`` names the offending parameter and ``line`` (when known) the line of
    the file it was read from.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"{key}: "
        super().__init__(prefix + message)


class ConvergenceError(RuntimeError):
    """Value iteration hit ``max_iter`` before reaching tolerance."""

    def __init__(self, message, residual, n_iter, step=None):
        self.residual = residual
        self.n_iter = n_iter
        self.step = step
        super().__init__(message)


def check_int(value, name, min_value=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"expected an integer, got {value!r}", key=name)
    if min_value is not None and value < min_value:
        raise ConfigurationError(f"must be >= {min_value}, got {value}", key=name)
    return int(value)


def check_scalar(value, name, low=None, high=None, include_low=True, include_high=True):
    """Check that ``value`` is a finite real inside the given interval."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigurationError(f"expected a real number, got {value!r}", key=name)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigurationError("must be finite", key=name)
    if low is not None:
        bad = value < low if include_low else value <= low
        if bad:
            op = ">=" if include_low else ">"
            raise ConfigurationError(f"must be {op} {low}, got {value}", key=name)
    if high is not None:
        bad = value > high if include_high else value >= high
        if bad:
            op = "<=" if include_high else "<"
            raise ConfigurationError(f"must be {op} {high}, got {value}", key=name)
    return value


def check_probability_vector(b, name="belief", atol=1e-12):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(b.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {b.sum()!r})")
    return b


def check_node(v, n_nodes):
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or not 0 <= v < n_nodes:
        raise IndexError(f"node {v!r} out of range for a graph with {n_nodes} nodes")
    return int(v)


def check_value_function(V, n_nodes):
    V = np.asarray(V, dtype=float)
    if V.shape != (n_nodes, 2):
        raise ValueError(f"value function must have shape ({n_nodes}, 2), got {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("value function entries must be finite")
    return V
