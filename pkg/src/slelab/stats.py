"""Kolmogorov-Smirnov tests, Monte-Carlo summaries, convergence orders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import TooFewSamples

_MIN_SAMPLES = 20


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        order = np.argsort(s)
        object.__setattr__(self, "samples", s[order])
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("weights must be positive")
            object.__setattr__(self, "weights", w[order] / w.sum())

    def cdf(self, x):
        if self.weights is None:
            return np.searchsorted(self.samples, x, side="right") / len(self.samples)
        idx = np.searchsorted(self.samples, x, side="right")
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cw[idx]


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n_effective: float


def _kolmogorov_p(stat: float, n_eff: float) -> float:
    return float(special.kolmogorov(np.sqrt(n_eff) * stat))


def ks_one_sample(samples, cdf) -> KsResult:
    """Sup-norm distance to a reference CDF, asymptotic p-value."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    if n < _MIN_SAMPLES:
        raise TooFewSamples(f"need at least {_MIN_SAMPLES} samples, got {n}")
    c = np.asarray(cdf(s), dtype=float)
    lo = np.arange(n) / n
    hi = np.arange(1, n + 1) / n
    stat = float(max(np.max(hi - c), np.max(c - lo)))
    return KsResult(stat, _kolmogorov_p(stat, n), n)


def ks_two_sample(a, b) -> KsResult:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) < _MIN_SAMPLES or len(b) < _MIN_SAMPLES:
        raise TooFewSamples("both samples need at least 20 points")
    grid = np.concatenate([a, b])
    ca = np.searchsorted(a, grid, side="right") / len(a)
    cb = np.searchsorted(b, grid, side="right") / len(b)
    stat = float(np.max(np.abs(ca - cb)))
    n_eff = len(a) * len(b) / (len(a) + len(b))
    return KsResult(stat, _kolmogorov_p(stat, n_eff), n_eff)


def mc_mean_se(values):
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def convergence_order(errors, ratio: float = 2.0) -> float:
    """Least-squares slope of log(error) against log(step) for errors
    measured at steps decreasing by the given ratio."""
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    steps = ratio ** -np.arange(len(e))
    slope, _ = np.polyfit(np.log(steps), np.log(e), 1)
    return float(slope)
