"""Gaussian-approximation performance of linear fusion statistics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import q_tail, q_tail_inverse


class DegenerateStatisticWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StatisticMoments:
    mean_h0: float
    var_h0: float
    mean_h1: float
    var_h1: float

    def __post_init__(self):
        if self.var_h0 < 0 or self.var_h1 < 0:
            raise ValueError("variances must be nonnegative")


@dataclass(frozen=True)
class PerformancePoint:
    pd: float
    pf: float
    pe: float
    pi0: float = 0.5
    pi1: float = 0.5


def weighted_moments(weights, pmf, multiplicity=None):
    """Mean and variance of sum_i d_{i,u_i} for independent reports.

    ``weights`` and ``pmf`` are (..., n, K). The variance is the sum of
    per-sensor variances. ``multiplicity`` (..., n) counts how many
    identical sensors each row stands for.
    """
    d = np.asarray(weights, dtype=float)
    p = np.asarray(pmf, dtype=float)
    m1 = np.sum(p * d, axis=-1)
    m2 = np.sum(p * d * d, axis=-1)
    var_i = np.maximum(m2 - m1 * m1, 0.0)
    if multiplicity is not None:
        w = np.asarray(multiplicity, dtype=float)
        return np.sum(w * m1, axis=-1), np.sum(w * var_i, axis=-1)
    return np.sum(m1, axis=-1), np.sum(var_i, axis=-1)


def statistic_moments(weights, mixture_pmfs_h0, mixture_pmfs_h1) -> StatisticMoments:
    mean0, var0 = weighted_moments(weights, mixture_pmfs_h0)
    mean1, var1 = weighted_moments(weights, mixture_pmfs_h1)
    return StatisticMoments(float(mean0), float(var0), float(mean1), float(var1))


def exceed_probability(threshold, mean, var):
    """P(L > threshold) for L ~ N(mean, var); a step function when var == 0."""
    threshold, mean, var = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (threshold, mean, var)))
    sd = np.sqrt(var)
    safe_sd = np.where(sd > 0, sd, 1.0)
    smooth = q_tail((threshold - mean) / safe_sd)
    out = np.where(sd > 0, smooth, (mean > threshold).astype(float))
    return float(out) if out.ndim == 0 else out


def predict_performance(m: StatisticMoments, threshold: float, priors=(0.5, 0.5)) -> PerformancePoint:
    pi0, pi1 = priors
    pd = exceed_probability(threshold, m.mean_h1, m.var_h1)
    pf = exceed_probability(threshold, m.mean_h0, m.var_h0)
    return PerformancePoint(pd, pf, pi0 * pf + pi1 * (1.0 - pd), pi0, pi1)


def calibrated_threshold(mean_h0, var_h0, target_pfa):
    """Array form of :func:`adaptive_threshold`; zero variance gives the mean."""
    return q_tail_inverse(target_pfa) * np.sqrt(np.maximum(var_h0, 0.0)) + mean_h0


def adaptive_threshold(m: StatisticMoments, target_pfa: float) -> float:
    """Threshold meeting ``target_pfa`` under the Gaussian approximation."""
    if m.var_h0 == 0:
        warnings.warn("zero H0 variance; threshold falls back to the H0 mean", DegenerateStatisticWarning, stacklevel=2)
        return float(m.mean_h0)
    return float(calibrated_threshold(m.mean_h0, m.var_h0, target_pfa))


def deflection_coefficient(m: StatisticMoments) -> float:
    if m.var_h1 <= 0:
        raise ValueError("deflection coefficient needs a positive H1 variance")
    return (m.mean_h1 - m.mean_h0) ** 2 / m.var_h1


def crlb_attack_parameter(x: float, n_samples: int) -> float:
    """Cramer-Rao bound x(1 - x)/n for the attack strength seen by reference sensors."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x in (0.0, 1.0):
        warnings.warn("degenerate attack parameter: the bound is zero", DegenerateStatisticWarning, stacklevel=2)
        return 0.0
    return x * (1.0 - x) / n_samples
