"""Post-processing of multilevel runs: tail sums, rate fits and empirical CDFs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .mlmc import MlmcResult


@dataclass(frozen=True)
class SkPoint:
    k: int
    s_k: float
    stderr: float
    #: expected ratio S_k / |G_k - G| when the bias decays like 1/N
    coverage: float


@dataclass(frozen=True)
class RateFit:
    levels: tuple
    intercept: float
    slope: float
    residual: float

    @property
    def rate(self) -> float:
        """Decay rate, i.e. minus the slope."""
        return -self.slope


def s_k_curve(result: MlmcResult) -> list:
    """``S_k = |sum_{l>k} mean_l|`` for ``k = 0..K-1`` from the stored level means."""
    K = result.geometry.K
    M = result.geometry.M
    means = result.means
    var_terms = [s.variance / s.n for s in result.levels]
    out = []
    for k in range(K):
        out.append(
            SkPoint(
                k,
                abs(float(sum(means[k + 1 :]))),
                math.sqrt(sum(var_terms[k + 1 :])),
                1.0 - float(M) ** -(K - k),
            )
        )
    return out


def fit_rate(values, M: int, levels=None) -> RateFit:
    """Least-squares line through ``(l, log_M |value_l|)``.

    Non-positive values are dropped with a warning; at least three must remain.
    """
    values = np.asarray(values, dtype=float)
    levels = np.arange(values.size) if levels is None else np.asarray(levels)
    if levels.shape != values.shape:
        raise ValueError("levels and values must align")
    keep = values > 0
    if not keep.all():
        warnings.warn(f"dropping non-positive values at levels {levels[~keep].tolist()}", stacklevel=2)
    x, y = levels[keep].astype(float), np.log(values[keep]) / math.log(M)
    if x.size < 3:
        raise ValueError(f"need at least 3 positive values to fit a rate, have {x.size}")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(tuple(int(l) for l in levels[keep]), float(intercept), float(slope), float(np.sqrt(np.mean(resid**2))))


def variance_rate(result: MlmcResult) -> RateFit:
    """Fit of ``V_l`` over levels ``1..K``."""
    levels = np.arange(1, result.geometry.K + 1)
    return fit_rate([result.levels[l].variance for l in levels], result.geometry.M, levels)


def mean_rate(result: MlmcResult) -> RateFit:
    """Fit of ``|mean_l|`` over levels ``1..K`` that are distinguishable from zero."""
    levels = [l for l in range(1, result.geometry.K + 1) if abs(result.levels[l].mean) >= 2 * result.levels[l].stderr]
    return fit_rate([abs(result.levels[l].mean) for l in levels], result.geometry.M, levels)


def s_k_rate(result: MlmcResult, ks=None) -> RateFit:
    points = s_k_curve(result)
    ks = range(1, result.geometry.K) if ks is None else ks
    return fit_rate([points[k].s_k for k in ks], result.geometry.M, list(ks))


def empirical_cdf(samples, grid) -> np.ndarray:
    """Right-continuous empirical CDF on ``grid``; rows are ``(l, F(l))``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("need at least one sample")
    grid = np.asarray(grid, dtype=float)
    return np.column_stack([grid, np.searchsorted(s, grid, side="right") / s.size])


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance between the samples and a continuous CDF."""
    return float(stats.kstest(np.asarray(samples, dtype=float).ravel(), cdf).statistic)
