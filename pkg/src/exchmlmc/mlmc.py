"""Multilevel estimators over portfolio size and the adaptive allocation driver.

Level ``l`` works with ``N_l = N0 * M**l`` names. A level-``l`` sample draws
one factor value and the ``M`` coarse group losses; the fine loss is their
average. Two level differences are offered:

* ``standard``: ``p(fine) - p(group_1)``
* ``improved``: ``p(fine) - mean_m p(group_m)``, which is exactly zero
  whenever all groups fall in one linear piece of a tranche payoff.

Each sample ``i`` at level ``l`` of estimator ``kind`` is generated from a
substream keyed by ``(seed, kind, level, i // block)``, with a block length
that depends only on the model and level. Results therefore do not depend on
how draws are batched or on the number of worker threads.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np

from . import rng as rngmod
from .geometry import LevelGeometry
from .loss_models import CoupledLevelSample

log = logging.getLogger(__name__)

BLOCK_COST = 2**20
DEFAULT_PILOT = 10_000
DEFAULT_BUDGET = 1e9


class EstimatorKind(str, Enum):
    STANDARD = "standard"
    IMPROVED = "improved"

    @property
    def stream_id(self) -> int:
        return rngmod.STREAM_STANDARD if self is EstimatorKind.STANDARD else rngmod.STREAM_IMPROVED


class BudgetExhausted(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# --- level differences ----------------------------------------------------------


def level_difference_standard(sample: CoupledLevelSample, payoff):
    return payoff(sample.fine_loss) - payoff(sample.group_losses[..., 0])


def level_difference_improved(sample: CoupledLevelSample, payoff):
    diff = payoff(sample.fine_loss) - payoff(sample.group_losses).mean(axis=-1)
    interval_index = getattr(payoff, "interval_index", None)
    if interval_index is not None:
        # p is linear on each piece, so the difference vanishes exactly there
        idx = interval_index(sample.group_losses)
        same = (idx == idx[..., :1]).all(axis=-1)
        diff = np.where(same, 0.0, diff)
        if np.ndim(diff) == 0:
            diff = float(diff)
    return diff


_DIFFERENCES = {
    EstimatorKind.STANDARD: level_difference_standard,
    EstimatorKind.IMPROVED: level_difference_improved,
}


# --- running statistics ---------------------------------------------------------


@dataclass
class LevelStats:
    """Sample count, mean and sum of squared deviations of one level's differences."""

    level: int
    kind: EstimatorKind
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    cost: float = 0.0

    @classmethod
    def from_values(cls, level, kind, values, cost_per_sample=0.0) -> "LevelStats":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return cls(level, EstimatorKind(kind))
        mean = float(values.mean())
        m2 = float(((values - mean) ** 2).sum())
        return cls(level, EstimatorKind(kind), n, mean, m2, float(n * cost_per_sample))

    def merge(self, other: "LevelStats") -> "LevelStats":
        """Combine with ``other`` (pairwise update of Chan, Golub and LeVeque)."""
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
        else:
            n = self.n + other.n
            delta = other.mean - self.mean
            self.mean += delta * other.n / n
            self.m2 += other.m2 + delta * delta * self.n * other.n / n
            self.n = n
        self.cost += other.cost
        return self

    @property
    def variance(self) -> float:
        if self.n < 2:
            raise ValueError(f"level {self.level}: variance needs at least 2 samples, have {self.n}")
        return max(self.m2 / (self.n - 1), 0.0)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n)

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "kind": self.kind.value,
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance if self.n >= 2 else None,
            "cost": self.cost,
        }


# --- sampling -------------------------------------------------------------------


class LevelSampler:
    """Deterministic block-wise generator of level differences for one estimator."""

    def __init__(self, model, payoff, geometry: LevelGeometry, kind=EstimatorKind.IMPROVED, seed: int = 0, threads: int = 1, stream_id: Optional[int] = None):
        self.model = model
        self.payoff = payoff
        self.geometry = geometry
        self.kind = EstimatorKind(kind)
        self.seed = int(seed)
        self.threads = max(1, int(threads))
        self.stream_id = self.kind.stream_id if stream_id is None else stream_id
        self._cache = {}

    def cost_per_sample(self, level: int) -> float:
        return float(self.model.sample_cost(level, self.geometry))

    def block_size(self, level: int) -> int:
        return max(1, int(BLOCK_COST // self.cost_per_sample(level)))

    def _block(self, level: int, index: int) -> np.ndarray:
        cached = self._cache.get(level)
        if cached is not None and cached[0] == index:
            return cached[1]
        size = self.block_size(level)
        gen = rngmod.substream(self.seed, self.stream_id, level, index)
        if level == 0:
            values = self.payoff(self.model.sample_level0(self.geometry, size, gen))
        else:
            sample = self.model.sample_coupled(level, self.geometry, size, gen)
            values = _DIFFERENCES[self.kind](sample, self.payoff)
        return np.asarray(values, dtype=float)

    def values(self, level: int, start: int, stop: int) -> np.ndarray:
        """Differences for sample indices ``start..stop-1`` at ``level``."""
        if stop <= start:
            return np.empty(0)
        b = self.block_size(level)
        first, last = start // b, (stop - 1) // b
        indices = range(first, last + 1)
        if self.threads > 1 and len(indices) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                blocks = list(pool.map(lambda i: self._block(level, i), indices))
        else:
            blocks = [self._block(level, i) for i in indices]
        self._cache[level] = (last, blocks[-1])
        out = np.concatenate(blocks) if len(blocks) > 1 else blocks[0]
        return out[start - first * b : stop - first * b]

    def draw(self, level: int, start: int, stop: int) -> LevelStats:
        # summarise block by block so memory stays bounded for large top-ups
        stats = LevelStats(level, self.kind)
        b = self.block_size(level)
        chunk = b * max(1, self.threads) * max(1, 2**22 // (b * max(1, self.threads)))
        cps = self.cost_per_sample(level)
        pos = start
        while pos < stop:
            nxt = min(stop, pos + chunk)
            stats.merge(LevelStats.from_values(level, self.kind, self.values(level, pos, nxt), cps))
            pos = nxt
        return stats


def level_estimator(kind, model, payoff, level: int, n: int, geometry: LevelGeometry, seed: int = 0, threads: int = 1) -> LevelStats:
    """Mean and variance of ``n`` independent level-``level`` differences."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    return LevelSampler(model, payoff, geometry, kind, seed, threads).draw(level, 0, n)


def single_level_estimate(model, payoff, n_names: int, n: int, seed: int = 0) -> LevelStats:
    """Plain Monte Carlo estimate of ``E[p(L_N)]`` with ``N = n_names``."""
    stats = LevelStats(-1, EstimatorKind.STANDARD)
    block = max(1, BLOCK_COST // max(1, n_names))
    for i, start in enumerate(range(0, n, block)):
        size = min(block, n - start)
        gen = rngmod.substream(seed, rngmod.STREAM_SINGLE_LEVEL, n_names, i)
        stats.merge(LevelStats.from_values(-1, "standard", payoff(model.sample_loss(n_names, size, gen))))
    return stats


# --- allocation -----------------------------------------------------------------


def optimal_allocation(variances, sizes, gamma: float, current=None) -> list:
    """Sample counts ``ceil(gamma**-2 * sqrt(V_l/N_l) * sum_j sqrt(V_j N_j))``.

    Levels with zero variance keep their current count (0 if none given).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    v = np.asarray(variances, dtype=float)
    nn = np.asarray(sizes, dtype=float)
    if v.shape != nn.shape:
        raise ValueError("variances and sizes must align")
    if np.any(v < 0):
        raise ValueError("variances must be non-negative")
    cur = np.zeros(v.shape, dtype=np.int64) if current is None else np.asarray(current, dtype=np.int64)
    total = float(np.sqrt(v * nn).sum())
    out = cur.copy()
    if total == 0.0:
        return [int(x) for x in out]
    gsq = gamma * gamma
    live = v > 0
    out[live] = np.ceil(np.sqrt(v[live] / nn[live]) * total / gsq).astype(np.int64)
    # the ceil makes the identity hold in exact arithmetic up to rounding of
    # the float inputs; check it exactly and bump the worst level if needed
    bound = Fraction(gamma) ** 2
    idx = np.flatnonzero(live)
    while sum(Fraction(float(v[i])) / int(out[i]) for i in idx) > bound:
        worst = idx[np.argmax(v[idx] / out[idx])]
        out[worst] += 1
    return [int(x) for x in out]


# --- adaptive driver ------------------------------------------------------------


@dataclass
class MlmcResult:
    estimate: float
    levels: list
    gamma: float
    kind: EstimatorKind
    geometry: LevelGeometry
    optimal_n: list
    variances_used: list
    allocation_history: list = field(default_factory=list)

    @property
    def achieved_variance(self) -> float:
        return float(sum(s.variance / s.n for s in self.levels))

    @property
    def allocation_variance(self) -> float:
        """``sum V_l / n_l*`` for the variances the final allocation was computed from."""
        return float(sum(v / n for v, n in zip(self.variances_used, self.optimal_n) if v > 0))

    @property
    def std_bound(self) -> float:
        return self.gamma

    @property
    def means(self) -> list:
        return [s.mean for s in self.levels]

    @property
    def variances(self) -> list:
        return [s.variance for s in self.levels]

    @property
    def sample_counts(self) -> list:
        return [s.n for s in self.levels]

    @property
    def total_cost(self) -> float:
        return float(sum(s.cost for s in self.levels))

    @property
    def total_work(self) -> float:
        """``sum n_l N_l``, the cost model used by the allocation."""
        return float(sum(s.n * self.geometry.size(s.level) for s in self.levels))

    def partial_estimates(self) -> list:
        """``G_k`` for ``k = 0..K``."""
        return [float(x) for x in np.cumsum(self.means)]

    def partial_stddevs(self) -> list:
        return [math.sqrt(x) for x in np.cumsum([s.variance / s.n for s in self.levels])]

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "estimate": self.estimate,
            "gamma": self.gamma,
            "achieved_variance": self.achieved_variance,
            "allocation_variance": self.allocation_variance,
            "total_cost": self.total_cost,
            "total_work": self.total_work,
            "geometry": {"M": self.geometry.M, "N0": self.geometry.N0, "K": self.geometry.K},
            "levels": [s.as_dict() for s in self.levels],
            "optimal_n": self.optimal_n,
            "variances_used": self.variances_used,
            "partial_estimates": self.partial_estimates(),
            "partial_stddevs": self.partial_stddevs(),
            "allocation_history": self.allocation_history,
        }


def adaptive_mlmc(model, payoff, geometry: LevelGeometry, gamma: float, kind=EstimatorKind.IMPROVED, pilot_n: int = DEFAULT_PILOT, seed: int = 0, budget: float = DEFAULT_BUDGET, threads: int = 1, max_rounds: int = 50) -> MlmcResult:
    """Adaptive multilevel estimate of ``E[p(L_{N_K})]`` with ``Var <= gamma**2``.

    Levels are introduced one at a time. Each new level gets ``pilot_n``
    samples, then all active levels are topped up to the optimal counts;
    the top-up repeats with refreshed variances until no level needs more.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if pilot_n < 2:
        raise ValueError("pilot_n must be at least 2")
    kind = EstimatorKind(kind)
    sampler = LevelSampler(model, payoff, geometry, kind, seed, threads)
    stats: list = []
    history: list = []
    optimal: list = []
    used: list = []

    def spent():
        return sum(s.cost for s in stats)

    def extend(level, target):
        s = stats[level]
        extra = target - s.n
        if extra <= 0:
            return
        planned = extra * sampler.cost_per_sample(level)
        if spent() + planned > budget:
            raise BudgetExhausted(
                f"level {level} needs {extra} more samples ({planned:.3g} cost units); "
                f"budget {budget:.3g}, spent {spent():.3g}",
                partial=stats,
            )
        s.merge(sampler.draw(level, s.n, target))

    for k in geometry.levels:
        stats.append(LevelStats(k, kind))
        extend(k, pilot_n)
        sizes = geometry.sizes[: k + 1]
        for _ in range(max_rounds):
            used = [s.variance for s in stats]
            optimal = optimal_allocation(used, sizes, gamma, [s.n for s in stats])
            history.append({"k": k, "variances": used, "optimal_n": optimal})
            log.debug("k=%d V=%s n*=%s", k, used, optimal)
            if all(s.n >= t for s, t in zip(stats, optimal)):
                break
            for level, target in enumerate(optimal):
                extend(level, target)
        else:
            log.warning("allocation did not settle after %d rounds at k=%d", max_rounds, k)

    estimate = float(sum(s.mean for s in stats))
    return MlmcResult(estimate, stats, gamma, kind, geometry, optimal, used, history)
