"""Common-factor distributions and the conditional Bernoulli layer.

Given a draw of the common factor ``L``, the portfolio's default indicators
are i.i.d. Bernoulli(L). Within a level sample the ``N_l`` indicators are
split into ``M`` consecutive groups of ``N_{l-1}``; by exchangeability each
group's default count is an exact Binomial(N_{l-1}, L) draw, so the analytic
models never materialise individual indicators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .geometry import LevelGeometry


@dataclass(frozen=True)
class CoupledLevelSample:
    """Fine loss together with its ``M`` coarse group losses.

    Arrays carry an optional leading batch axis: ``group_losses`` has shape
    ``(..., M)`` and ``fine_loss`` shape ``(...)``.
    """

    level: int
    group_losses: np.ndarray
    fine_loss: np.ndarray

    @classmethod
    def from_groups(cls, level: int, group_losses) -> "CoupledLevelSample":
        g = np.asarray(group_losses, dtype=float)
        return cls(level, g, g.mean(axis=-1))

    @property
    def M(self) -> int:
        return self.group_losses.shape[-1]

    def __len__(self):
        return 1 if self.fine_loss.ndim == 0 else self.fine_loss.shape[0]


def sample_group_losses(L, level: int, geometry: LevelGeometry, rng: np.random.Generator) -> CoupledLevelSample:
    """Draw the ``M`` group losses at ``level`` for each factor value in ``L``."""
    if level < 1:
        raise ValueError("coupled samples need level >= 1")
    L = np.asarray(L, dtype=float)
    n_coarse = geometry.size(level - 1)
    counts = rng.binomial(n_coarse, L[..., None], size=L.shape + (geometry.M,))
    return CoupledLevelSample.from_groups(level, counts / n_coarse)


def sample_level0_loss(L, n0: int, rng: np.random.Generator):
    L = np.asarray(L, dtype=float)
    return rng.binomial(n0, L, size=L.shape) / n0


class LossFactorModel:
    """Base class for models where ``L`` can be sampled directly.

    Subclasses implement :meth:`sample_factor`; the coupled level samples are
    then exact binomial draws given the factor.
    """

    name = "abstract"
    #: declared Lipschitz constant of the factor CDF, when analytically known
    cdf_lipschitz = None

    def sample_factor(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError(f"{self.name} has no closed-form CDF")

    def mean(self) -> float:
        raise NotImplementedError

    # --- level sampling --------------------------------------------------------

    def sample_coupled(self, level: int, geometry: LevelGeometry, size: int, rng) -> CoupledLevelSample:
        return sample_group_losses(self.sample_factor(rng, size), level, geometry, rng)

    def sample_level0(self, geometry: LevelGeometry, size: int, rng):
        return sample_level0_loss(self.sample_factor(rng, size), geometry.N0, rng)

    def sample_loss(self, n_names: int, size: int, rng):
        """Direct (uncoupled) draws of the loss fraction of ``n_names`` names."""
        return sample_level0_loss(self.sample_factor(rng, size), n_names, rng)

    def sample_cost(self, level: int, geometry: LevelGeometry) -> int:
        """Cost units of one level sample: binomial draws for analytic models."""
        return 1 if level == 0 else geometry.M

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DiscreteFactor(LossFactorModel):
    """Finitely supported ``L``: ``atoms`` is a sequence of (value, probability)."""

    atoms: tuple
    values: np.ndarray = field(init=False, repr=False, compare=False)
    probs: np.ndarray = field(init=False, repr=False, compare=False)

    name = "discrete"

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        if not atoms:
            raise ValueError("need at least one atom")
        values = np.array([a[0] for a in atoms])
        probs = np.array([a[1] for a in atoms])
        if np.any((values < 0) | (values > 1)):
            raise ValueError("atom values must lie in [0, 1]")
        if np.any(probs < 0):
            raise ValueError("atom probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point(cls, value: float) -> "DiscreteFactor":
        return cls(((value, 1.0),))

    def sample_factor(self, rng, size=None):
        if len(self.atoms) == 1:
            return self.values[0] if size is None else np.full(size, self.values[0])
        return rng.choice(self.values, size=size, p=self.probs)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = (self.probs * (self.values <= x[..., None])).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def describe(self):
        return {"type": "discrete", "atoms": [list(a) for a in self.atoms]}


@dataclass(frozen=True)
class BetaFactor(LossFactorModel):
    alpha: float
    beta: float

    name = "beta"

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta parameters must be positive")

    @property
    def cdf_lipschitz(self):
        # bounded density iff both shapes >= 1; the bound is the density at the mode
        a, b = self.alpha, self.beta
        if a < 1 or b < 1:
            return None
        if a == 1 and b == 1:
            return 1.0
        mode = (a - 1) / (a + b - 2)
        return float(stats.beta.pdf(mode, a, b))

    def sample_factor(self, rng, size=None):
        return rng.beta(self.alpha, self.beta, size=size)

    def cdf(self, x):
        return special.betainc(self.alpha, self.beta, np.clip(x, 0.0, 1.0))

    def pdf(self, x):
        return stats.beta.pdf(x, self.alpha, self.beta)

    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def describe(self):
        return {"type": "beta", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class VasicekOneFactor(LossFactorModel):
    """Large-portfolio limit of the one-factor Gaussian copula."""

    pd: float
    rho: float

    name = "vasicek"

    def __post_init__(self):
        if not (0.0 < self.pd < 1.0):
            raise ValueError("pd must lie in (0, 1)")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must lie in [0, 1)")

    def transform(self, z):
        """Map a standard-normal market factor to the conditional default probability."""
        return special.ndtr((special.ndtri(self.pd) - math.sqrt(self.rho) * np.asarray(z)) / math.sqrt(1.0 - self.rho))

    def sample_factor(self, rng, size=None):
        if self.rho == 0.0:
            return self.pd if size is None else np.full(size, self.pd)
        return self.transform(rng.standard_normal(size))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.rho == 0.0:
            return (x >= self.pd).astype(float)
        with np.errstate(divide="ignore"):
            z = (math.sqrt(1.0 - self.rho) * special.ndtri(np.clip(x, 0.0, 1.0)) - special.ndtri(self.pd)) / math.sqrt(self.rho)
        return special.ndtr(z)

    def mean(self) -> float:
        return self.pd

    def describe(self):
        return {"type": "vasicek", "pd": self.pd, "rho": self.rho}
