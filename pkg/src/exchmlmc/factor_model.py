"""Structural jump-diffusion default model on a discrete observation grid.

The distance-to-default of firm ``i`` is

    X_t = X_0 + beta*t + sqrt(1-rho) W_t + sqrt(rho) B_t + J_t

with ``J`` a compound Poisson process with Normal jump sizes. Defaults are
only checked at the observation dates ``q, 2q, ..., T``, so the paths are
sampled exactly on that grid (jumps are aggregated per interval).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import LevelGeometry
from .loss_models import CoupledLevelSample, LossFactorModel


@dataclass(frozen=True)
class StructuralParams:
    mu_x0: float = 4.6
    sigma_x0: float = 0.8
    beta_drift: float = 0.0
    rho: float = 0.13
    jump_intensity: float = 0.04
    jump_mean: float = -0.5
    jump_var: float = 0.17
    maturity: float = 5.0
    obs_interval: float = 0.25

    def __post_init__(self):
        if self.sigma_x0 <= 0:
            raise ValueError("sigma_x0 must be positive")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must lie in [0, 1)")
        if self.jump_intensity < 0 or self.jump_var < 0:
            raise ValueError("jump intensity and variance must be non-negative")
        if self.maturity <= 0 or self.obs_interval <= 0:
            raise ValueError("maturity and observation interval must be positive")
        steps = self.maturity / self.obs_interval
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError(f"maturity/obs_interval = {steps} is not a positive integer")

    @property
    def n_dates(self) -> int:
        return int(round(self.maturity / self.obs_interval))

    @property
    def dates(self) -> np.ndarray:
        return self.obs_interval * np.arange(1, self.n_dates + 1)

    def value_moments(self):
        """Theoretical mean and variance of ``X`` at each observation date."""
        t = self.dates
        mean = self.mu_x0 + self.beta_drift * t + self.jump_intensity * t * self.jump_mean
        var = self.sigma_x0**2 + t + self.jump_intensity * t * (self.jump_mean**2 + self.jump_var)
        return mean, var


REFERENCE_PARAMS = StructuralParams()


def rho_a(params: StructuralParams) -> float:
    """Overall instantaneous correlation between two firms' distance-to-default."""
    zeta = params.jump_intensity * (params.jump_mean**2 + params.jump_var)
    return (params.rho + zeta) / (1.0 + zeta)


@dataclass(frozen=True)
class CommonPath:
    """Per-interval systemic increments ``sqrt(rho) dB_j + dJ_j``; shape ``(..., n_dates)``."""

    systemic_increments: np.ndarray

    def __len__(self):
        return self.systemic_increments.shape[-1]


def sample_common_path(params: StructuralParams, rng: np.random.Generator, size=None) -> CommonPath:
    shape = (params.n_dates,) if size is None else (size, params.n_dates)
    q = params.obs_interval
    increments = math.sqrt(params.rho * q) * rng.standard_normal(shape)
    if params.jump_intensity > 0:
        counts = rng.poisson(params.jump_intensity * q, size=shape)
        # sum of `counts` i.i.d. N(mu, s^2) is N(counts*mu, counts*s^2)
        increments += counts * params.jump_mean + np.sqrt(counts * params.jump_var) * rng.standard_normal(shape)
    return CommonPath(increments)


def evaluate_default(x0, drift_per_step, idio_increments, common: CommonPath):
    """True where the running value hits ``<= 0`` at any observation date.

    Works on single firms or broadcastable batches; the date axis is last.
    """
    idio = np.asarray(idio_increments, dtype=float)
    sys = np.asarray(common.systemic_increments if isinstance(common, CommonPath) else common, dtype=float)
    if idio.shape[-1] != sys.shape[-1]:
        raise ValueError(f"idiosyncratic path has {idio.shape[-1]} steps, common path {sys.shape[-1]}")
    path = np.asarray(x0, dtype=float)[..., None] + np.cumsum(drift_per_step + idio + sys, axis=-1)
    out = (path <= 0.0).any(axis=-1)
    return bool(out) if out.ndim == 0 else out


def sample_firm_values(params: StructuralParams, common: CommonPath, n_firms: int, rng):
    """Values at every observation date for ``n_firms`` firms per common path.

    Returns shape ``common.shape[:-1] + (n_firms, n_dates)``.
    """
    sys = common.systemic_increments
    batch = sys.shape[:-1]
    q = params.obs_interval
    x0 = params.mu_x0 + params.sigma_x0 * rng.standard_normal(batch + (n_firms,))
    idio = math.sqrt((1.0 - params.rho) * q) * rng.standard_normal(batch + (n_firms, params.n_dates))
    idio += params.beta_drift * q
    idio += sys[..., None, :]
    np.cumsum(idio, axis=-1, out=idio)
    idio += x0[..., None]
    return idio


def sample_firm_defaults(params: StructuralParams, common: CommonPath, n_firms: int, rng):
    return (sample_firm_values(params, common, n_firms, rng) <= 0.0).any(axis=-1)


def sample_firm_default(params: StructuralParams, common: CommonPath, rng) -> bool:
    q = params.obs_interval
    x0 = params.mu_x0 + params.sigma_x0 * rng.standard_normal()
    idio = math.sqrt((1.0 - params.rho) * q) * rng.standard_normal(params.n_dates)
    return evaluate_default(x0, params.beta_drift * q, idio, common)


def sample_structural_coupled(params: StructuralParams, level: int, geometry: LevelGeometry, rng, size: int = 1) -> CoupledLevelSample:
    """Coupled sample by explicit per-firm simulation under one common path per draw."""
    if level < 1:
        raise ValueError("coupled samples need level >= 1")
    n_coarse = geometry.size(level - 1)
    common = sample_common_path(params, rng, size)
    y = sample_firm_defaults(params, common, geometry.M * n_coarse, rng)
    groups = y.reshape(size, geometry.M, n_coarse).mean(axis=-1)
    return CoupledLevelSample.from_groups(level, groups)


@dataclass(frozen=True)
class StructuralModel(LossFactorModel):
    """Loss model backed by firm-by-firm structural simulation.

    The conditional default probability has no closed form, so
    :meth:`sample_factor` returns the loss fraction of a large proxy
    portfolio of ``proxy_size`` firms.
    """

    params: StructuralParams = REFERENCE_PARAMS
    proxy_size: int = 10_000

    name = "structural"

    def sample_factor(self, rng, size=None):
        n = 1 if size is None else size
        out = np.empty(n)
        chunk = max(1, 2**20 // (self.proxy_size * self.params.n_dates))
        for start in range(0, n, chunk):
            stop = min(n, start + chunk)
            common = sample_common_path(self.params, rng, stop - start)
            out[start:stop] = sample_firm_defaults(self.params, common, self.proxy_size, rng).mean(axis=-1)
        return out[0] if size is None else out

    def sample_coupled(self, level, geometry, size, rng):
        return sample_structural_coupled(self.params, level, geometry, rng, size)

    def sample_loss(self, n_names, size, rng):
        common = sample_common_path(self.params, rng, size)
        return sample_firm_defaults(self.params, common, n_names, rng).mean(axis=-1)

    def sample_level0(self, geometry, size, rng):
        return self.sample_loss(geometry.N0, size, rng)

    def sample_cost(self, level, geometry):
        """Firm-quarters simulated per level sample."""
        return geometry.size(level) * self.params.n_dates

    def describe(self):
        d = {"type": "structural", "proxy_size": self.proxy_size}
        d.update(self.params.__dict__)
        return d
