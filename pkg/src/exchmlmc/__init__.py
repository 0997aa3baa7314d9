"""Multilevel Monte Carlo for expected functionals of exchangeable Bernoulli loss fractions."""
from .geometry import LevelGeometry
from .loss_models import BetaFactor, CoupledLevelSample, DiscreteFactor, LossFactorModel, VasicekOneFactor
from .factor_model import StructuralModel, StructuralParams, rho_a
from .mlmc import EstimatorKind, LevelStats, MlmcResult, adaptive_mlmc, level_estimator, optimal_allocation
from .payoff import GenericPayoff, TrancheQuote, TranchePayoff, quote_to_payoff

__all__ = [
    "BetaFactor",
    "CoupledLevelSample",
    "DiscreteFactor",
    "EstimatorKind",
    "GenericPayoff",
    "LevelGeometry",
    "LevelStats",
    "LossFactorModel",
    "MlmcResult",
    "StructuralModel",
    "StructuralParams",
    "TrancheQuote",
    "TranchePayoff",
    "VasicekOneFactor",
    "adaptive_mlmc",
    "level_estimator",
    "optimal_allocation",
    "quote_to_payoff",
    "rho_a",
]
