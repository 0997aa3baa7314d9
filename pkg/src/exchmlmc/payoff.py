"""Payoff functionals applied to loss fractions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class DegenerateTrancheError(ValueError):
    pass


def _check_domain(l):
    arr = np.asarray(l, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("loss fraction must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class TranchePayoff:
    """Tranche loss ``[l - k1]^+ - [l - k2]^+`` between attachment ``k1`` and
    detachment ``k2``."""

    k1: float
    k2: float

    def __post_init__(self):
        if not (0.0 <= self.k1 < self.k2 <= 1.0):
            raise ValueError(f"need 0 <= k1 < k2 <= 1, got k1={self.k1}, k2={self.k2}")

    lipschitz_constant = 1.0
    derivative_lipschitz_constant = None

    @property
    def width(self) -> float:
        return self.k2 - self.k1

    @property
    def kinks(self) -> tuple:
        return tuple(k for k in (self.k1, self.k2) if 0.0 < k < 1.0)

    def evaluate(self, l):
        arr = _check_domain(l)
        out = np.clip(arr - self.k1, 0.0, self.k2 - self.k1)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def interval_index(self, l):
        """Linearity interval of ``l``: 0 for [0,k1], 1 for (k1,k2], 2 for (k2,1]."""
        return np.searchsorted(np.array([self.k1, self.k2]), np.asarray(l, dtype=float), side="left")


def tranche_evaluate(payoff: TranchePayoff, l):
    return payoff.evaluate(l)


@dataclass(frozen=True)
class GenericPayoff:
    """Arbitrary payoff with declared Lipschitz constants.

    ``derivative`` is only needed for the second-order remainder check
    when ``derivative_lipschitz_constant`` is declared.
    """

    evaluator: Callable
    lipschitz_constant: float
    derivative_lipschitz_constant: Optional[float] = None
    derivative: Optional[Callable] = None
    name: str = "generic"

    def __post_init__(self):
        if self.lipschitz_constant < 0:
            raise ValueError("lipschitz_constant must be >= 0")
        if self.derivative_lipschitz_constant is not None and self.derivative_lipschitz_constant < 0:
            raise ValueError("derivative_lipschitz_constant must be >= 0")

    def evaluate(self, l):
        arr = _check_domain(l)
        out = np.asarray(self.evaluator(arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate


def identity_payoff() -> GenericPayoff:
    return GenericPayoff(lambda x: x, 1.0, 0.0, lambda x: np.ones_like(x), name="identity")


def square_payoff() -> GenericPayoff:
    return GenericPayoff(lambda x: x * x, 2.0, 2.0, lambda x: 2.0 * x, name="square")


@dataclass(frozen=True)
class TrancheQuote:
    """Market tranche quoted on the notional, with recovery rate ``recovery``."""

    attach: float
    detach: float
    recovery: float = 0.4

    def __post_init__(self):
        if not (0.0 <= self.attach < self.detach <= 1.0):
            raise ValueError(f"need 0 <= attach < detach <= 1, got ({self.attach}, {self.detach})")
        if not (0.0 <= self.recovery < 1.0):
            raise ValueError(f"recovery must lie in [0, 1), got {self.recovery}")

    @property
    def loss_scale(self) -> float:
        return 1.0 - self.recovery

    def reported_loss(self, expected_payoff: float) -> float:
        return self.loss_scale * expected_payoff


def quote_to_payoff(q: TrancheQuote) -> TranchePayoff:
    """Rescale a quoted tranche to the loss-fraction scale, clamping at full loss."""
    k1 = min(q.attach / q.loss_scale, 1.0)
    k2 = min(q.detach / q.loss_scale, 1.0)
    if k1 >= k2:
        raise DegenerateTrancheError(
            f"tranche ({q.attach}, {q.detach}] collapses to ({k1}, {k2}] at recovery {q.recovery}"
        )
    return TranchePayoff(k1, k2)


ITRAXX_TRANCHES = ((0.0, 0.03), (0.03, 0.06), (0.06, 0.09), (0.09, 0.12), (0.12, 0.22), (0.22, 1.0))
