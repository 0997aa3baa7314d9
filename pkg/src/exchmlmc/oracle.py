"""Exact enumeration for small instances.

All probabilities are built in log space. A factor model enters only through
``log E[L^s (1-L)^(n-s)]``, the probability of one particular 0/1 sequence
of length ``n`` containing ``s`` ones; this is available in closed form for
discrete mixtures and Beta factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .geometry import LevelGeometry
from .loss_models import BetaFactor, DiscreteFactor, LossFactorModel, VasicekOneFactor
from .mlmc import EstimatorKind
from .payoff import GenericPayoff, TranchePayoff

MAX_N = 10**6
MAX_OUTCOMES = 10**7
QUAD_TOL = 1e-10


class EnumerationTooLarge(ValueError):
    pass


def _log_comb(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def log_sequence_weight(factor: LossFactorModel, s, n: int):
    """``log E[L^s (1-L)^(n-s)]`` for integer arrays ``s``."""
    s = np.asarray(s, dtype=float)
    if isinstance(factor, DiscreteFactor):
        terms = (
            np.log(factor.probs)
            + special.xlogy(s[..., None], factor.values)
            + special.xlog1py(n - s[..., None], -factor.values)
        )
        return special.logsumexp(terms, axis=-1)
    if isinstance(factor, BetaFactor):
        return special.betaln(factor.alpha + s, factor.beta + n - s) - special.betaln(factor.alpha, factor.beta)
    raise TypeError(f"no exact sequence weights for {type(factor).__name__}")


def binomial_pmf(n: int, L: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return np.exp(_log_comb(n, k) + special.xlogy(k, L) + special.xlog1py(n - k, -L))


def count_pmf(factor: LossFactorModel, n: int) -> np.ndarray:
    """Law of the number of ones among ``n`` exchangeable indicators."""
    if n > MAX_N:
        raise EnumerationTooLarge(f"N={n} exceeds the enumeration limit {MAX_N}")
    k = np.arange(n + 1, dtype=float)
    return np.exp(_log_comb(n, k) + log_sequence_weight(factor, k, n))


def exact_expected_payoff(factor: LossFactorModel, N: int, payoff) -> float:
    """``E[p(L_N)]`` by summation over the ``N + 1`` possible losses."""
    if N < 1:
        raise ValueError("N must be >= 1")
    pmf = count_pmf(factor, N)
    return float(pmf @ payoff(np.arange(N + 1) / N))


def expected_limit_payoff(factor: LossFactorModel, payoff) -> float:
    """``E[p(L)]``; adaptive quadrature for continuous factors, with kinks as breakpoints."""
    if isinstance(factor, DiscreteFactor):
        return float(factor.probs @ payoff(factor.values))
    points = list(getattr(payoff, "kinks", ()))
    if isinstance(factor, BetaFactor):
        val, _ = integrate.quad(
            lambda l: payoff(l) * factor.pdf(l), 0.0, 1.0, points=points or None, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200
        )
        return float(val)
    if isinstance(factor, VasicekOneFactor):
        if factor.rho == 0.0:
            return float(payoff(factor.pd))
        # integrate over the normal market factor; the payoff kinks map to z-breakpoints
        zpts = []
        for k in points:
            zpts.append((special.ndtri(factor.pd) - math.sqrt(1 - factor.rho) * special.ndtri(k)) / math.sqrt(factor.rho))
        zpts = sorted(z for z in zpts if -12 < z < 12)
        val, _ = integrate.quad(
            lambda z: payoff(float(factor.transform(z))) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
            -12.0, 12.0, points=zpts or None, epsabs=QUAD_TOL, limit=200,
        )
        return float(val)
    raise TypeError(f"no limit expectation for {type(factor).__name__}")


def _factor_expectation(factor: LossFactorModel, fn, points=()) -> float:
    """``E[fn(L)]`` for a scalar function of the factor."""
    if isinstance(factor, DiscreteFactor):
        return float(sum(p * fn(v) for v, p in zip(factor.values, factor.probs)))
    if isinstance(factor, BetaFactor):
        val, _ = integrate.quad(lambda l: fn(l) * factor.pdf(l), 0.0, 1.0, points=list(points) or None, epsabs=QUAD_TOL, limit=200)
        return float(val)
    raise TypeError(f"no factor expectation for {type(factor).__name__}")


def conditional_error_moment(L: float, N: int, payoff, power: int) -> float:
    """``E[(p(L_N) - p(L))**power | L]``."""
    err = payoff(np.arange(N + 1) / N) - payoff(L)
    return float(binomial_pmf(N, L) @ err**power)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    fourth_moment: float  # raw E[X^4]


def exact_error_moments(factor: LossFactorModel, N: int, payoff) -> Moments:
    """Moments of ``P_N - P`` over the joint law of ``(L, L_N)``."""
    pts = getattr(payoff, "kinks", ())
    m1 = _factor_expectation(factor, lambda l: conditional_error_moment(l, N, payoff, 1), pts)
    m2 = _factor_expectation(factor, lambda l: conditional_error_moment(l, N, payoff, 2), pts)
    m4 = _factor_expectation(factor, lambda l: conditional_error_moment(l, N, payoff, 4), pts)
    return Moments(m1, max(m2 - m1 * m1, 0.0), m4)


def _rational_payoff(payoff):
    if isinstance(payoff, TranchePayoff):
        k1, k2 = Fraction(payoff.k1), Fraction(payoff.k2)
        return lambda x: min(max(x - k1, Fraction(0)), k2 - k1)
    if isinstance(payoff, GenericPayoff):
        # the evaluators of the built-in generic payoffs are polynomials
        return payoff.evaluator
    raise TypeError(f"no rational evaluation for {type(payoff).__name__}")


def rational_error_moments(factor: DiscreteFactor, N: int, payoff) -> Moments:
    """:func:`exact_error_moments` in exact rational arithmetic.

    Every atom, probability and payoff breakpoint is taken at the exact value
    of its binary float, so the result is the true value for the objects as
    represented. Cost grows quickly with ``N``; meant for deciding near-ties.
    """
    if not isinstance(factor, DiscreteFactor):
        raise TypeError("rational moments need a discrete factor")
    p = _rational_payoff(payoff)
    m1 = m2 = m4 = Fraction(0)
    for v, w in zip(factor.values, factor.probs):
        v, w = Fraction(float(v)), Fraction(float(w))
        pv = p(v)
        for k in range(N + 1):
            weight = w * math.comb(N, k) * v**k * (1 - v) ** (N - k)
            if weight == 0:
                continue
            d = p(Fraction(k, N)) - pv
            m1 += weight * d
            m2 += weight * d * d
            m4 += weight * d**4
    return Moments(m1, m2 - m1 * m1, m4)


def _moments_from(weights, diffs) -> tuple:
    return float(weights @ diffs), float(weights @ diffs**2), float(weights @ diffs**4)


def exact_level_moments(factor: LossFactorModel, level: int, geometry: LevelGeometry, payoff, kind) -> Moments:
    """Exact moments of one level difference by enumerating group counts.

    The standard difference only depends on the first group's count and the
    count in the remaining ``N_l - N_{l-1}`` names, so that pair is
    enumerated. The improved difference needs the full ``M``-tuple of group
    counts, limited to ``MAX_OUTCOMES`` tuples.
    """
    if level < 1:
        raise ValueError("level differences need level >= 1")
    kind = EstimatorKind(kind)
    n = geometry.size(level - 1)
    nl = geometry.size(level)
    M = geometry.M
    coarse_p = payoff(np.arange(n + 1) / n)
    fine_p = payoff(np.arange(nl + 1) / nl)
    log_c = _log_comb(n, np.arange(n + 1, dtype=float))
    log_w = log_sequence_weight(factor, np.arange(nl + 1), nl)

    if kind is EstimatorKind.STANDARD:
        rest = nl - n
        if (n + 1) * (rest + 1) > MAX_OUTCOMES:
            raise EnumerationTooLarge(f"{(n + 1) * (rest + 1)} outcomes")
        c1 = np.arange(n + 1)[:, None]
        r = np.arange(rest + 1)[None, :]
        s = c1 + r
        logp = log_c[:, None] + _log_comb(rest, r.astype(float)) + log_w[s]
        w = np.exp(logp).ravel()
        d = (fine_p[s] - coarse_p[c1]).ravel()
        m1, m2, m4 = _moments_from(w, d)
        return Moments(m1, max(m2 - m1 * m1, 0.0), m4)

    if (n + 1) ** M > MAX_OUTCOMES:
        raise EnumerationTooLarge(f"{(n + 1) ** M} outcomes exceed {MAX_OUTCOMES}")
    # outer loop over the first group's count keeps memory at (n+1)**(M-1)
    grids = np.meshgrid(*([np.arange(n + 1)] * (M - 1)), indexing="ij", sparse=True)
    rest_sum = sum(grids) if M > 1 else np.zeros(())
    rest_logc = sum(log_c[g] for g in grids)
    rest_p = sum(coarse_p[g] for g in grids)
    m1 = m2 = m4 = 0.0
    for c1 in range(n + 1):
        s = c1 + rest_sum
        w = np.exp(log_c[c1] + rest_logc + log_w[s])
        d = fine_p[s] - (coarse_p[c1] + rest_p) / M
        a, b, c = _moments_from(w.ravel(), np.broadcast_to(d, w.shape).ravel())
        m1 += a
        m2 += b
        m4 += c
    return Moments(m1, max(m2 - m1 * m1, 0.0), m4)


def exact_fourth_central_moment_of_loss(L: float, N: int) -> float:
    """``E[(L_N - L)^4 | L]`` in closed form."""
    v = L * (1.0 - L)
    return 3.0 * v * v / N**2 + v * (1.0 - 6.0 * v) / N**3


def binomial_central_moment(L: float, N: int, power: int) -> float:
    """``E[(L_N - L)^power | L]`` by direct summation."""
    return float(binomial_pmf(N, L) @ (np.arange(N + 1) / N - L) ** power)


def binomial_upper_tail(N: int, L: float, K: float) -> float:
    """``P(L_N > K | L)``."""
    k = np.arange(N + 1)
    return float(binomial_pmf(N, L)[k / N > K].sum())


def binomial_lower_tail(N: int, L: float, K: float) -> float:
    """``P(L_N <= K | L)``."""
    k = np.arange(N + 1)
    return float(binomial_pmf(N, L)[k / N <= K].sum())


def deviation_probability(N: int, L: float, K: float) -> float:
    """Probability that ``L_N`` lands on the other side of ``K`` from ``L``."""
    return binomial_upper_tail(N, L, K) if L <= K else binomial_lower_tail(N, L, K)


def rate_function(L, K):
    """Bernoulli relative entropy ``K log(K/L) + (1-K) log((1-K)/(1-L))``."""
    L = np.asarray(L, dtype=float)
    K = np.asarray(K, dtype=float)
    if np.any((L <= 0) | (L >= 1)):
        raise ValueError("rate function needs 0 < L < 1")
    if np.any((K < 0) | (K > 1)):
        raise ValueError("rate function needs 0 <= K <= 1")
    g = special.rel_entr(K, L) + special.rel_entr(1 - K, 1 - L)
    return float(g) if g.ndim == 0 else g


def ld_bound(N: int, L: float, K: float) -> tuple:
    """``(exp(-N g(L,K)), exp(-N (K-L)^2))``: the sharp and the quadratic tail bound."""
    return math.exp(-N * rate_function(L, K)), math.exp(-N * (K - L) ** 2)


# --- bounds with explicit constants -----------------------------------------------


def lipschitz_bias_bound(c_p: float, N: int) -> float:
    return c_p / (2.0 * math.sqrt(N))


def lipschitz_variance_bound(c_p: float, N: int) -> float:
    return c_p**2 / (4.0 * N)


def smooth_bias_bound(C_p: float, N: int) -> float:
    return C_p / (8.0 * N)


def tranche_bias_bound(c_L: float, N: int) -> float:
    return 4.0 * c_L * math.sqrt(math.pi) / N


def standard_level_variance_bound(c_p: float, M: int, N_l: int) -> float:
    return c_p**2 * (M + 1) / (2.0 * N_l)


def improved_level_variance_bound(c_L: float, M: int, N_l: int) -> float:
    c2 = c_L * 4.0 * math.sqrt(M * math.pi) * (math.sqrt(2.0) + math.sqrt(M)) * math.sqrt(7.0 / 8.0 * (M * M + 6 * M + 1))
    return c2 / N_l**1.5


def fourth_moment_error_bound(N: int) -> float:
    return 7.0 / (16.0 * N * N)


def fourth_moment_level_bound(M: int, N_l: int) -> float:
    return 7.0 / 8.0 * (M * M + 6 * M + 1) / (N_l * N_l)
