import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exchmlmc import oracle
from exchmlmc.geometry import LevelGeometry
from exchmlmc.loss_models import BetaFactor, CoupledLevelSample, DiscreteFactor
from exchmlmc.mlmc import (
    BudgetExhausted,
    EstimatorKind,
    LevelSampler,
    LevelStats,
    adaptive_mlmc,
    level_difference_improved,
    level_difference_standard,
    level_estimator,
    optimal_allocation,
    single_level_estimate,
)
from exchmlmc.payoff import TranchePayoff, identity_payoff

P = TranchePayoff(0.25, 0.75)
MIX = DiscreteFactor(((0.1, 0.3), (0.5, 0.4), (0.9, 0.3)))


class TestDifferences:
    def test_standard_example(self):
        s = CoupledLevelSample.from_groups(1, [0.2, 0.4])
        assert level_difference_standard(s, P) == pytest.approx(0.05)

    def test_improved_example(self):
        s = CoupledLevelSample.from_groups(1, [0.2, 0.4])
        assert level_difference_improved(s, P) == pytest.approx(-0.025)

    @pytest.mark.parametrize("fn", [level_difference_standard, level_difference_improved])
    def test_equal_groups(self, fn):
        assert fn(CoupledLevelSample.from_groups(1, [0.6, 0.6, 0.6]), P) == 0.0
        assert fn(CoupledLevelSample.from_groups(1, [0.0, 0.0]), P) == 0.0

    @given(st.lists(st.floats(0.26, 0.75), min_size=2, max_size=7))
    def test_improved_exact_zero_in_one_piece(self, groups):
        assert level_difference_improved(CoupledLevelSample.from_groups(1, groups), P) == 0.0

    def test_batched(self):
        s = CoupledLevelSample.from_groups(1, [[0.2, 0.4], [0.5, 0.5], [0.9, 0.1]])
        np.testing.assert_allclose(level_difference_improved(s, P), [-0.025, 0.0, 0.0])


class TestLevelStats:
    def test_level_zero_injected(self):
        s = LevelStats.from_values(0, "standard", identity_payoff()(np.array([0.1, 0.2, 0.3])))
        assert s.mean == pytest.approx(0.2)

    def test_variance_needs_two(self):
        with pytest.raises(ValueError):
            LevelStats.from_values(1, "improved", [0.3]).variance

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=60), st.integers(1, 59))
    def test_merge_matches_one_pass(self, xs, cut):
        cut = min(cut, len(xs) - 1)
        a = LevelStats.from_values(1, "standard", xs[:cut])
        a.merge(LevelStats.from_values(1, "standard", xs[cut:]))
        assert a.n == len(xs)
        assert a.mean == pytest.approx(np.mean(xs), abs=1e-12)
        assert a.variance == pytest.approx(np.var(xs, ddof=1), abs=1e-12)


class TestLevelEstimator:
    def test_zero_factor(self):
        s = level_estimator("improved", DiscreteFactor.point(0.0), P, 2, 1000, LevelGeometry(5, 2, 2))
        assert s.mean == 0.0 and s.variance == 0.0

    @pytest.mark.parametrize("kind", list(EstimatorKind))
    @pytest.mark.parametrize("level", [0, 1, 2])
    def test_against_oracle(self, kind, level):
        geo = LevelGeometry(3, 2, 2)
        p = TranchePayoff(0.3, 0.55)
        s = level_estimator(kind, MIX, p, level, 200_000, geo, seed=11)
        if level == 0:
            exact = oracle.exact_expected_payoff(MIX, geo.N0, p)
        else:
            exact = oracle.exact_level_moments(MIX, level, geo, p, kind).mean
        assert abs(s.mean - exact) < 4 * s.stderr

    def test_variance_against_oracle(self):
        geo = LevelGeometry(2, 3, 2)
        m = oracle.exact_level_moments(MIX, 2, geo, P, "standard")
        s = level_estimator("standard", MIX, P, 2, 200_000, geo, seed=3)
        # variance of the sample variance from the exact fourth moment
        se = math.sqrt((m.fourth_moment - m.variance**2) / s.n)
        assert abs(s.variance - m.variance) < 4 * se + 1e-12

    def test_thread_count_does_not_change_results(self):
        geo = LevelGeometry(5, 5, 3)
        a = level_estimator("improved", BetaFactor(2, 2), P, 3, 30_000, geo, seed=5, threads=1)
        b = level_estimator("improved", BetaFactor(2, 2), P, 3, 30_000, geo, seed=5, threads=3)
        assert (a.n, a.mean, a.m2) == (b.n, b.mean, b.m2)

    def test_sample_i_is_independent_of_split(self):
        sampler = LevelSampler(BetaFactor(2, 2), P, LevelGeometry(5, 5, 2), "standard", seed=9)
        whole = sampler.values(2, 0, 20_000)
        parts = np.concatenate([sampler.values(2, 0, 7_001), sampler.values(2, 7_001, 20_000)])
        assert np.array_equal(whole, parts)

    def test_kinds_use_distinct_streams(self):
        geo = LevelGeometry(5, 5, 1)
        a = LevelSampler(BetaFactor(2, 2), identity_payoff(), geo, "standard", seed=9).values(0, 0, 100)
        b = LevelSampler(BetaFactor(2, 2), identity_payoff(), geo, "improved", seed=9).values(0, 0, 100)
        assert not np.array_equal(a, b)


class TestAllocation:
    def test_one_level(self):
        assert optimal_allocation([4.0], [1], 2.0) == [1]

    def test_two_levels(self):
        n = optimal_allocation([1.0, 0.25], [1, 4], 0.1)
        assert n == [200, 50]
        assert 1.0 / n[0] + 0.25 / n[1] <= 0.01

    def test_zero_variance_keeps_count(self):
        assert optimal_allocation([1.0, 0.0], [1, 5], 0.1, current=[10, 77])[1] == 77
        assert optimal_allocation([0.0, 0.0], [1, 5], 0.1, current=[3, 4]) == [3, 4]

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            optimal_allocation([1.0], [1], 0.0)

    @given(
        st.lists(st.floats(1e-12, 10.0), min_size=1, max_size=8),
        st.floats(1e-4, 1.0),
    )
    def test_identity_holds_exactly(self, variances, gamma):
        sizes = [5 * 5**l for l in range(len(variances))]
        n = optimal_allocation(variances, sizes, gamma)
        assert sum(Fraction(v) / k for v, k in zip(variances, n)) <= Fraction(gamma) ** 2


class TestAdaptive:
    def test_interior_point(self):
        res = adaptive_mlmc(DiscreteFactor.point(0.5), P, LevelGeometry(5, 5, 3), 1e-3, pilot_n=1000, seed=1)
        # small groups can still straddle a kink, so the means are zero up to noise
        assert all(abs(s.mean) < 4 * s.stderr + 1e-15 for s in res.levels[1:])
        assert abs(res.estimate - 0.25) < 4e-3

    def test_oracle_k3(self):
        geo = LevelGeometry(5, 1, 3)
        gamma = 1e-3
        res = adaptive_mlmc(MIX, P, geo, gamma, pilot_n=1000, seed=2)
        assert abs(res.estimate - oracle.exact_expected_payoff(MIX, geo.size(3), P)) < 4 * gamma
        assert res.allocation_variance <= gamma**2
        assert res.achieved_variance <= gamma**2

    def test_reproducible(self):
        def run():
            return adaptive_mlmc(BetaFactor(2, 2), P, LevelGeometry(5, 5, 3), 2e-3, pilot_n=500, seed=8).as_dict()
        assert run() == run()

    def test_threads_do_not_change_result(self):
        a = adaptive_mlmc(BetaFactor(2, 5), P, LevelGeometry(5, 5, 3), 1e-3, pilot_n=500, seed=8, threads=1).as_dict()
        b = adaptive_mlmc(BetaFactor(2, 5), P, LevelGeometry(5, 5, 3), 1e-3, pilot_n=500, seed=8, threads=4).as_dict()
        assert a == b

    def test_budget(self):
        with pytest.raises(BudgetExhausted) as exc:
            adaptive_mlmc(BetaFactor(2, 2), P, LevelGeometry(5, 5, 3), 1e-5, pilot_n=100, budget=1e4)
        assert exc.value.partial

    def test_partial_stddevs_nondecreasing(self):
        res = adaptive_mlmc(BetaFactor(2, 2), P, LevelGeometry(5, 5, 4), 1e-3, pilot_n=500, seed=4)
        sd = res.partial_stddevs()
        assert all(a <= b for a, b in zip(sd, sd[1:]))

    def test_telescoping_against_single_level(self):
        geo = LevelGeometry(5, 5, 2)
        p = TranchePayoff(0.1, 0.3)
        f = BetaFactor(2, 2)
        for kind in EstimatorKind:
            res = adaptive_mlmc(f, p, geo, 5e-4, kind, pilot_n=2000, seed=6)
            direct = single_level_estimate(f, p, geo.size(2), 400_000, seed=6)
            se = math.sqrt(res.achieved_variance + direct.stderr**2)
            assert abs(res.estimate - direct.mean) < 4 * se
