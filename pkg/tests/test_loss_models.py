import numpy as np
import pytest
from scipy import stats

from exchmlmc.geometry import LevelGeometry
from exchmlmc.loss_models import (
    BetaFactor,
    CoupledLevelSample,
    DiscreteFactor,
    VasicekOneFactor,
    sample_group_losses,
    sample_level0_loss,
)
from exchmlmc.rng import substream


@pytest.fixture
def rng():
    return substream(20240601, 99)


class TestFactors:
    def test_point_mass(self, rng):
        assert np.all(DiscreteFactor.point(0.3).sample_factor(rng, 100) == 0.3)

    def test_discrete_validation(self):
        with pytest.raises(ValueError):
            DiscreteFactor(((0.2, 0.5), (0.4, 0.4)))
        with pytest.raises(ValueError):
            DiscreteFactor(((1.2, 1.0),))

    def test_discrete_frequencies(self, rng):
        f = DiscreteFactor(((0.1, 0.3), (0.5, 0.4), (0.9, 0.3)))
        x = f.sample_factor(rng, 200_000)
        counts = [(x == v).sum() for v in f.values]
        assert stats.chisquare(counts, f.probs * x.size).pvalue > 1e-4

    def test_discrete_cdf(self):
        f = DiscreteFactor(((0.1, 0.3), (0.5, 0.4), (0.9, 0.3)))
        np.testing.assert_allclose(f.cdf([0.0, 0.1, 0.49, 0.5, 1.0]), [0, 0.3, 0.3, 0.7, 1.0])

    def test_vasicek_zero_correlation(self, rng):
        assert np.all(VasicekOneFactor(0.1, 0.0).sample_factor(rng, 50) == 0.1)

    def test_beta_mean(self, rng):
        x = BetaFactor(2, 2).sample_factor(rng, 10**6)
        se = x.std() / np.sqrt(x.size)
        assert abs(x.mean() - 0.5) < 3 * se

    def test_beta_cdf_lipschitz(self):
        assert BetaFactor(1, 1).cdf_lipschitz == 1.0
        assert BetaFactor(2, 2).cdf_lipschitz == pytest.approx(1.5)
        assert BetaFactor(0.5, 2).cdf_lipschitz is None

    def test_vasicek_mean_is_pd(self, rng):
        x = VasicekOneFactor(0.1, 0.2).sample_factor(rng, 10**6)
        assert abs(x.mean() - 0.1) < 4 * x.std() / 1e3


class TestGroupLosses:
    @pytest.mark.parametrize("L, expected", [(0.0, 0.0), (1.0, 1.0)])
    def test_degenerate(self, rng, L, expected):
        s = sample_group_losses(np.full(100, L), 3, LevelGeometry(5, 2, 3), rng)
        assert np.all(s.group_losses == expected)
        assert np.all(s.fine_loss == expected)

    def test_two_fair_coins_uniform(self, rng):
        s = sample_group_losses(np.full(100_000, 0.5), 1, LevelGeometry(2, 1, 1), rng)
        code = (2 * s.group_losses[:, 0] + s.group_losses[:, 1]).astype(int)
        counts = np.bincount(code, minlength=4)
        assert stats.chisquare(counts).pvalue > 1e-4

    def test_fine_is_group_mean_and_on_lattice(self, rng):
        geo = LevelGeometry(5, 5, 2)
        s = sample_group_losses(BetaFactor(2, 2).sample_factor(rng, 1000), 2, geo, rng)
        assert np.array_equal(s.fine_loss, s.group_losses.mean(axis=-1))
        scaled = s.group_losses * geo.size(1)
        np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)

    def test_conditional_mean_and_variance(self, rng):
        geo = LevelGeometry(5, 2, 2)
        L = 0.3
        n = 200_000
        s = sample_group_losses(np.full(n, L), 2, geo, rng)
        nl = geo.size(2)
        assert abs(s.fine_loss.mean() - L) < 4 * np.sqrt(L * (1 - L) / nl / n)
        v = s.fine_loss.var(ddof=1)
        # variance of the sample variance for a (nearly normal) mean of Bernoullis
        assert v == pytest.approx(L * (1 - L) / nl, rel=4 * np.sqrt(2 / n) + 0.01)

    def test_exchangeability_against_single_binomial(self, rng):
        geo = LevelGeometry(5, 3, 1)
        L = BetaFactor(2, 5).sample_factor(rng, 50_000)
        # compare integer counts; float losses differ in the last ulp
        coupled = np.rint(sample_group_losses(L, 1, geo, rng).fine_loss * geo.size(1))
        direct = rng.binomial(geo.size(1), L)
        assert stats.ks_2samp(coupled, direct).pvalue > 1e-4

    def test_level_zero(self, rng):
        assert np.all(sample_level0_loss(np.zeros(10), 5, rng) == 0)
        assert np.all(sample_level0_loss(np.ones(10), 5, rng) == 1)
        x = sample_level0_loss(np.full(10**6, 0.5), 1, rng)
        assert abs(x.mean() - 0.5) < 4 * 0.5 / 1e3

    def test_level_validation(self, rng):
        with pytest.raises(ValueError):
            sample_group_losses(np.array([0.5]), 0, LevelGeometry(), rng)

    def test_single_sample_shape(self):
        s = CoupledLevelSample.from_groups(1, [0.2, 0.4])
        assert s.fine_loss == pytest.approx(0.3)
        assert s.M == 2 and len(s) == 1
