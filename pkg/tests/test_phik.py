import math

import numpy as np
import pytest

from phik.core import Grid2D, Observations, PointSet, SingularCovarianceError
from phik.mc import Ensemble, ensemble_std, lift_ensemble, mc_cov, mc_mean, observe, phik_predict
from phik.models import StochasticBranin, generate_ensemble
from phik.rng import RngSpec


def brute_cov(r):
    n, M = r.shape
    mean = [math.fsum(r[i]) / M for i in range(n)]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = math.fsum((r[i, m] - mean[i]) * (r[j, m] - mean[j]) for m in range(M)) / (M - 1)
    return out


def random_ensemble(rng, n=5, M=7):
    return Ensemble(PointSet(rng.random((n, 2))), rng.standard_normal((n, M)) * rng.random(n)[:, None] * 3)


class TestMoments:
    def test_identical_realizations(self):
        f = np.array([1.0, -2.0, 0.5])
        ens = Ensemble(PointSet([[0.0], [1.0], [2.0]]), np.repeat(f[:, None], 4, axis=1))
        assert np.array_equal(mc_mean(ens), f)
        assert np.array_equal(mc_cov(ens), np.zeros((3, 3)))
        assert np.array_equal(ensemble_std(ens), np.zeros(3))

    def test_plus_minus_pair(self):
        ens = Ensemble(PointSet([[0.0]]), [[1.5, -1.5]])
        assert mc_mean(ens)[0] == 0.0
        assert mc_cov(ens)[0, 0] == 2 * 1.5**2
        assert ensemble_std(ens)[0] == pytest.approx(1.5 * math.sqrt(2), rel=1e-15)

    def test_cov_matches_double_loop(self, rng):
        for _ in range(5):
            ens = random_ensemble(rng, n=int(rng.integers(2, 9)), M=int(rng.integers(2, 13)))
            ref = brute_cov(ens.realizations)
            assert np.max(np.abs(mc_cov(ens) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
            assert np.allclose(ensemble_std(ens), np.sqrt(np.diag(ref)), rtol=1e-12)

    def test_cov_blocks(self, rng):
        ens = random_ensemble(rng, n=6, M=9)
        full = mc_cov(ens)
        assert np.allclose(mc_cov(ens, [1, 4], [0, 2, 5]), full[np.ix_([1, 4], [0, 2, 5])], atol=1e-15)

    def test_branin_mean_independent_accumulator(self):
        g = Grid2D(41, 41)
        ens = generate_ensemble(StochasticBranin(), g, 1000, RngSpec(3))
        ref = math.fsum(ens.realizations[0]) / 1000
        assert mc_mean(ens)[0] == pytest.approx(ref, rel=1e-12)

    def test_psd_and_rank(self, rng):
        ens = random_ensemble(rng, n=8, M=4)
        lam = np.linalg.eigvalsh(mc_cov(ens))
        assert lam[0] >= -1e-10 * np.trace(mc_cov(ens)) / 8
        assert np.sum(lam > 1e-10 * lam[-1]) <= 3


class TestPredict:
    def setup_method(self):
        r = np.random.default_rng(7)
        self.grid = Grid2D(6, 5)
        self.ens = Ensemble(self.grid, r.standard_normal((self.grid.size, 40)))
        self.idx = np.array([3, 8, 14, 22])

    def test_zero_residual(self):
        mu = mc_mean(self.ens)
        obs = observe(self.grid, self.idx, mu[self.idx])
        p = phik_predict(self.ens, obs)
        assert np.allclose(p.mean, mu, atol=1e-12)
        C = mc_cov(self.ens)
        c = C[self.idx]
        ref = np.diag(C) - np.einsum("ij,ij->j", c, np.linalg.solve(C[np.ix_(self.idx, self.idx)], c))
        assert np.allclose(p.mse, np.maximum(ref, 0), atol=1e-12)

    def test_interpolates_full_rank(self):
        y = np.array([1.0, -3.0, 2.0, 0.5])
        p = phik_predict(self.ens, observe(self.grid, self.idx, y), alpha=0.0)
        assert np.allclose(p.mean[self.idx], y, atol=1e-10)
        assert p.alpha == 0.0

    def test_variance_never_increases(self):
        p = phik_predict(self.ens, observe(self.grid, self.idx, np.arange(4.0)))
        assert np.all(p.mse <= self.ens.moments.variance(None) + 1e-10)

    def test_affine_equivariance(self):
        y = np.array([1.0, -3.0, 2.0, 0.5])
        a, b = -2.5, 4.0
        p = phik_predict(self.ens, observe(self.grid, self.idx, y), alpha=0.0)
        ens2 = Ensemble(self.grid, a * self.ens.realizations + b)
        p2 = phik_predict(ens2, observe(self.grid, self.idx, a * y + b), alpha=0.0)
        assert np.allclose(p2.mean, a * p.mean + b, atol=1e-10)
        assert np.allclose(p2.mse, a * a * p.mse, atol=1e-10)

    def test_rank_deficient_uses_regularization(self):
        small = Ensemble(self.grid, self.ens.realizations[:, :3])
        p = phik_predict(small, observe(self.grid, self.idx, np.arange(4.0)))
        assert p.alpha > 0

    def test_rank_deficient_with_zero_alpha_fails(self):
        small = Ensemble(self.grid, self.ens.realizations[:, :3])
        with pytest.raises(SingularCovarianceError):
            phik_predict(small, observe(self.grid, self.idx, np.arange(4.0)), alpha=0.0)

    def test_off_grid_observation_rejected(self):
        obs = Observations(PointSet([[0.123, 0.456]]), [1.0])
        with pytest.raises(KeyError):
            phik_predict(self.ens, obs)

    def test_single_realization_rejected(self):
        with pytest.raises(ValueError):
            phik_predict(Ensemble(self.grid, self.ens.realizations[:, :1]), observe(self.grid, [0], [1.0]))


def test_lift_ensemble_is_exact_at_nodes_and_linear_between():
    g = Grid2D(3, 3)
    vals = (2 * g.points[:, 0] - g.points[:, 1])[:, None] * np.array([[1.0, 2.0]])
    lifted = lift_ensemble(Ensemble(g, vals), [[0.25, 0.75], [1.0, 0.5]])
    expected = np.array([2 * 0.25 - 0.75, 2.0 - 0.5])
    assert np.allclose(lifted.realizations, expected[:, None] * [1.0, 2.0], atol=1e-14)
