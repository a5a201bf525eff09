import json
import math
from pathlib import Path

import numpy as np
import pytest

from phik.core import Grid2D
from phik.models import (
    BoundaryResidualModel,
    BraninParams,
    GaussianTwoLevelModel,
    StochasticBranin,
    StochasticBraninSample,
    branin,
    bubble,
    constrained_field_model,
    generate_ensemble,
    generate_levels,
    generate_two_level,
    halton_design,
    held_out_realization,
    random_coefficients,
    stochastic_branin,
)
from phik.rng import RngSpec

DATA = Path(__file__).parent / "data"
P = BraninParams()


def scalar_branin(x, y, a, b, c, r, g, p, q, ghat=None):
    xt, yt = 15 * x - 5, 15 * y
    return a * (yt - b * xt * xt + c * xt - r) ** 2 + g * (1 - p) * math.cos(xt) + (g if ghat is None else ghat) + q * x


def scalar_stochastic(x, y, xi):
    bsum = qsum = 0.0
    for i in (1, 2, 3):
        bsum += math.sin((2 * i - 0.5) * math.pi * x) * xi[2 * i - 2] / (4 * i - 1)
        bsum += math.sin((2 * i + 0.5) * math.pi * y) * xi[2 * i - 1] / (4 * i + 1)
        qsum += math.cos((2 * i - 1.5) * math.pi * x) * xi[2 * i + 4] / (4 * i - 3)
        qsum += math.cos((2 * i - 0.5) * math.pi * y) * xi[2 * i + 5] / (4 * i - 1)
    b = P.b * (0.9 + 0.2 / math.pi * bsum)
    q = P.q * (1.0 + 0.6 / math.pi * qsum)
    return scalar_branin(x, y, P.a, b, P.c, P.r, P.g, P.p, q, ghat=20.0)


class TestBranin:
    def test_defaults(self):
        assert P.b == 5.1 / (4 * math.pi**2) and P.c == 5 / math.pi and P.p == 1 / (8 * math.pi)

    def test_scaled_origin_point(self):
        # x = 1/3 gives x~ = 0, so only the y~ - r part of the square survives
        expected = (2.275 - 6.0) ** 2 + 10 * (1 - 1 / (8 * math.pi)) + 10 + 5 / 3
        assert branin(1 / 3, 2.275 / 15) == pytest.approx(expected, rel=1e-14)

    def test_square_term_vanishes(self):
        params = BraninParams(q=0.0)
        x = (math.pi + 5) / 15
        y = (P.b * math.pi**2 - P.c * math.pi + P.r) / 15
        assert branin(x, y, params) == pytest.approx(P.g * (1 - P.p) * math.cos(math.pi) + P.g, abs=1e-12)

    def test_second_implementation(self):
        for x, y in [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0)]:
            assert branin(x, y) == pytest.approx(scalar_branin(x, y, *vars(P).values()), rel=1e-12, abs=1e-12)


class TestStochasticBranin:
    def test_zero_noise(self):
        s = StochasticBraninSample(np.zeros(12))
        for x, y in [(0.1, 0.2), (0.8, 0.4)]:
            ref = branin(x, y, BraninParams(b=0.9 * P.b)) + 20.0 - 10.0
            assert stochastic_branin(x, y, s) == pytest.approx(ref, rel=1e-13)

    def test_fixture(self):
        data = json.loads((DATA / "branin_fixture.json").read_text())
        s = StochasticBraninSample(data["xi"])
        for x, y in data["points"]:
            ref = scalar_stochastic(x, y, data["xi"])
            assert stochastic_branin(x, y, s) == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_mean_coefficient(self):
        xi = np.random.default_rng(0).standard_normal((10_000, 12))
        pts = np.array([[0.2, 0.9], [0.7, 0.3]])
        bhat, _ = random_coefficients(pts[:, 0], pts[:, 1], xi)
        se = bhat.std(axis=1, ddof=1) / math.sqrt(10_000)
        assert np.all(np.abs(bhat.mean(axis=1) - 0.9 * P.b) <= 3 * se)

    def test_sample_length(self):
        with pytest.raises(ValueError):
            StochasticBraninSample(np.zeros(11))


class TestGeneration:
    def test_reproducible(self):
        g = Grid2D(5, 4)
        a = generate_ensemble("stochastic-branin", g, 3, RngSpec(9))
        b = generate_ensemble("stochastic-branin", g, 3, RngSpec(9))
        c = generate_ensemble("stochastic-branin", g, 3, RngSpec(10))
        assert np.array_equal(a.realizations, b.realizations)
        assert not np.allclose(a.realizations, c.realizations)

    def test_prefix_stable(self):
        g = Grid2D(4, 4)
        a = generate_ensemble("stochastic-branin", g, 3, RngSpec(1))
        b = generate_ensemble("stochastic-branin", g, 8, RngSpec(1))
        assert np.array_equal(a.realizations, b.realizations[:, :3])

    def test_truth_stream_is_separate(self):
        g = Grid2D(4, 4)
        ens = generate_ensemble("stochastic-branin", g, 5, RngSpec(1))
        t = held_out_realization("stochastic-branin", g, RngSpec(1))
        assert not np.any(np.all(np.isclose(ens.realizations, t[:, None]), axis=0))

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            generate_ensemble("nope", Grid2D(3, 3), 2, RngSpec(0))

    def test_coincident_grids_give_zero_differences(self):
        g = Grid2D(6, 6)
        levels = generate_two_level("stochastic-branin", g, g, 4, 5, RngSpec(2))
        assert np.array_equal(levels[1].samples.realizations, np.zeros((36, 4)))

    def test_difference_decay(self):
        f, c = Grid2D(41, 41), Grid2D(11, 11)
        levels = generate_two_level("stochastic-branin", f, c, 20, 20, RngSpec(2))
        rms = lambda a: float(np.sqrt(np.mean(a**2)))  # noqa: E731
        r1, r2 = rms(levels[0].samples.realizations), rms(levels[1].samples.realizations)
        assert 0 < r2 < r1
        assert r2 / r1 < 0.05

    def test_coupling_and_level_independence(self):
        f, c = Grid2D(9, 9), Grid2D(5, 5)
        lv = generate_levels(StochasticBranin(), [c, f], [3, 3], RngSpec(4))
        assert np.array_equal(lv[1].samples.realizations, lv[1].fine - lv[1].coarse)
        assert not np.allclose(lv[0].fine, lv[1].coarse)


class TestConstrainedField:
    def test_boundary_matches_profile(self):
        g = Grid2D(9, 7, 0, 2, 0, 1)
        prof = lambda x, y: np.sin(x) + y**2  # noqa: E731
        ens = constrained_field_model(g, 6, RngSpec(0), prof)
        b = g.boundary_indices()
        target = prof(g.points[b, 0], g.points[b, 1])
        assert np.array_equal(ens.realizations[b], np.repeat(target[:, None], 6, axis=1))
        interior = np.setdiff1d(np.arange(g.size), b)
        assert np.all(ens.realizations[interior].std(axis=1) > 0)

    def test_bubble(self):
        g = Grid2D(5, 5)
        w = bubble(g)
        assert np.all(w[g.boundary_indices()] == 0) and w[g.index(2, 2)] == pytest.approx(1.0)


class TestGaussianTwoLevel:
    def test_moments_are_consistent(self):
        m = GaussianTwoLevelModel(Grid2D(9, 9), Grid2D(5, 5))
        assert np.allclose(m.true_cov(), m.coarse_cov() + m.perturbation_cov(), atol=1e-14)
        fine, coarse = m.realize(np.zeros((1, m.n_coarse + m.n_fine)))
        assert np.allclose(fine[:, 0], m.true_mean(), atol=1e-14)

    def test_sample_covariance_converges(self):
        m = GaussianTwoLevelModel(Grid2D(5, 5), Grid2D(3, 3))
        draws = np.random.default_rng(0).standard_normal((20_000, m.n_coarse + m.n_fine))
        fine, _ = m.realize(draws)
        assert np.max(np.abs(np.cov(fine) - m.true_cov())) < 0.05 * np.max(m.true_cov())


class TestBoundaryResidualModel:
    def test_residual_free_matches_target_on_boundary(self):
        g = Grid2D(6, 5)
        m = BoundaryResidualModel()
        xi = np.random.default_rng(1).standard_normal((4, m.n_params))
        vals, tgt = m.evaluate(g.points, xi), m.target(g.points, xi)
        b = g.boundary_indices()
        assert np.allclose(vals[b], tgt[b], atol=1e-15)

    def test_residual_scales(self):
        g = Grid2D(6, 5)
        xi = np.random.default_rng(1).standard_normal((4, 11))
        d = BoundaryResidualModel(residual=0.1).evaluate(g.points, xi) - BoundaryResidualModel().evaluate(g.points, xi)
        assert np.max(np.abs(d)) <= 0.1 * 2 * np.max(np.abs(xi[:, -1])) + 1e-15


def test_halton_design():
    g = Grid2D(41, 41)
    idx = halton_design(8, g, seed=3)
    assert len(set(idx.tolist())) == 8
    pts = g.points[idx]
    assert np.all((pts >= 0.05 - g.dx / 2) & (pts <= 0.95 + g.dx / 2))
    assert np.array_equal(idx, halton_design(8, g, seed=3))
    assert not np.array_equal(idx, halton_design(8, g, seed=4))
    small = Grid2D(3, 3)
    assert set(halton_design(1, small, 0, exclude=small.boundary_indices())) == {4}
    with pytest.raises(ValueError):
        halton_design(2, small, 0, exclude=small.boundary_indices())
