import json

import numpy as np
import pytest

from phik.constraints import (
    BoundReport,
    ConstraintPreconditionError,
    DiscreteLinearOperator,
    boundary_restriction_operator,
    exact_preservation_check,
    normal_derivative_operator,
    theorem_bound,
)
from phik.core import Grid2D
from phik.mc import Ensemble, mc_mean, observe, phik_predict
from phik.mlmc import mlmc_phik_predict
from phik.models import BoundaryResidualModel, constrained_field_model, generate_levels, halton_design
from phik.rng import RngSpec


class TestOperators:
    def test_linearity(self, rng):
        g = Grid2D(6, 5)
        for A in (boundary_restriction_operator(g), normal_derivative_operator(g, "top")):
            u, v = rng.standard_normal(g.size), rng.standard_normal(g.size)
            lhs = A(2.5 * u - 0.75 * v)
            assert np.allclose(lhs, 2.5 * A(u) - 0.75 * A(v), rtol=0, atol=1e-12 * np.max(np.abs(lhs)))

    def test_boundary_rows(self):
        assert boundary_restriction_operator(Grid2D(3, 3)).n_constraints == 8
        assert boundary_restriction_operator(Grid2D(4, 3), "left").n_constraints == 3
        assert boundary_restriction_operator(Grid2D(4, 3), ["left", "bottom"]).n_constraints == 3 + 4 - 1

    def test_constant_field(self):
        g = Grid2D(5, 4)
        A = boundary_restriction_operator(g, target=np.full(14, 3.0))
        assert np.max(np.abs(A(np.full(g.size, 3.0)) - A.target)) == 0.0

    def test_extraction_matches_indexing(self, rng):
        g = Grid2D(5, 4)
        u = rng.standard_normal(g.size)
        A = boundary_restriction_operator(g, "right")
        assert np.array_equal(A(u), u[g.index(4, np.arange(4))])

    def test_l2_norm_weights(self):
        g = Grid2D(3, 3)
        A = boundary_restriction_operator(g, "bottom", norm_kind="l2")
        assert A.norm(np.ones(3)) == pytest.approx(np.sqrt(3 * g.dx))

    @pytest.mark.parametrize("edge,coord,sign", [("left", 0, -1), ("right", 0, 1), ("bottom", 1, -1), ("top", 1, 1)])
    def test_normal_derivative_linear(self, edge, coord, sign):
        g = Grid2D(6, 7, 0, 2, -1, 1)
        s = 1.7
        u = sign * s * g.points[:, coord]  # slope s along the outward normal
        assert np.allclose(normal_derivative_operator(g, edge)(u), s, atol=1e-12)

    def test_normal_derivative_quadratic_exact(self):
        g = Grid2D(6, 5)
        x = g.points[:, 0]
        # d/dn at x = 1 of x^2 is 2
        assert np.allclose(normal_derivative_operator(g, "right")(x**2), 2.0, atol=1e-12)

    def test_normal_derivative_ignores_tangential(self):
        g = Grid2D(5, 6)
        u = 3.0 + g.points[:, 1] ** 2
        assert np.allclose(normal_derivative_operator(g, "left")(u), 0.0, atol=1e-12)
        assert np.allclose(normal_derivative_operator(g, "left")(np.full(g.size, 2.0)), 0.0, atol=1e-12)

    def test_normal_derivative_needs_three_nodes(self):
        with pytest.raises(ValueError):
            normal_derivative_operator(Grid2D(2, 5), "left")

    def test_target_shape(self):
        with pytest.raises(ValueError):
            DiscreteLinearOperator(np.eye(3), np.zeros(2))


def _boundary_ensemble(grid, M, seed, profile=None):
    prof = profile or (lambda x, y: 1.0 + x - 0.5 * y**2)
    ens = constrained_field_model(grid, M, RngSpec(seed), prof)
    A = boundary_restriction_operator(grid)
    return ens, A, A(prof(grid.points[:, 0], grid.points[:, 1]))


class TestSingleLevelBound:
    def setup_method(self):
        self.grid = Grid2D(9, 9)
        self.idx = halton_design(6, self.grid, 1, exclude=self.grid.boundary_indices())

    def test_exactly_satisfied(self):
        ens, A, g = _boundary_ensemble(self.grid, 20, 1)
        obs = observe(self.grid, self.idx, np.linspace(-1, 1, 6))
        pred = phik_predict(ens, obs)
        rep = theorem_bound(ens, obs, A.with_target(g), pred)
        assert rep.epsilon == 0.0 and rep.sigma_g == 0.0
        assert rep.measured <= 1e-10 and rep.bound == 0.0

    def test_zero_residual_observations(self):
        model = BoundaryResidualModel(residual=0.05)
        rng = RngSpec(3)
        from phik.models import generate_ensemble

        ens = generate_ensemble(model, self.grid, 25, rng)
        A = boundary_restriction_operator(self.grid)
        g = A(model.target(self.grid.points, rng.normal_matrix(1, range(25), model.n_params)))
        obs = observe(self.grid, self.idx, mc_mean(ens)[self.idx])
        rep = theorem_bound(ens, obs, A.with_target(g), phik_predict(ens, obs))
        assert rep.coeff_inf == pytest.approx(0.0, abs=1e-12)
        assert rep.bound == pytest.approx(rep.epsilon, rel=1e-12)
        assert rep.measured <= rep.epsilon + 1e-12

    def _random_case(self, s=1.0, seed=0):
        r = np.random.default_rng(seed)
        g = self.grid
        base = r.standard_normal((g.size, 30))
        mean = base.mean(axis=1, keepdims=True)
        ens = Ensemble(g, mean + s * (base - mean))
        A = boundary_restriction_operator(g)
        # per-realization targets equal the realizations' own boundary values: eps = 0
        op = A.with_target(A(ens.realizations))
        y = r.standard_normal(6) * 2
        obs = observe(g, self.idx, y)
        return ens, obs, op

    def test_spectral_dominates_coefficients(self):
        ens, obs, op = self._random_case()
        rep = theorem_bound(ens, obs, op, phik_predict(ens, obs))
        assert rep.coeff_inf <= rep.inverse_norm2 * rep.residual_norm2 + 1e-10
        assert rep.holds and rep.spectral_holds

    def test_scaling_fluctuations(self):
        ens, obs, op = self._random_case()
        s = 0.3
        ens_s, _, op_s = self._random_case(s=s)
        r1 = theorem_bound(ens, obs, op, phik_predict(ens, obs, alpha=0.0))
        rs = theorem_bound(ens_s, obs, op_s, phik_predict(ens_s, obs, alpha=0.0))
        assert rs.std_sum == pytest.approx(s * r1.std_sum, rel=1e-10)
        assert rs.sigma_g == pytest.approx(s * r1.sigma_g, rel=1e-10)
        assert rs.coeff_inf == pytest.approx(r1.coeff_inf / s**2, rel=1e-8)
        # eps = 0, so the bound is sigma_g * coeff * std_sum and is scale free
        assert rs.bound == pytest.approx(r1.bound * s * s / s**2, rel=1e-8)

    def test_hand_formula(self):
        ens, obs, op = self._random_case(seed=4)
        pred = phik_predict(ens, obs)
        rep = theorem_bound(ens, obs, op, pred)
        M = ens.M
        gm = op.target
        gbar = gm.mean(axis=1)
        sig_g = np.sqrt(sum(np.max(np.abs(gm[:, m] - gbar)) ** 2 for m in range(M)) / (M - 1))
        sd = ens.realizations[self.idx].std(axis=1, ddof=1)
        a = np.linalg.solve(ens.moments.covariance(obs.locations, obs.locations) + pred.alpha * np.eye(6),
                            obs.values - mc_mean(ens)[self.idx])
        assert rep.sigma_g == pytest.approx(sig_g, rel=1e-12)
        assert rep.bound == pytest.approx(sig_g * np.max(np.abs(a)) * sd.sum(), rel=1e-7)
        assert rep.measured == pytest.approx(np.max(np.abs(op(pred.mean) - gbar)), rel=1e-12)

    def test_prediction_mismatch(self):
        ens, obs, op = self._random_case()
        pred = phik_predict(ens, obs)
        other = observe(self.grid, self.idx[:3], obs.values[:3])
        with pytest.raises(ValueError):
            theorem_bound(ens, other, op, pred)

    def test_json(self):
        ens, obs, op = self._random_case()
        rep = theorem_bound(ens, obs, op, phik_predict(ens, obs))
        d = json.loads(rep.to_json())
        for key in ("epsilon", "sigma_g", "coeff_inf", "std_sum", "bound", "measured", "spectral_bound",
                    "norm_kind", "alpha", "holds", "empirical_epsilon"):
            assert key in d


class TestMultilevelBound:
    def _levels(self, sizes, grids, seed=2, residual=0.01):
        model = BoundaryResidualModel(residual=residual)
        rng = RngSpec(seed)
        levels = generate_levels(model, grids, sizes, rng)
        fine = grids[-1]
        A = boundary_restriction_operator(fine)
        targets = [A(t) for t in model.level_targets(fine.points, levels, rng)]
        idx = halton_design(7, fine, seed)
        truth = model.evaluate(fine.points, np.random.default_rng(seed).standard_normal((1, model.n_params)))[:, 0]
        obs = observe(fine, idx, truth[idx])
        return levels, A, targets, obs

    def test_two_level_hand_formula(self):
        c, f = Grid2D(5, 5), Grid2D(9, 9)
        levels, A, targets, obs = self._levels([60, 12], [c, f])
        pred = mlmc_phik_predict(levels, obs)
        rep = theorem_bound(levels, obs, A, pred, level_targets=targets)
        idx = f.locate(obs.locations)
        a = np.abs(pred.coefficients)
        M_L, M_H = levels[0].M, levels[1].M
        sL = np.sqrt(M_L / (M_L - 1)) * levels[0].samples.realizations[idx].std(axis=1, ddof=1)
        sH = np.sqrt(M_H / (M_H - 1)) * levels[1].samples.realizations[idx].std(axis=1, ddof=1)
        C_H = 1 + 2 * a @ sH
        C_L = 2 + 2 * a @ (sL + sH)
        eps_H = np.max(np.abs(A(levels[1].fine) - targets[1]))
        eps_L = max(np.max(np.abs(A(levels[0].fine) - targets[0])),
                    np.max(np.abs(A(levels[1].coarse) - targets[1])))
        gbar = targets[0].mean(axis=1)
        sig_g = np.sqrt(np.sum(np.max(np.abs(targets[0] - gbar[:, None]), axis=0) ** 2) / (M_L - 1))
        sdL = levels[0].samples.realizations[idx].std(axis=1, ddof=1)
        expected = C_H * eps_H + C_L * eps_L + sig_g * a @ sdL
        assert rep.epsilon == pytest.approx([eps_L, eps_H], rel=1e-12)
        assert rep.level_coefficients == pytest.approx([C_L, C_H], rel=1e-12)
        assert rep.bound == pytest.approx(expected, rel=1e-12)
        assert rep.kind == "two-level" and rep.holds

    def test_three_level_holds(self):
        grids = [Grid2D(3, 3), Grid2D(5, 5), Grid2D(9, 9)]
        levels, A, targets, obs = self._levels([80, 20, 6], grids)
        rep = theorem_bound(levels, obs, A, mlmc_phik_predict(levels, obs), level_targets=targets)
        assert rep.kind == "3-level" and len(rep.epsilon) == 3 and rep.holds

    def test_missing_members(self):
        from phik.mlmc import LevelEnsemble

        c, f = Grid2D(5, 5), Grid2D(9, 9)
        levels, A, targets, obs = self._levels([20, 6], [c, f])
        stripped = [levels[0], LevelEnsemble(2, f, levels[1].samples)]
        with pytest.raises(ValueError, match="coupled"):
            theorem_bound(stripped, obs, A, mlmc_phik_predict(stripped, obs), level_targets=targets)


class TestExactPreservation:
    def setup_method(self):
        self.grid = Grid2D(11, 9)
        self.idx = halton_design(7, self.grid, 2, exclude=self.grid.boundary_indices())

    def test_zero_dirichlet(self):
        ens = constrained_field_model(self.grid, 25, RngSpec(1))
        A = boundary_restriction_operator(self.grid)
        ok, viol = exact_preservation_check(ens, observe(self.grid, self.idx, np.arange(7.0)), A,
                                            np.zeros(A.n_constraints), self.grid)
        assert ok and viol <= 1e-10

    def test_nonzero_profile(self):
        ens, A, g = _boundary_ensemble(self.grid, 25, 5, lambda x, y: 3 * np.cos(2 * x) + y)
        ok, viol = exact_preservation_check(ens, observe(self.grid, self.idx, np.linspace(0, 5, 7)), A, g,
                                            self.grid)
        assert ok and viol <= 1e-9 * (1 + np.max(np.abs(g)))

    def test_corrupt_realization_named(self):
        ens, A, g = _boundary_ensemble(self.grid, 12, 5)
        r = ens.realizations.copy()
        r[self.grid.boundary_indices()[3], 7] += 1e-6
        with pytest.raises(ConstraintPreconditionError, match="realization 7") as info:
            exact_preservation_check(Ensemble(self.grid, r), observe(self.grid, self.idx, np.zeros(7)), A, g,
                                     self.grid)
        assert info.value.realization == 7
