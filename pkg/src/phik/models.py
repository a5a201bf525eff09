"""Test problems and seeded ensemble generation.

* the modified Branin function and its random counterpart with 12 Gaussian
  parameters,
* a random field that matches a prescribed boundary profile exactly,
* a linear Gaussian two-level model whose moments are known in closed form.

Realization ``m`` of level ``l`` always draws from RNG stream ``(l, m)``,
so ensembles are reproducible whatever order they are generated in.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import Grid2D, as_points
from .mc import Ensemble
from .mlmc import LevelEnsemble, interpolate_matrix
from .rng import RngSpec

# stream label reserved for held-out truth realizations
TRUTH_LEVEL = 0


@dataclass(frozen=True)
class BraninParams:
    a: float = 1.0
    b: float = 5.1 / (4 * np.pi**2)
    c: float = 5.0 / np.pi
    r: float = 6.0
    g: float = 10.0
    p: float = 1.0 / (8 * np.pi)
    q: float = 5.0


def branin(x, y, params: BraninParams = BraninParams()):
    """Modified Branin function on the unit square."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xt = 15.0 * x - 5.0
    yt = 15.0 * y
    P = params
    return (P.a * (yt - P.b * xt**2 + P.c * xt - P.r) ** 2
            + P.g * (1.0 - P.p) * np.cos(xt) + P.g + P.q * x)


@dataclass(frozen=True)
class StochasticBraninSample:
    xi: np.ndarray
    ghat: float = 20.0

    def __post_init__(self):
        xi = np.asarray(self.xi, float).ravel()
        if xi.size != 12:
            raise ValueError("a stochastic Branin sample has exactly 12 parameters")
        object.__setattr__(self, "xi", xi)


_I = np.arange(1, 4)


def _b_basis(x, y):
    bx = np.sin((2 * _I - 0.5) * np.pi * x[:, None]) / (4 * _I - 1)
    by = np.sin((2 * _I + 0.5) * np.pi * y[:, None]) / (4 * _I + 1)
    return bx, by


def _q_basis(x, y):
    qx = np.cos((2 * _I - 1.5) * np.pi * x[:, None]) / (4 * _I - 3)
    qy = np.cos((2 * _I - 0.5) * np.pi * y[:, None]) / (4 * _I - 1)
    return qx, qy


def random_coefficients(x, y, xi: np.ndarray, params: BraninParams = BraninParams()):
    """Random ``b`` and ``q`` fields: arrays of shape ``(n_points, n_samples)``."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    xi = np.atleast_2d(xi)
    bx, by = _b_basis(x, y)
    qx, qy = _q_basis(x, y)
    bhat = params.b * (0.9 + 0.2 / np.pi * (bx @ xi[:, 0:6:2].T + by @ xi[:, 1:6:2].T))
    qhat = params.q * (1.0 + 0.6 / np.pi * (qx @ xi[:, 6:12:2].T + qy @ xi[:, 7:12:2].T))
    return bhat, qhat


def stochastic_branin_matrix(points, xi, params: BraninParams = BraninParams(), ghat: float = 20.0):
    """Random Branin realizations at ``points`` for each row of ``xi`` (shape n x M)."""
    pts = as_points(points)
    x, y = pts[:, 0], pts[:, 1]
    bhat, qhat = random_coefficients(x, y, xi, params)
    xt = (15.0 * x - 5.0)[:, None]
    yt = (15.0 * y)[:, None]
    P = params
    return (P.a * (yt - bhat * xt**2 + P.c * xt - P.r) ** 2
            + P.g * (1.0 - P.p) * np.cos(xt) + ghat + qhat * x[:, None])


def stochastic_branin(x, y, sample: StochasticBraninSample, params: BraninParams = BraninParams()) -> float:
    return float(stochastic_branin_matrix(np.array([[x, y]]), sample.xi[None, :], params, sample.ghat)[0, 0])


@dataclass(frozen=True)
class StochasticBranin:
    """Random Branin model; ``evaluate(points, xi)`` returns an ``(n, M)`` matrix."""

    params: BraninParams = BraninParams()
    ghat: float = 20.0
    n_params: int = 12

    def evaluate(self, points, xi) -> np.ndarray:
        return stochastic_branin_matrix(points, xi, self.params, self.ghat)

    def truth(self, grid: Grid2D) -> np.ndarray:
        """The deterministic Branin field, which is not a realization of this model."""
        return branin(grid.points[:, 0], grid.points[:, 1], self.params)


MODELS: dict = {"stochastic-branin": StochasticBranin()}


def get_model(model):
    if isinstance(model, str):
        try:
            return MODELS[model]
        except KeyError:
            raise ValueError(f"unknown model {model!r}; known: {sorted(MODELS)}") from None
    return model


def generate_ensemble(model, grid: Grid2D, M: int, rng: RngSpec, level: int = 1) -> Ensemble:
    """``M`` realizations on ``grid``; realization ``m`` uses stream ``(level, m)``."""
    model = get_model(model)
    xi = rng.normal_matrix(level, range(M), model.n_params)
    return Ensemble(grid, model.evaluate(grid.points, xi))


def held_out_realization(model, grid: Grid2D, rng: RngSpec, index: int = 0) -> np.ndarray:
    """A realization drawn from a stream no ensemble uses."""
    model = get_model(model)
    xi = rng.normal_matrix(TRUTH_LEVEL, [index], model.n_params)
    return model.evaluate(grid.points, xi)[:, 0]


def generate_levels(model, grids, sizes, rng: RngSpec) -> list:
    """Coupled multilevel samples on a sequence of grids, coarsest first.

    Level 1 evaluates the model on ``grids[0]``; level ``l`` evaluates the
    same parameters on ``grids[l-1]`` and ``grids[l-2]`` and stores the
    difference.  Everything is interpolated bilinearly to the finest grid.
    Different levels use disjoint RNG streams.
    """
    model = get_model(model)
    grids = list(grids)
    finest = grids[-1]
    if len(grids) != len(sizes):
        raise ValueError("one sample count per grid is required")
    levels = []
    for l, (g, m_l) in enumerate(zip(grids, sizes), start=1):
        xi = rng.normal_matrix(l, range(m_l), model.n_params)
        fine = interpolate_matrix(model.evaluate(g.points, xi), g, finest)
        if l == 1:
            coarse = None
            diff = fine
        else:
            gc = grids[l - 2]
            coarse = interpolate_matrix(model.evaluate(gc.points, xi), gc, finest)
            diff = fine - coarse
        levels.append(LevelEnsemble(l, g, Ensemble(finest, diff), fine=fine, coarse=coarse,
                                    base_seed=rng.base_seed))
    return levels


def generate_two_level(model, fine: Grid2D, coarse: Grid2D, M_fine: int, M_coarse: int,
                       rng: RngSpec) -> list:
    """Level 1: ``M_coarse`` coarse samples lifted to ``fine``; level 2: ``M_fine`` coupled differences."""
    model = get_model(model)
    if hasattr(model, "generate"):
        return model.generate(M_fine, M_coarse, rng)
    return generate_levels(model, [coarse, fine], [M_coarse, M_fine], rng)


def _smooth_modes(grid: Grid2D, order: int = 3) -> np.ndarray:
    xh = (grid.points[:, 0] - grid.xmin) / (grid.xmax - grid.xmin)
    yh = (grid.points[:, 1] - grid.ymin) / (grid.ymax - grid.ymin)
    cols = []
    for p in range(order):
        for q in range(order):
            cols.append(np.cos(p * np.pi * xh) * np.cos(q * np.pi * yh) / (1.0 + p * p + q * q))
    return np.column_stack(cols)


def bubble(grid: Grid2D) -> np.ndarray:
    """``sin(pi x) sin(pi y)`` in normalized coordinates, exactly zero on the boundary."""
    xh = (grid.points[:, 0] - grid.xmin) / (grid.xmax - grid.xmin)
    yh = (grid.points[:, 1] - grid.ymin) / (grid.ymax - grid.ymin)
    w = np.sin(np.pi * xh) * np.sin(np.pi * yh)
    w[grid.boundary_indices()] = 0.0
    return w


def profile_field(grid: Grid2D, boundary_profile) -> np.ndarray:
    if boundary_profile is None:
        return np.zeros(grid.size)
    if callable(boundary_profile):
        return np.asarray(boundary_profile(grid.points[:, 0], grid.points[:, 1]), float) * np.ones(grid.size)
    prof = np.asarray(boundary_profile, float)
    if prof.shape != (grid.size,):
        raise ValueError("a boundary profile array must be a field on the grid")
    return prof


def constrained_field_model(grid: Grid2D, M: int, rng: RngSpec,
                            boundary_profile: Union[None, Callable, np.ndarray] = None,
                            amplitude: float = 1.0, level: int = 1) -> Ensemble:
    """Realizations ``g + bubble * fluctuation`` matching ``g`` exactly on the boundary.

    ``boundary_profile`` is a callable ``g(x, y)`` or a field whose values on
    the boundary nodes are the target; its interior values serve as the
    extension.  Fluctuations are random combinations of nine smooth cosine
    modes.
    """
    ext = profile_field(grid, boundary_profile)
    modes = _smooth_modes(grid)
    xi = rng.normal_matrix(level, range(M), modes.shape[1])
    fluct = modes @ xi.T
    return Ensemble(grid, ext[:, None] + amplitude * bubble(grid)[:, None] * fluct)


@dataclass(frozen=True, eq=False)
class GaussianTwoLevelModel:
    """Linear Gaussian model with exactly independent level differences.

    The coarse model is ``m_c + sum_k xi_k phi_k`` solved on ``coarse`` and
    bilinearly lifted; the fine model adds an independent Gaussian
    perturbation ``m_d + sum_j zeta_j psi_j`` on ``fine``.  The fine mean and
    covariance are therefore known in closed form.
    """

    fine: Grid2D
    coarse: Grid2D
    perturbation_scale: float = 0.3
    lift: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eye = np.eye(self.coarse.size)
        object.__setattr__(self, "lift", interpolate_matrix(eye, self.coarse, self.fine))

    def _coarse_parts(self):
        pts = self.coarse.points
        mean = 1.0 + pts[:, 0] - 0.5 * pts[:, 1] ** 2
        return mean, _smooth_modes(self.coarse)

    def _fine_parts(self):
        pts = self.fine.points
        mean = self.perturbation_scale * np.sin(np.pi * pts[:, 0]) * pts[:, 1]
        xh, yh = pts[:, 0], pts[:, 1]
        psi = np.column_stack([
            np.sin(2 * np.pi * xh), np.sin(2 * np.pi * yh),
            np.sin(3 * np.pi * xh) * np.sin(3 * np.pi * yh), np.cos(4 * np.pi * xh),
        ])
        return mean, self.perturbation_scale * psi

    @property
    def n_coarse(self) -> int:
        return _smooth_modes(self.coarse).shape[1]

    @property
    def n_fine(self) -> int:
        return 4

    def true_mean(self) -> np.ndarray:
        mc, _ = self._coarse_parts()
        md, _ = self._fine_parts()
        return self.lift @ mc + md

    def true_cov(self) -> np.ndarray:
        _, phi = self._coarse_parts()
        _, psi = self._fine_parts()
        lp = self.lift @ phi
        return lp @ lp.T + psi @ psi.T

    def coarse_cov(self) -> np.ndarray:
        _, phi = self._coarse_parts()
        lp = self.lift @ phi
        return lp @ lp.T

    def perturbation_cov(self) -> np.ndarray:
        _, psi = self._fine_parts()
        return psi @ psi.T

    def realize(self, draws: np.ndarray):
        """Lifted coarse and fine members for parameter rows ``draws`` (M x (K + J))."""
        mc, phi = self._coarse_parts()
        md, psi = self._fine_parts()
        k = phi.shape[1]
        coarse = self.lift @ (mc[:, None] + phi @ draws[:, :k].T)
        fine = coarse + md[:, None] + psi @ draws[:, k:].T
        return fine, coarse

    def generate(self, M_fine: int, M_coarse: int, rng: RngSpec) -> list:
        n = self.n_coarse + self.n_fine
        _, c1 = self.realize(rng.normal_matrix(1, range(M_coarse), n))
        f2, c2 = self.realize(rng.normal_matrix(2, range(M_fine), n))
        return [
            LevelEnsemble(1, self.coarse, Ensemble(self.fine, c1), fine=c1, base_seed=rng.base_seed),
            LevelEnsemble(2, self.fine, Ensemble(self.fine, f2 - c2), fine=f2, coarse=c2,
                          base_seed=rng.base_seed),
        ]


def halton_design(n: int, grid: Grid2D, seed: int, margin: float = 0.05, exclude=()) -> np.ndarray:
    """``n`` distinct grid-node indices from a scrambled Halton sequence.

    Points are drawn in the grid domain shrunk by ``margin`` (fraction of
    each side) and snapped to the nearest node; collisions draw further
    points of the same sequence, as do nodes listed in ``exclude``.
    """
    from scipy.stats import qmc

    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    lo = np.array([grid.xmin, grid.ymin])
    span = np.array([grid.xmax - grid.xmin, grid.ymax - grid.ymin])
    skip = {int(i) for i in np.asarray(exclude, dtype=int).ravel()}
    if n > grid.size - len(skip):
        raise ValueError(f"cannot place {n} distinct observations")
    chosen: list = []
    while len(chosen) < n:
        u = sampler.random(n)
        pts = lo + span * (margin + (1 - 2 * margin) * u)
        for idx in grid.nearest_index(pts):
            if idx not in chosen and idx not in skip:
                chosen.append(int(idx))
            if len(chosen) == n:
                break
    return np.asarray(chosen, dtype=int)


def _unit_coords(points, bounds) -> tuple[np.ndarray, np.ndarray]:
    pts = as_points(points)
    xmin, xmax, ymin, ymax = bounds
    return (pts[:, 0] - xmin) / (xmax - xmin), (pts[:, 1] - ymin) / (ymax - ymin)


def _unit_bubble(xh, yh) -> np.ndarray:
    w = np.sin(np.pi * xh) * np.sin(np.pi * yh)
    on_edge = (np.isclose(xh, 0.0, atol=1e-12) | np.isclose(xh, 1.0, atol=1e-12)
               | np.isclose(yh, 0.0, atol=1e-12) | np.isclose(yh, 1.0, atol=1e-12))
    w[on_edge] = 0.0
    return w


@dataclass(frozen=True)
class BoundaryResidualModel:
    """Random field whose boundary values approximately follow a random profile.

    Realization with parameters ``xi`` is::

        (1 + target_scale * xi_0) * g0(x, y)
          + bubble(x, y) * sum_k xi_k phi_k(x, y)
          + residual * xi_last * r(x, y)

    with ``g0 = 1 + x - y**2 / 2``, nine smooth cosine modes ``phi_k`` and a
    boundary-visible residual ``r = cos(pi x) + sin(pi y)``.  On the boundary
    the realization equals its own target ``g^m = (1 + target_scale xi_0) g0``
    up to the injected residual.  Evaluated on a coarse grid and lifted to a
    finer one, the bilinear boundary error adds a discretization residual.
    """

    bounds: tuple = (0.0, 1.0, 0.0, 1.0)
    target_scale: float = 0.2
    residual: float = 0.0
    n_modes: int = 9

    @property
    def n_params(self) -> int:
        return self.n_modes + 2

    def profile(self, points) -> np.ndarray:
        xh, yh = _unit_coords(points, self.bounds)
        return 1.0 + xh - 0.5 * yh**2

    def target(self, points, xi) -> np.ndarray:
        """``g^m`` at ``points`` for each parameter row (shape n x M)."""
        xi = np.atleast_2d(xi)
        return self.profile(points)[:, None] * (1.0 + self.target_scale * xi[:, 0])[None, :]

    def evaluate(self, points, xi) -> np.ndarray:
        xi = np.atleast_2d(xi)
        xh, yh = _unit_coords(points, self.bounds)
        order = int(round(np.sqrt(self.n_modes)))
        modes = np.column_stack([
            np.cos(p * np.pi * xh) * np.cos(q * np.pi * yh) / (1.0 + p * p + q * q)
            for p in range(order) for q in range(order)
        ])
        fluct = _unit_bubble(xh, yh)[:, None] * (modes @ xi[:, 1:1 + self.n_modes].T)
        resid = (np.cos(np.pi * xh) + np.sin(np.pi * yh))[:, None] * xi[:, -1][None, :]
        return self.target(points, xi) + fluct + self.residual * resid

    def level_targets(self, points, levels, rng: RngSpec) -> list:
        """Per-realization targets for samples made by :func:`generate_levels`."""
        return [self.target(points, rng.normal_matrix(lev.level, range(lev.M), self.n_params))
                for lev in levels]
