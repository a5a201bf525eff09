"""Multilevel Monte Carlo estimates of the GP mean and covariance.

Level ``l`` holds samples of the level difference ``Y_l - Y_{l-1}`` (level 1
holds ``Y_1`` itself), all expressed on the finest grid.  The mean estimate
is the sum of the level sample means; the covariance estimate is the sum of
the level sample covariances, each normalized by its own ``M_l - 1``.  The
covariance sum is unbiased for ``Cov(Y_L)`` only when the level differences
are uncorrelated with the coarser levels.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Field, Grid2D, Observations, Prediction, gp_predict
from .mc import Ensemble, _index_lookup


def _same_bounds(a: Grid2D, b: Grid2D) -> bool:
    return np.allclose(a.bounds, b.bounds, rtol=0, atol=1e-12 * max(1.0, *map(abs, a.bounds)))


def interpolate_matrix(values: np.ndarray, coarse: Grid2D, fine: Grid2D) -> np.ndarray:
    """Bilinear interpolation of column fields ``values`` (coarse.size x K) onto ``fine``."""
    if not _same_bounds(coarse, fine):
        raise ValueError(f"grid bounds differ: {coarse.bounds} vs {fine.bounds}")
    values = np.asarray(values, float)
    squeeze = values.ndim == 1
    vals = values.reshape(coarse.size, -1)
    if coarse == fine:
        out = vals.copy()
    else:
        cube = vals.reshape(coarse.ny, coarse.nx, -1)
        interp = RegularGridInterpolator((coarse.y, coarse.x), cube, method="linear")
        # clip guards against the last fine node overshooting the coarse range by rounding
        q = np.column_stack([
            np.clip(fine.points[:, 1], coarse.ymin, coarse.ymax),
            np.clip(fine.points[:, 0], coarse.xmin, coarse.xmax),
        ])
        out = interp(q)
    return out.ravel() if squeeze else out


def interpolate_coarse_to_fine(coarse: Field, fine_grid: Grid2D) -> Field:
    return Field(fine_grid, interpolate_matrix(coarse.values, coarse.grid, fine_grid))


@dataclass(frozen=True)
class LevelEnsemble:
    """Samples of the level-``level`` difference process on the finest grid.

    ``fine`` and ``coarse`` optionally keep the two members of every coupled
    pair (``samples = fine - coarse``; level 1 has no coarse member).  They
    are needed only for constraint bounds that reference each level's model
    error separately.
    """

    level: int
    grid: Grid2D
    samples: Ensemble
    fine: Optional[np.ndarray] = None
    coarse: Optional[np.ndarray] = None
    base_seed: Optional[int] = None

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("levels are numbered from 1")
        if self.samples.M < 2:
            raise ValueError(f"level {self.level} needs at least two samples")
        for name in ("fine", "coarse"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if arr.shape != self.samples.realizations.shape:
                    raise ValueError(f"{name} members must match the difference samples' shape")
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return self.samples.M

    @property
    def locations(self):
        return self.samples.locations


@dataclass(frozen=True, eq=False)
class MlmcMoments:
    """Summed level moments; a GP model over the finest-grid locations."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("at least one level is required")
        loc0 = levels[0].locations
        for lev in levels[1:]:
            if len(lev.locations) != len(loc0) or (
                isinstance(loc0, Grid2D) and lev.locations != loc0
            ):
                raise ValueError(f"level {lev.level} samples are not on the common finest grid")
        object.__setattr__(self, "levels", levels)

    @property
    def locations(self):
        return self.levels[0].locations

    @cached_property
    def mean_field(self) -> np.ndarray:
        return np.sum([lev.samples.realizations.mean(axis=1) for lev in self.levels], axis=0)

    @cached_property
    def centered(self) -> list:
        return [lev.samples.moments.centered for lev in self.levels]

    @property
    def rank_bound(self) -> int:
        return sum(lev.M - 1 for lev in self.levels)

    def indices(self, points) -> np.ndarray:
        return _index_lookup(self.locations, points)

    def mean(self, points) -> np.ndarray:
        return self.mean_field[self.indices(points)]

    def covariance(self, pa, pb) -> np.ndarray:
        ia, ib = self.indices(pa), self.indices(pb)
        return sum(z[ia] @ z[ib].T / (z.shape[1] - 1) for z in self.centered)

    def variance(self, points) -> np.ndarray:
        i = self.indices(points)
        return sum(np.einsum("ij,ij->i", z[i], z[i]) / (z.shape[1] - 1) for z in self.centered)


def _moments(levels) -> MlmcMoments:
    return levels if isinstance(levels, MlmcMoments) else MlmcMoments(tuple(levels))


def mlmc_mean(levels: Sequence[LevelEnsemble]) -> np.ndarray:
    return _moments(levels).mean_field.copy()


def mlmc_cov(levels: Sequence[LevelEnsemble], rows=None, cols=None) -> np.ndarray:
    mom = _moments(levels)
    out = 0.0
    for z in mom.centered:
        zr = z if rows is None else z[np.asarray(rows, dtype=int)]
        zc = z if cols is None else z[np.asarray(cols, dtype=int)]
        out = out + zr @ zc.T / (z.shape[1] - 1)
    return out


def mlmc_variance(levels: Sequence[LevelEnsemble]) -> np.ndarray:
    return _moments(levels).variance(None)


def mlmc_phik_predict(levels: Sequence[LevelEnsemble], obs: Observations, queries=None,
                      alpha: Union[float, str] = "auto") -> Prediction:
    """PhIK prediction with multilevel mean and covariance estimates."""
    mom = _moments(levels)
    queries = mom.locations if queries is None else queries
    skip_zero = alpha == "auto" and mom.rank_bound < len(obs)
    return gp_predict(mom, obs, queries, alpha=alpha, skip_zero_alpha=skip_zero)


def single_level(ensemble: Ensemble, grid: Optional[Grid2D] = None) -> list:
    """Wrap a plain ensemble as a one-level hierarchy."""
    grid = grid if grid is not None else ensemble.locations
    return [LevelEnsemble(1, grid, ensemble, fine=ensemble.realizations)]


def mlmc_cost(level_sizes: Sequence[int], level_grids: Sequence[Grid2D], dim: int = 2) -> float:
    """Cost in finest-sample equivalents.

    A sample on a grid refined by factor ``r`` costs ``r**dim`` more unknowns
    and ``r`` more time steps, i.e. ``r**(dim+1)`` more work.  A level-``l``
    difference sample (``l >= 2``) evaluates both its own and the next
    coarser grid.
    """
    finest = level_grids[-1]

    def unit(g: Grid2D) -> float:
        r = (finest.nx - 1) / (g.nx - 1)
        return 1.0 / r ** (dim + 1)

    total = 0.0
    for l, (m, g) in enumerate(zip(level_sizes, level_grids)):
        per = unit(g) + (unit(level_grids[l - 1]) if l > 0 else 0.0)
        total += m * per
    return total
