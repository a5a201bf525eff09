"""Physics-informed Kriging from a single Monte Carlo ensemble.

The GP mean and covariance are the sample mean and sample covariance of
model realizations; no kernel form and no hyperparameter fit are involved.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Grid2D, Locations, Observations, PointSet, Prediction, as_points, gp_predict


def _index_lookup(locations: Locations, points) -> np.ndarray:
    if points is None or points is locations:
        return np.arange(len(locations))
    if isinstance(points, Grid2D) and points == locations:
        return np.arange(len(locations))
    return locations.locate(points)


@dataclass(frozen=True)
class Ensemble:
    """``realizations[i, m]`` is realization ``m`` at location ``i``."""

    locations: Locations
    realizations: np.ndarray

    def __post_init__(self):
        r = np.array(self.realizations, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        if r.shape[0] != len(self.locations):
            raise ValueError(
                f"{r.shape[0]} realization rows for {len(self.locations)} locations"
            )
        if r.shape[1] < 1:
            raise ValueError("an ensemble needs at least one realization")
        if not np.all(np.isfinite(r)):
            raise ValueError("realizations must be finite")
        r.flags.writeable = False
        object.__setattr__(self, "realizations", r)

    @property
    def M(self) -> int:
        return self.realizations.shape[1]

    @property
    def n_locations(self) -> int:
        return self.realizations.shape[0]

    @cached_property
    def moments(self) -> "EmpiricalMoments":
        return EmpiricalMoments.from_ensemble(self)

    def indices(self, points) -> np.ndarray:
        return _index_lookup(self.locations, points)


@dataclass(frozen=True, eq=False)
class EmpiricalMoments:
    """Sample mean and centered realizations; a GP model over the ensemble locations."""

    locations: Locations
    mean_field: np.ndarray
    centered: np.ndarray

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble) -> "EmpiricalMoments":
        mu = mc_mean(ensemble)
        z = ensemble.realizations - mu[:, None]
        mu.flags.writeable = False
        z.flags.writeable = False
        return cls(ensemble.locations, mu, z)

    @property
    def M(self) -> int:
        return self.centered.shape[1]

    def _scale(self) -> float:
        if self.M < 2:
            raise ValueError("sample covariance needs at least two realizations")
        return 1.0 / (self.M - 1)

    def indices(self, points) -> np.ndarray:
        return _index_lookup(self.locations, points)

    def mean(self, points) -> np.ndarray:
        return self.mean_field[self.indices(points)]

    def covariance(self, pa, pb) -> np.ndarray:
        s = self._scale()
        return (self.centered[self.indices(pa)] @ self.centered[self.indices(pb)].T) * s

    def variance(self, points) -> np.ndarray:
        s = self._scale()
        z = self.centered[self.indices(points)]
        return np.einsum("ij,ij->i", z, z) * s


def mc_mean(ensemble: Ensemble) -> np.ndarray:
    return ensemble.realizations.mean(axis=1)


def mc_cov(ensemble: Ensemble, rows=None, cols=None) -> np.ndarray:
    """Sample covariance (``1/(M-1)``) between location index sets ``rows`` and ``cols``."""
    if ensemble.M < 2:
        raise ValueError("sample covariance needs at least two realizations")
    z = ensemble.moments.centered
    zr = z if rows is None else z[np.asarray(rows, dtype=int)]
    zc = z if cols is None else z[np.asarray(cols, dtype=int)]
    return zr @ zc.T / (ensemble.M - 1)


def ensemble_std(ensemble: Ensemble) -> np.ndarray:
    if ensemble.M < 2:
        raise ValueError("sample standard deviation needs at least two realizations")
    return np.sqrt(ensemble.moments.variance(None))


def phik_predict(ensemble: Ensemble, obs: Observations, queries=None,
                 alpha: Union[float, str] = "auto") -> Prediction:
    """PhIK prediction and MSE at ``queries`` (default: every ensemble location).

    Observation and query points must be ensemble locations.  With
    ``alpha="auto"`` the covariance is shifted only when needed; if
    ``M <= N`` the sample covariance is rank deficient and the zero shift is
    skipped.  The prior variance at the queries is always unshifted.
    """
    if ensemble.M < 2:
        raise ValueError("PhIK needs at least two realizations")
    queries = ensemble.locations if queries is None else queries
    skip_zero = alpha == "auto" and ensemble.M <= len(obs)
    return gp_predict(ensemble.moments, obs, queries, alpha=alpha, skip_zero_alpha=skip_zero)


def observe(locations: Locations, indices, values) -> Observations:
    """Observations at location indices, e.g. grid nodes."""
    idx = np.asarray(indices, dtype=int)
    pts = as_points(locations)[idx]
    return Observations(PointSet(pts), np.asarray(values, float))


def lift_ensemble(ensemble: Ensemble, points) -> Ensemble:
    """Bilinearly interpolate a grid ensemble to arbitrary points.

    This is an approximation used to place off-grid observations; the
    resulting ensemble lives on the given points only.
    """
    grid = ensemble.locations
    if not isinstance(grid, Grid2D):
        raise TypeError("only grid ensembles can be interpolated")
    pts = PointSet(as_points(points))
    cube = ensemble.realizations.reshape(grid.ny, grid.nx, ensemble.M)
    interp = RegularGridInterpolator((grid.y, grid.x), cube, method="linear")
    vals = interp(pts.points[:, ::-1])
    return Ensemble(pts, vals)
