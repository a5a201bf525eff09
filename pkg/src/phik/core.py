"""Shared Gaussian-process machinery.

Location containers, covariance assembly, the generic Kriging predictor and
its mean squared error, and Cholesky-based regularized solves.  Every model
(stationary kernel, Monte Carlo moments, multilevel moments) plugs into
:func:`gp_predict` through the same three-method interface::

    model.mean(points)             -> (n,) array
    model.covariance(pa, pb)       -> (na, nb) array
    model.variance(points)         -> (n,) array
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Protocol, Sequence, Union

import numpy as np
from scipy import linalg


class SingularCovarianceError(linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized, even regularized."""


class LocationError(KeyError):
    """Raised when a point is not a member of a model's location set."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointSet:
    """An ordered set of distinct points in ``dim`` dimensions.

    Parameters
    ----------
    points : array_like, shape (n, dim)
        Coordinates.  A 1-D input is read as ``n`` points in one dimension.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array of shape (n, dim)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("duplicate locations make the covariance matrix singular")
        object.__setattr__(self, "points", _readonly(pts))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def as_array(self) -> np.ndarray:
        return self.points

    def locate(self, pts) -> np.ndarray:
        """Indices of ``pts`` in this set (exact coordinate match)."""
        lookup = {tuple(p): i for i, p in enumerate(self.points)}
        out = []
        for p in as_points(pts):
            try:
                out.append(lookup[tuple(p)])
            except KeyError:
                raise LocationError(f"point {tuple(p)} is not in the location set") from None
        return np.asarray(out, dtype=int)


@dataclass(frozen=True)
class Grid2D:
    """Uniform 2-D grid; node ``(i, j)`` has flattened index ``j * nx + i``."""

    nx: int
    ny: int
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a grid needs at least 2 nodes per direction")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("grid bounds must satisfy xmax > xmin and ymax > ymin")

    @property
    def dim(self) -> int:
        return 2

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def __len__(self) -> int:
        return self.size

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of a field reshaped to a matrix: ``(ny, nx)``."""
        return (self.ny, self.nx)

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    @cached_property
    def x(self) -> np.ndarray:
        return _readonly(np.linspace(self.xmin, self.xmax, self.nx))

    @cached_property
    def y(self) -> np.ndarray:
        return _readonly(np.linspace(self.ymin, self.ymax, self.ny))

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def ij(self, index):
        index = np.asarray(index)
        return index % self.nx, index // self.nx

    def point(self, i: int, j: int) -> tuple[float, float]:
        return (self.xmin + i * self.dx, self.ymin + j * self.dy)

    @cached_property
    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return _readonly(np.column_stack([xx.ravel(), yy.ravel()]))

    def as_array(self) -> np.ndarray:
        return self.points

    def boundary_indices(self) -> np.ndarray:
        i, j = self.ij(np.arange(self.size))
        on = (i == 0) | (i == self.nx - 1) | (j == 0) | (j == self.ny - 1)
        return np.flatnonzero(on)

    def locate(self, pts, rtol: float = 1e-9) -> np.ndarray:
        """Flattened indices of grid nodes coinciding with ``pts``."""
        pts = as_points(pts)
        fi = (pts[:, 0] - self.xmin) / self.dx
        fj = (pts[:, 1] - self.ymin) / self.dy
        i = np.rint(fi).astype(int)
        j = np.rint(fj).astype(int)
        bad = (np.abs(fi - i) > rtol * (self.nx - 1)) | (np.abs(fj - j) > rtol * (self.ny - 1))
        bad |= (i < 0) | (i >= self.nx) | (j < 0) | (j >= self.ny)
        if np.any(bad):
            p = pts[np.argmax(bad)]
            raise LocationError(f"point {tuple(p)} is not a node of the grid")
        return self.index(i, j)

    def nearest_index(self, pts) -> np.ndarray:
        pts = as_points(pts)
        i = np.clip(np.rint((pts[:, 0] - self.xmin) / self.dx), 0, self.nx - 1).astype(int)
        j = np.clip(np.rint((pts[:, 1] - self.ymin) / self.dy), 0, self.ny - 1).astype(int)
        return self.index(i, j)

    def subset(self, indices) -> PointSet:
        return PointSet(self.points[np.asarray(indices, dtype=int)])


Locations = Union[PointSet, Grid2D]


def as_points(pts) -> np.ndarray:
    """Coordinates of a PointSet, Grid2D or array as an ``(n, dim)`` array."""
    if isinstance(pts, (PointSet, Grid2D)):
        return pts.points
    a = np.asarray(pts, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    return a


@dataclass(frozen=True)
class Field:
    """Values on a :class:`Grid2D`, row-major flattened."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True)
class Observations:
    locations: PointSet
    values: np.ndarray

    def __post_init__(self):
        locs = self.locations if isinstance(self.locations, PointSet) else PointSet(self.locations)
        v = np.array(self.values, dtype=float).ravel()
        if v.size != len(locs):
            raise ValueError(f"{len(locs)} locations but {v.size} values")
        if not np.all(np.isfinite(v)):
            raise ValueError("observed values must be finite")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self) -> int:
        return len(self.locations)

    def append(self, point, value: float) -> "Observations":
        pts = np.vstack([self.locations.points, as_points(point)])
        return Observations(PointSet(pts), np.append(self.values, value))


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric covariance matrix plus the diagonal shift ``alpha`` already applied."""

    entries: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = max(np.max(np.abs(c)), np.finfo(float).tiny) if c.size else 1.0
        if np.max(np.abs(c - c.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        object.__setattr__(self, "entries", _readonly(c))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def factor(self):
        """Lower Cholesky factor as returned by :func:`scipy.linalg.cho_factor`."""
        cf = _try_cholesky(self.entries)
        if cf is None:
            raise SingularCovarianceError(
                f"covariance matrix (n={self.n}, alpha={self.alpha:g}) is not positive definite"
            )
        return cf

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.factor, b)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.factor[0]))))


def _try_cholesky(a: np.ndarray):
    """Cholesky factor, or None when ``a`` is not numerically positive definite.

    A factorization whose smallest squared pivot is below
    ``n * eps * max(diag)`` counts as a failure: LAPACK happily factors
    rank-deficient matrices whose zero pivots picked up rounding noise.
    """
    n = a.shape[0]
    if n == 0:
        return (a.copy(), True)
    try:
        cf = linalg.cho_factor(a, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        return None
    piv = np.diag(cf[0]) ** 2
    if piv.min() <= n * np.finfo(float).eps * max(np.max(np.diag(a)), 0.0):
        return None
    return cf


class GpModel(Protocol):
    def mean(self, points) -> np.ndarray: ...

    def covariance(self, pa, pb) -> np.ndarray: ...

    def variance(self, points) -> np.ndarray: ...


def assemble_covariance(model: GpModel, X) -> CovarianceMatrix:
    """Covariance matrix of ``model`` at the points ``X`` (no regularization)."""
    pts = as_points(X)
    if len(pts) == 0:
        raise ValueError("cannot assemble a covariance matrix on an empty point set")
    k = np.asarray(model.covariance(X, X), dtype=float)
    bad = ~np.isfinite(k)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FloatingPointError(
            f"non-finite covariance between points {pts[i].tolist()} and {pts[j].tolist()}"
        )
    # mirror the upper triangle so the result is exactly symmetric
    k = np.triu(k) + np.triu(k, 1).T
    return CovarianceMatrix(k)


AUTO_ALPHA_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class RelativeAlpha:
    """A shift of ``fraction`` times the mean diagonal of the matrix it is applied to."""

    fraction: float

    def __post_init__(self):
        if not self.fraction >= 0:
            raise ValueError("relative alpha must be nonnegative")


def regularize(C: CovarianceMatrix, alpha: Union[float, str] = 0.0, skip_zero: bool = False) -> CovarianceMatrix:
    """Add ``alpha * I`` to ``C``.

    With ``alpha="auto"`` the smallest shift in ``{0, 1e-12 t, 1e-10 t, ...,
    1e-4 t}`` (``t`` the mean diagonal entry) that admits a Cholesky
    factorization is used; ``skip_zero`` starts the ladder at ``1e-12 t``.
    The shift actually applied accumulates in ``alpha`` of the result.
    """
    c = C.entries
    if isinstance(alpha, RelativeAlpha):
        alpha = alpha.fraction * (float(np.mean(np.diag(c))) if C.n else 0.0)
    if alpha != "auto":
        alpha = float(alpha)
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if alpha == 0.0:
            return C
        return CovarianceMatrix(c + alpha * np.eye(C.n), C.alpha + alpha)

    t = float(np.mean(np.diag(c))) if C.n else 0.0
    ladder = AUTO_ALPHA_LADDER[1:] if skip_zero else AUTO_ALPHA_LADDER
    for step in ladder:
        a = step * t
        if step > 0 and a == 0.0:
            continue
        shifted = c + a * np.eye(C.n) if a else c
        cf = _try_cholesky(shifted)
        if cf is not None:
            out = CovarianceMatrix(shifted, C.alpha + a)
            out.__dict__["factor"] = cf
            return out
    raise SingularCovarianceError(
        f"covariance matrix stays singular with alpha up to {AUTO_ALPHA_LADDER[-1]:g} x mean diagonal"
    )


def _check_shapes(C: CovarianceMatrix, cross_cov: np.ndarray, *vecs):
    if cross_cov.ndim != 2 or cross_cov.shape[0] != C.n:
        raise ValueError(f"cross covariance must have {C.n} rows, got shape {cross_cov.shape}")
    for v in vecs:
        if v is not None and v.shape[0] != C.n:
            raise ValueError(f"vector of length {v.shape[0]} does not match N={C.n}")


def krige_predict(mu_obs, mu_query, C: CovarianceMatrix, cross_cov, y) -> np.ndarray:
    """Posterior mean ``mu(x*) + c^T C^{-1} (y - mu_obs)`` at every query column."""
    mu_obs = np.asarray(mu_obs, dtype=float)
    y = np.asarray(y, dtype=float)
    cross_cov = np.asarray(cross_cov, dtype=float)
    _check_shapes(C, cross_cov, mu_obs, y)
    mu_query = np.asarray(mu_query, dtype=float)
    if mu_query.shape[0] != cross_cov.shape[1]:
        raise ValueError("query mean and cross covariance disagree on the number of queries")
    weights = C.solve(y - mu_obs)
    return mu_query + cross_cov.T @ weights


def krige_mse(sigma2_query, C: CovarianceMatrix, cross_cov, clamp: bool = True) -> np.ndarray:
    """Mean squared error ``sigma^2(x*) - c^T C^{-1} c``.

    The unknown-mean correction term is not included.  Values that dip below
    zero by no more than ``1e-10 * sigma^2`` are set to zero when ``clamp``.
    """
    cross_cov = np.asarray(cross_cov, dtype=float)
    _check_shapes(C, cross_cov)
    sigma2 = np.asarray(sigma2_query, dtype=float)
    if C.n == 0:
        return sigma2.copy()
    # c^T C^{-1} c = |L^{-1} c|^2 with C = L L^T
    v = linalg.solve_triangular(C.factor[0], cross_cov, lower=True)
    s2 = sigma2 - np.einsum("ij,ij->j", v, v)
    if clamp:
        tol = 1e-10 * np.maximum(np.abs(sigma2), np.finfo(float).tiny)
        s2 = np.where((s2 < 0) & (s2 >= -tol), 0.0, s2)
    return s2


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and MSE at a set of query locations.

    ``coefficients`` holds ``(C + alpha I)^{-1} (y - mu_obs)`` so that the
    prediction can be written as ``mu(x) + sum_i a_i k(x, x_i)``.
    """

    locations: Locations
    mean: np.ndarray
    mse: np.ndarray
    alpha: float = 0.0
    coefficients: np.ndarray = field(default=None, repr=False)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.mse, 0.0))

    def as_field(self) -> Field:
        if not isinstance(self.locations, Grid2D):
            raise TypeError("prediction locations are not a grid")
        return Field(self.locations, self.mean)


def gp_predict(model: GpModel, obs: Observations, queries, alpha: Union[float, str] = 0.0,
               skip_zero_alpha: bool = False) -> Prediction:
    """Kriging prediction and MSE of ``model`` conditioned on ``obs``."""
    X = obs.locations
    C = regularize(assemble_covariance(model, X), alpha, skip_zero=skip_zero_alpha)
    cross = np.asarray(model.covariance(X, queries), dtype=float)
    mu_obs = np.asarray(model.mean(X), dtype=float)
    coef = C.solve(obs.values - mu_obs)
    mean = np.asarray(model.mean(queries), dtype=float) + cross.T @ coef
    mse = krige_mse(model.variance(queries), C, cross)
    return Prediction(queries, mean, mse, alpha=C.alpha, coefficients=coef)


def relative_frobenius_error(reconstructed, truth) -> float:
    """``||F_r - F||_F / ||F||_F``."""
    fr = reconstructed.values if isinstance(reconstructed, Field) else np.asarray(reconstructed, float)
    f = truth.values if isinstance(truth, Field) else np.asarray(truth, float)
    return float(np.linalg.norm(fr - f) / np.linalg.norm(f))


def pairwise_sq_dist(a: np.ndarray, b: np.ndarray, scale: Sequence[float] | None = None) -> np.ndarray:
    """Squared (optionally per-dimension scaled) Euclidean distances."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if scale is not None:
        s = np.asarray(scale, float)
        a = a / s
        b = b / s
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
