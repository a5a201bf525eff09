"""Ordinary Kriging with a stationary Gaussian kernel fitted by maximum likelihood."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.linalg import lapack

from .core import (
    CovarianceMatrix,
    Observations,
    PointSet,
    Prediction,
    _try_cholesky,
    as_points,
    gp_predict,
    pairwise_sq_dist,
)


class KrigingFitError(RuntimeError):
    pass


# correlation matrices with a larger estimated condition number count as
# singular in the likelihood, keeping fitted kernels well away from the edge
# where rounding makes the covariance indefinite
FIT_MAX_CONDITION = 1e13


def _fit_factor(Psi: np.ndarray):
    cf = _try_cholesky(Psi)
    if cf is None:
        return None
    rcond, info = lapack.dpocon(cf[0], np.linalg.norm(Psi, 1), uplo="L")
    if info != 0 or rcond * FIT_MAX_CONDITION < 1.0:
        return None
    return cf


@dataclass(frozen=True)
class StationaryKernel:
    """Gaussian kernel ``sigma2 * exp(-0.5 * sum_i ((x_i - x'_i) / l_i)^2)`` with constant mean."""

    sigma2: float
    lengthscales: np.ndarray
    mu: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.array(self.lengthscales, dtype=float))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be positive and finite")
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def correlation(self, pa, pb) -> np.ndarray:
        a, b = as_points(pa), as_points(pb)
        if a.shape[1] != self.dim or b.shape[1] != self.dim:
            raise ValueError(f"points must have dimension {self.dim}")
        return np.exp(-0.5 * pairwise_sq_dist(a, b, self.lengthscales))

    # GpModel interface
    def mean(self, points) -> np.ndarray:
        return np.full(len(as_points(points)), self.mu)

    def covariance(self, pa, pb) -> np.ndarray:
        return self.sigma2 * self.correlation(pa, pb)

    def variance(self, points) -> np.ndarray:
        return np.full(len(as_points(points)), self.sigma2)


def gaussian_kernel(x, x2, kernel: StationaryKernel) -> float:
    x = np.atleast_1d(np.asarray(x, float))
    x2 = np.atleast_1d(np.asarray(x2, float))
    if x.shape != x2.shape or x.size != kernel.dim:
        raise ValueError(f"points must both have dimension {kernel.dim}")
    w = np.sum(((x - x2) / kernel.lengthscales) ** 2)
    return float(kernel.sigma2 * np.exp(-0.5 * w))


def correlation_matrix(X, lengthscales) -> np.ndarray:
    k = StationaryKernel(1.0, lengthscales)
    return k.correlation(X, X)


def mle_mu_sigma(y, Psi) -> tuple[float, float]:
    """Generalized-least-squares mean and MLE variance for correlation matrix ``Psi``.

    ``sigma2_hat`` uses the fitted ``mu_hat`` and a ``1/N`` normalization.
    """
    y = np.asarray(y, float)
    if isinstance(Psi, CovarianceMatrix):
        cf = Psi.factor
    else:
        cf = _try_cholesky(np.asarray(Psi, float))
        if cf is None:
            raise linalg.LinAlgError("correlation matrix is singular")
    return _mle_from_factor(y, cf)


def _mle_from_factor(y, cf):
    ones = np.ones_like(y)
    pi_y = linalg.cho_solve(cf, y)
    pi_1 = linalg.cho_solve(cf, ones)
    mu = float(ones @ pi_y / (ones @ pi_1))
    r = y - mu
    sigma2 = float(r @ linalg.cho_solve(cf, r)) / y.size
    return mu, max(sigma2, 0.0)


def concentrated_loglik(lengthscales, X, y) -> float:
    """``-(n/2) ln(sigma2_hat) - 0.5 ln|Psi|``.

    Returns ``-inf`` when ``Psi`` is not numerically positive definite and
    ``+inf`` when the data are constant (``sigma2_hat == 0``).
    """
    y = np.asarray(y, float)
    ls = np.atleast_1d(np.asarray(lengthscales, float))
    if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
        return -np.inf
    cf = _fit_factor(correlation_matrix(X, ls))
    if cf is None:
        return -np.inf
    _, sigma2 = _mle_from_factor(y, cf)
    if sigma2 <= 0:
        return np.inf
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return float(-0.5 * y.size * np.log(sigma2) - 0.5 * logdet)


@dataclass(frozen=True)
class MleFit:
    kernel: StationaryKernel
    mu_hat: float
    sigma2_hat: float
    log_likelihood: float
    optimizer_trace: list = field(default_factory=list, repr=False)

    @property
    def lengthscales(self) -> np.ndarray:
        return self.kernel.lengthscales


def default_bounds(X, domain=None) -> np.ndarray:
    """Per-dimension lengthscale bounds ``[1e-2, 1e1] * domain diagonal``.

    ``domain`` is ``(lower_corner, upper_corner)``; the bounding box of ``X``
    is used when it is omitted.
    """
    pts = as_points(X)
    if domain is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    else:
        lo, hi = (np.asarray(c, float) for c in domain)
    diag = float(np.linalg.norm(hi - lo))
    if diag <= 0:
        raise ValueError("cannot derive lengthscale bounds from a degenerate domain")
    return np.tile([1e-2 * diag, 1e1 * diag], (pts.shape[1], 1))


def _start_points(log_lo, log_hi, max_lattice=27):
    d = log_lo.size
    fracs = (1 / 6, 1 / 2, 5 / 6)
    lattice = [log_lo + np.array(f) * (log_hi - log_lo) for f in itertools.product(fracs, repeat=d)]
    lattice = lattice[:max_lattice]
    mid = np.log(0.5 * (np.exp(log_lo) + np.exp(log_hi)))
    starts = lattice + [mid]
    uniq = []
    for s in starts:
        if not any(np.allclose(s, u) for u in uniq):
            uniq.append(s)
    return uniq


def fit_kriging(X, y, bounds=None, domain=None) -> MleFit:
    """Maximize the concentrated log-likelihood over per-dimension lengthscales.

    Multi-start Nelder-Mead in log-lengthscale space.  Starts are the
    ``3^d`` log-uniform lattice over ``bounds`` (cell centres, at most 27)
    plus the arithmetic midpoint of the bounds.  Ties between starts go to
    the lexicographically smallest log-lengthscale vector.
    """
    pts = as_points(X)
    y = np.asarray(y, float)
    if len(pts) < 2:
        raise KrigingFitError("ordinary Kriging needs at least two observations")
    if len(y) != len(pts):
        raise ValueError("X and y lengths differ")
    if np.ptp(y) == 0:
        raise KrigingFitError("observations are constant: sigma2_hat = 0, likelihood is unbounded")
    if bounds is None:
        bounds = default_bounds(pts, domain)
    bounds = np.asarray(bounds, float).reshape(pts.shape[1], 2)
    if np.any(bounds <= 0) or np.any(bounds[:, 1] < bounds[:, 0]):
        raise ValueError("lengthscale bounds must be positive intervals")
    log_lo, log_hi = np.log(bounds[:, 0]), np.log(bounds[:, 1])

    trace: list = []

    def neg_lc(theta):
        ls = np.exp(np.clip(theta, log_lo, log_hi))
        lc = concentrated_loglik(ls, pts, y)
        trace.append((ls, lc))
        return -lc if np.isfinite(lc) else np.inf

    free = log_hi > log_lo
    candidates = []
    if not free.any():
        neg_lc(log_lo)
        candidates.append((log_lo, trace[-1][1]))
    else:
        for x0 in _start_points(log_lo, log_hi):
            if not np.isfinite(neg_lc(x0)):
                continue
            res = optimize.minimize(
                neg_lc, x0, method="Nelder-Mead",
                bounds=list(zip(log_lo, log_hi)),
                options={"xatol": 1e-5, "fatol": 1e-9, "maxiter": 400 * pts.shape[1]},
            )
            theta = np.clip(res.x, log_lo, log_hi)
            if np.isfinite(res.fun):
                candidates.append((theta, -float(res.fun)))
    if not candidates:
        raise KrigingFitError("the likelihood is infeasible at every optimizer start")

    best_lc = max(c[1] for c in candidates)
    ties = [c for c in candidates if c[1] == best_lc]
    theta, lc = min(ties, key=lambda c: tuple(c[0]))
    ls = np.exp(theta)
    cf = _fit_factor(correlation_matrix(pts, ls))
    mu, sigma2 = _mle_from_factor(y, cf)
    return MleFit(StationaryKernel(sigma2, ls, mu), mu, sigma2, lc, trace)


def kriging_predict(fit: MleFit, X, y, queries, alpha=0.0) -> Prediction:
    """Ordinary Kriging prediction ``mu_hat + psi^T Psi^{-1} (y - 1 mu_hat)``.

    MSE is ``sigma2_hat * (1 - psi^T Psi^{-1} psi)``.
    """
    X = X if isinstance(X, PointSet) else PointSet(X)
    return gp_predict(fit.kernel, Observations(X, y), queries, alpha=alpha)
