"""Linear constraints on grid fields and numerical checks of the preservation bounds.

A :class:`DiscreteLinearOperator` maps a field (one value per grid node) to a
constraint vector.  For PhIK predictions built from realizations that each
satisfy ``A Y^m ~ g^m``, :func:`theorem_bound` evaluates every term of the
violation bound and the violation actually measured, for single-level,
two-level and general multilevel moment estimates.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import Grid2D, Observations, Prediction, as_points
from .mc import Ensemble, phik_predict
from .mlmc import LevelEnsemble, MlmcMoments

EDGES = ("left", "right", "bottom", "top")


class ConstraintPreconditionError(ValueError):
    """A realization does not satisfy the constraint it is supposed to satisfy."""

    def __init__(self, message: str, realization: int):
        super().__init__(message)
        self.realization = realization


@dataclass(frozen=True, eq=False)
class DiscreteLinearOperator:
    """``matrix @ field -> constraint vector`` with target and norm.

    ``target`` is either a vector (deterministic ``g``) or an ``N_c x M``
    matrix holding ``g`` for every realization.  ``weights`` are quadrature
    weights of the ``l2`` norm, ``sqrt(sum_i w_i v_i^2)``.
    """

    matrix: np.ndarray
    target: Optional[np.ndarray] = None
    norm_kind: str = "linf"
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.matrix, float)
        if A.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        if self.norm_kind not in ("l2", "linf"):
            raise ValueError("norm_kind must be 'l2' or 'linf'")
        w = np.ones(A.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (A.shape[0],) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per constraint row")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "weights", w)
        if self.target is not None:
            g = np.asarray(self.target, float)
            if g.shape[0] != A.shape[0]:
                raise ValueError("target rows must match the operator's rows")
            object.__setattr__(self, "target", g)

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(values, float)

    def norm(self, v: np.ndarray) -> np.ndarray:
        """Norm of a constraint vector, or of each column of a matrix."""
        v = np.asarray(v, float)
        if self.norm_kind == "linf":
            return np.max(np.abs(v), axis=0)
        w = self.weights if v.ndim == 1 else self.weights[:, None]
        return np.sqrt(np.sum(w * v * v, axis=0))

    def with_target(self, target, norm_kind: Optional[str] = None) -> "DiscreteLinearOperator":
        return DiscreteLinearOperator(self.matrix, target, norm_kind or self.norm_kind, self.weights)

    def targets_for(self, M: int) -> np.ndarray:
        """Per-realization targets as an ``N_c x M`` matrix."""
        if self.target is None:
            raise ValueError("operator has no target")
        if self.target.ndim == 1:
            return np.repeat(self.target[:, None], M, axis=1)
        if self.target.shape[1] != M:
            raise ValueError(f"target has {self.target.shape[1]} columns, expected {M}")
        return self.target


def _edge_nodes(grid: Grid2D, edge: str) -> np.ndarray:
    if edge == "left":
        return grid.index(0, np.arange(grid.ny))
    if edge == "right":
        return grid.index(grid.nx - 1, np.arange(grid.ny))
    if edge == "bottom":
        return grid.index(np.arange(grid.nx), 0)
    if edge == "top":
        return grid.index(np.arange(grid.nx), grid.ny - 1)
    raise ValueError(f"unknown edge {edge!r}; choose from {EDGES}")


def _edges(which) -> tuple:
    if which in (None, "all"):
        return EDGES
    return (which,) if isinstance(which, str) else tuple(which)


def boundary_restriction_operator(grid: Grid2D, which=None, target=None,
                                  norm_kind: str = "linf") -> DiscreteLinearOperator:
    """Extract the field on the selected edges (corner nodes appear once)."""
    nodes: list = []
    for e in _edges(which):
        for n in _edge_nodes(grid, e):
            if n not in nodes:
                nodes.append(int(n))
    i, _ = grid.ij(np.asarray(nodes))
    # edge length per node: dy on vertical edges, dx on horizontal ones
    w = np.where((i == 0) | (i == grid.nx - 1), grid.dy, grid.dx)
    A = np.zeros((len(nodes), grid.size))
    A[np.arange(len(nodes)), nodes] = 1.0
    return DiscreteLinearOperator(A, target, norm_kind, w)


def normal_derivative_operator(grid: Grid2D, edge: str = "left", target=None,
                               norm_kind: str = "linf") -> DiscreteLinearOperator:
    """Outward normal derivative on one edge, one-sided second order.

    ``du/dn ~ (3 u_0 - 4 u_1 + u_2) / (2 h)`` where ``u_0`` is on the edge
    and ``u_1, u_2`` step inward along the normal.
    """
    if edge in ("left", "right") and grid.nx < 3 or edge in ("bottom", "top") and grid.ny < 3:
        raise ValueError("the one-sided stencil needs at least 3 nodes along the normal")
    nodes = _edge_nodes(grid, edge)
    i, j = grid.ij(nodes)
    if edge == "left":
        step, h = (1, 0), grid.dx
    elif edge == "right":
        step, h = (-1, 0), grid.dx
    elif edge == "bottom":
        step, h = (0, 1), grid.dy
    else:
        step, h = (0, -1), grid.dy
    A = np.zeros((len(nodes), grid.size))
    rows = np.arange(len(nodes))
    for k, c in enumerate((3.0, -4.0, 1.0)):
        A[rows, grid.index(i + k * step[0], j + k * step[1])] += c / (2 * h)
    w = np.full(len(nodes), grid.dy if edge in ("left", "right") else grid.dx)
    return DiscreteLinearOperator(A, target, norm_kind, w)


@dataclass
class BoundReport:
    """Every term of a constraint-violation bound and the measured violation.

    ``epsilon`` is the empirical model error ``max_m ||A Y^m - g^m||`` (one
    value per level for multilevel input); it certifies the given ensemble,
    not the underlying stochastic model.
    """

    kind: str
    norm_kind: str
    alpha: float
    epsilon: Union[float, list]
    sigma_g: float
    coeff_inf: float
    std_sum: Union[float, list]
    bound: float
    spectral_bound: float
    measured: float
    inverse_norm2: float
    residual_norm2: float
    level_coefficients: Optional[list] = None
    sqrt_factors: Union[float, list, None] = None

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + 1e-8 * (1 + abs(self.bound))

    @property
    def spectral_holds(self) -> bool:
        return self.measured <= self.spectral_bound + 1e-8 * (1 + abs(self.spectral_bound))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds"] = self.holds
        d["spectral_holds"] = self.spectral_holds
        d["empirical_epsilon"] = True
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _sample_std(vals: np.ndarray) -> np.ndarray:
    """Per-row sample standard deviation with ``1/(M-1)``."""
    return np.std(vals, axis=1, ddof=1)


def _sigma_g(A: DiscreteLinearOperator, g: np.ndarray) -> tuple[np.ndarray, float]:
    gbar = g.mean(axis=1)
    M = g.shape[1]
    dev = A.norm(g - gbar[:, None])
    return gbar, float(np.sqrt(np.sum(dev**2) / (M - 1)))


def _obs_indices(locations, obs: Observations) -> np.ndarray:
    return locations.locate(obs.locations)


def _spectral_terms(model, obs: Observations, prediction: Prediction):
    from .core import assemble_covariance

    C = assemble_covariance(model, obs.locations).entries + prediction.alpha * np.eye(len(obs))
    lam_min = float(np.linalg.eigvalsh(C)[0])
    inv2 = np.inf if lam_min <= 0 else 1.0 / lam_min
    resid = obs.values - model.mean(obs.locations)
    return inv2, float(np.linalg.norm(resid))


def _check_prediction(prediction: Prediction, n_loc: int, obs: Observations):
    if prediction.coefficients is None or len(prediction.coefficients) != len(obs):
        raise ValueError("prediction does not carry coefficients for these observations")
    if len(prediction.mean) != n_loc:
        raise ValueError("prediction must cover every location of the ensemble")


def theorem_bound(source, obs: Observations, A: DiscreteLinearOperator, prediction: Prediction,
                  level_targets: Optional[Sequence[np.ndarray]] = None) -> BoundReport:
    """Evaluate the constraint-violation bound for a PhIK prediction.

    ``source`` is an :class:`Ensemble` (single level) or a sequence of
    :class:`LevelEnsemble` (two or more levels; one level is treated as
    single-level).  For multilevel input each level must keep its coupled
    ``fine``/``coarse`` members so that every level's model error can be
    measured; ``level_targets[l]`` gives ``g`` for the realizations of level
    ``l`` (defaults to the operator's deterministic target).
    """
    if isinstance(source, Ensemble):
        return _single_level_bound(source, obs, A, prediction)
    levels = list(source)
    if len(levels) == 1:
        g = None if level_targets is None else level_targets[0]
        op = A if g is None else A.with_target(g)
        return _single_level_bound(levels[0].samples, obs, op, prediction)
    return _multilevel_bound(levels, obs, A, prediction, level_targets)


def _single_level_bound(ens: Ensemble, obs, A, prediction) -> BoundReport:
    M = ens.M
    _check_prediction(prediction, ens.n_locations, obs)
    g = A.targets_for(M)
    gbar, sigma_g = _sigma_g(A, g)
    eps = float(np.max(A.norm(A(ens.realizations) - g)))
    idx = _obs_indices(ens.locations, obs)
    std_sum = float(np.sum(_sample_std(ens.realizations[idx])))
    coeff_inf = float(np.max(np.abs(prediction.coefficients)))
    root = np.sqrt(M / (M - 1))
    factor = 2 * eps * root + sigma_g
    bound = eps + factor * coeff_inf * std_sum
    inv2, r2 = _spectral_terms(ens.moments, obs, prediction)
    spectral = eps + factor * inv2 * r2 * std_sum
    measured = float(A.norm(A(prediction.mean) - gbar))
    return BoundReport("single-level", A.norm_kind, prediction.alpha, eps, sigma_g, coeff_inf,
                       std_sum, float(bound), float(spectral), measured, inv2, r2,
                       sqrt_factors=float(root))


def _multilevel_bound(levels, obs, A, prediction, level_targets) -> BoundReport:
    L = len(levels)
    mom = MlmcMoments(tuple(levels))
    n_loc = len(mom.locations)
    _check_prediction(prediction, n_loc, obs)
    if level_targets is None:
        targets = [A.targets_for(lev.M) for lev in levels]
    else:
        targets = [np.asarray(t, float) if np.ndim(t) == 2 else np.repeat(np.asarray(t, float)[:, None], lev.M, 1)
                   for t, lev in zip(level_targets, levels)]

    # model error of each resolution, over every realization of it that appears:
    # fine members of level l and coarse members of level l + 1
    eps = np.zeros(L)
    for l, lev in enumerate(levels):
        fine = lev.fine if lev.fine is not None else (lev.samples.realizations if l == 0 else None)
        if fine is None or (l > 0 and lev.coarse is None):
            raise ValueError(f"level {lev.level} does not keep its coupled members")
        eps[l] = max(eps[l], np.max(A.norm(A(fine) - targets[l])))
        if l > 0:
            eps[l - 1] = max(eps[l - 1], np.max(A.norm(A(lev.coarse) - targets[l])))

    gbar, sigma_g = _sigma_g(A, targets[0])
    idx = _obs_indices(mom.locations, obs)
    a = np.abs(prediction.coefficients)
    roots = [np.sqrt(lev.M / (lev.M - 1)) for lev in levels]
    stds = [_sample_std(lev.samples.realizations[idx]) for lev in levels]
    weighted = [float(a @ (r * s)) for r, s in zip(roots, stds)]  # sum_i |a_i| sqrt(.) sigma_l(x_i)
    coeffs = []
    for l in range(L):
        if l == L - 1:
            coeffs.append(1 + 2 * weighted[l])
        else:
            coeffs.append(2 + 2 * (weighted[l] + weighted[l + 1]))
    g_term = sigma_g * float(a @ stds[0])
    bound = float(np.dot(coeffs, eps) + g_term)

    coeff_inf = float(np.max(a))
    inv2, r2 = _spectral_terms(mom, obs, prediction)
    amax = inv2 * r2
    wsum = [amax * float(np.sum(r * s)) for r, s in zip(roots, stds)]
    scoeffs = [1 + 2 * wsum[l] if l == L - 1 else 2 + 2 * (wsum[l] + wsum[l + 1]) for l in range(L)]
    spectral = float(np.dot(scoeffs, eps) + sigma_g * amax * float(np.sum(stds[0])))

    measured = float(A.norm(A(prediction.mean) - gbar))
    kind = "two-level" if L == 2 else f"{L}-level"
    return BoundReport(kind, A.norm_kind, prediction.alpha, eps.tolist(), sigma_g, coeff_inf,
                       [float(np.sum(s)) for s in stds], bound, spectral, measured, inv2, r2,
                       level_coefficients=[float(c) for c in coeffs],
                       sqrt_factors=[float(r) for r in roots])


def check_constraint_precondition(ensemble: Ensemble, A: DiscreteLinearOperator, g, tol: float = 1e-12):
    g = np.asarray(g, float)
    resid = np.max(np.abs(A(ensemble.realizations) - g[:, None]), axis=0)
    scale = tol * (1.0 + np.max(np.abs(g), initial=0.0))
    bad = np.flatnonzero(resid > scale)
    if bad.size:
        m = int(bad[0])
        raise ConstraintPreconditionError(
            f"realization {m} violates the constraint by {resid[m]:.3e}", m
        )


def exact_preservation_check(ensemble: Ensemble, obs: Observations, A: DiscreteLinearOperator, g,
                             queries=None) -> tuple[bool, float]:
    """Check that PhIK with ``alpha = 0`` reproduces a constraint every realization satisfies.

    Returns ``(passed, max |A y_hat - g|)``; raises
    :class:`ConstraintPreconditionError` naming the first realization that
    breaks ``A Y^m = g``.
    """
    g = np.asarray(g, float)
    check_constraint_precondition(ensemble, A, g)
    pred = phik_predict(ensemble, obs, queries, alpha=0.0)
    if len(pred.mean) != A.matrix.shape[1]:
        raise ValueError("queries must cover the whole field the operator acts on")
    viol = float(np.max(np.abs(A(pred.mean) - g)))
    return viol <= 1e-9 * (1.0 + np.max(np.abs(g), initial=0.0)), viol
