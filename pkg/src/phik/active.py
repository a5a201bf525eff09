"""Greedy active learning by maximum predictive MSE, and learning-curve diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .core import Grid2D, Observations, PointSet, Prediction, as_points, relative_frobenius_error

Predictor = Callable[[Observations], Prediction]


@dataclass
class CurvePoint:
    """Learning-curve entry for one observation count.

    ``chosen`` is the location added to reach ``n_obs`` (``None`` for the
    initial design).
    """

    n_obs: int
    rel_error: Optional[float]
    s2_sum: float
    s2_max: float
    chosen: Optional[tuple] = None


@dataclass
class AcquisitionState:
    observations: Observations
    candidates: Union[Grid2D, PointSet]
    N_max: int
    history: list = field(default_factory=list)
    curve: list = field(default_factory=list)
    prediction: Optional[Prediction] = None

    def __post_init__(self):
        if self.N_max < len(self.observations):
            raise ValueError("N_max is smaller than the initial number of observations")
        self.observed_indices()

    @property
    def n_obs(self) -> int:
        return len(self.observations)

    def observed_indices(self) -> np.ndarray:
        """Candidate indices already observed (every observation must be a candidate)."""
        return np.asarray(self.candidates.locate(self.observations.locations), dtype=int)

    def open_mask(self) -> np.ndarray:
        mask = np.ones(len(self.candidates), dtype=bool)
        mask[self.observed_indices()] = False
        return mask


def _mse_at_candidates(pred: Prediction, state: AcquisitionState) -> np.ndarray:
    if len(pred.mse) != len(state.candidates):
        raise ValueError("the prediction must cover every candidate")
    return pred.mse


def select_next(predictor: Union[Predictor, Prediction], state: AcquisitionState) -> tuple[int, tuple]:
    """Index and location of the unobserved candidate with the largest MSE.

    Ties go to the smallest candidate index.
    """
    pred = predictor if isinstance(predictor, Prediction) else predictor(state.observations)
    mse = _mse_at_candidates(pred, state)
    mask = state.open_mask()
    if not mask.any():
        raise ValueError("all candidates have already been observed")
    scores = np.where(mask, mse, -np.inf)
    k = int(np.argmax(scores))  # first maximum, i.e. lowest index
    return k, tuple(float(v) for v in as_points(state.candidates)[k])


def _record(state: AcquisitionState, pred: Prediction, truth, chosen):
    mse = _mse_at_candidates(pred, state)
    err = None if truth is None else relative_frobenius_error(pred.mean, truth)
    mask = state.open_mask()
    s2_max = float(mse[mask].max()) if mask.any() else 0.0
    state.curve.append(CurvePoint(state.n_obs, err, float(np.sum(mse)), s2_max, chosen))


def run_active_learning(predictor: Predictor, oracle: Callable, state: AcquisitionState,
                        N_max: Optional[int] = None, truth=None) -> AcquisitionState:
    """Add observations one at a time at the MSE maximizer until the budget is spent.

    ``predictor(observations)`` returns a prediction over all candidates;
    it may refit hyperparameters.  ``oracle(point)`` returns the measured
    value.  With ``truth`` (a field over the candidates) every step records
    the relative Frobenius error.
    """
    if N_max is not None:
        state.N_max = N_max
    pred = predictor(state.observations)
    _record(state, pred, truth, None)
    while state.n_obs < state.N_max:
        k, point = select_next(pred, state)
        value = float(oracle(point))
        state.history.append((point, float(pred.mse[k]), state.curve[-1].rel_error))
        state.observations = state.observations.append(point, value)
        pred = predictor(state.observations)
        _record(state, pred, truth, point)
    state.prediction = pred
    return state


def _check_spd(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K, float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("K must be square")
    if not np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * np.max(np.abs(K), initial=1.0)):
        raise ValueError("K must be symmetric")
    lam = linalg.eigvalsh(K)
    if lam[0] + 1e-10 <= 0:
        raise ValueError(f"K is not positive definite (smallest eigenvalue {lam[0]:.3e})")
    return lam


def mse_sum_lower_bound(K, N: int) -> float:
    """Sum of the ``Q - N`` smallest eigenvalues of ``K``.

    No choice of ``N`` observed candidates can bring the summed MSE over all
    ``Q`` candidates below this value.
    """
    lam = _check_spd(K)
    Q = len(lam)
    if not 0 <= N <= Q:
        raise ValueError(f"N must lie in [0, {Q}]")
    return float(np.sum(lam[: Q - N]))


def mse_over_candidates(K, observed) -> np.ndarray:
    """``K_jj - c_j^T C^-1 c_j`` for every candidate ``j`` via a Cholesky solve."""
    K = np.asarray(K, float)
    obs = np.asarray(observed, dtype=int)
    if obs.size == 0:
        return np.diag(K).copy()
    cf = linalg.cho_factor(K[np.ix_(obs, obs)], lower=True)
    c = K[obs, :]
    return np.diag(K) - np.einsum("ij,ij->j", c, linalg.cho_solve(cf, c))


def projection_identity_check(K, observed) -> float:
    """Largest gap between the MSE and the projection residual diagonal.

    The second computation projects each column ``K_j`` onto the span of the
    observed columns in the inner product ``<u, v> = u^T K^-1 v`` by solving
    a least-squares problem, then reads off the ``j``-th entry of the
    residual.
    """
    K = np.asarray(K, float)
    _check_spd(K)
    obs = np.asarray(observed, dtype=int)
    direct = mse_over_candidates(K, obs)
    if obs.size == 0:
        return float(np.max(np.abs(direct - np.diag(K))))
    # with K = L L^T, ||u||_K = ||L^-1 u||_2 and L^-1 K = L^T
    Lt = linalg.cholesky(K, lower=False)
    b, *_ = np.linalg.lstsq(Lt[:, obs], Lt, rcond=None)
    resid_diag = np.diag(K) - np.einsum("ij,ij->j", K[obs, :], b)
    return float(np.max(np.abs(direct - resid_diag)))
