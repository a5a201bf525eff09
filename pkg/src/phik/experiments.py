"""Experiment configurations and runners behind the command-line interface."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import io
from .active import AcquisitionState, run_active_learning
from .constraints import (
    BoundReport,
    ConstraintPreconditionError,
    boundary_restriction_operator,
    exact_preservation_check,
    normal_derivative_operator,
    theorem_bound,
)
from .core import Field, Grid2D, Observations, PointSet, RelativeAlpha, relative_frobenius_error
from .kriging import fit_kriging, kriging_predict
from .mc import Ensemble, phik_predict, observe
from .mlmc import mlmc_cost, mlmc_phik_predict
from .models import (
    BoundaryResidualModel,
    constrained_field_model,
    generate_ensemble,
    generate_levels,
    generate_two_level,
    get_model,
    halton_design,
    held_out_realization,
)
from .rng import RngSpec, stream_key

METHODS = ("phik", "kriging", "mlmc-phik")
KINDS = ("reconstruct", "active", "mlmc-compare", "verify-bounds")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Settings shared by all experiment kinds; each kind reads the ones it needs.

    ``observations`` is a count of Halton-placed grid nodes, a list of
    ``[x, y]`` grid nodes, or ``"all"``.  ``alpha`` is ``"auto"``, a
    nonnegative number, or ``{"relative": f}`` for ``f`` times the mean
    prior variance at the observations.
    """

    kind: str = "reconstruct"
    model: str = "stochastic-branin"
    grid: list = field(default_factory=lambda: [41, 41])
    coarse_grid: list = field(default_factory=lambda: [11, 11])
    observations: Union[int, str, list] = 8
    M: int = 1000
    M_levels: list = field(default_factory=lambda: [1000, 50])
    m_fine: list = field(default_factory=lambda: [5, 10, 20, 50, 100])
    m_coarse: int = 500
    alpha: Union[str, float, dict] = "auto"
    N_max: int = 20
    seed: int = 1
    out: str = "out"
    methods: list = field(default_factory=lambda: ["phik", "kriging"])
    trials: int = 100
    residual: float = 1e-3
    corrupt_realization: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        try:
            get_model(self.model)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        for name in ("grid", "coarse_grid"):
            g = getattr(self, name)
            if not (isinstance(g, list) and len(g) == 2 and all(isinstance(n, int) and n >= 2 for n in g)):
                raise ConfigError(f"{name} must be [nx, ny] with integers >= 2")
        obs = self.observations
        if isinstance(obs, bool) or not (
            (isinstance(obs, int) and obs >= 1) or obs == "all"
            or (isinstance(obs, list) and obs and all(isinstance(p, list) and len(p) == 2 for p in obs))
        ):
            raise ConfigError("observations must be a positive count, 'all', or a list of [x, y]")
        for name in ("M", "m_coarse", "N_max", "trials", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a nonnegative integer")
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        for name in ("M_levels", "m_fine"):
            v = getattr(self, name)
            if not (isinstance(v, list) and v and all(isinstance(n, int) and n >= 2 for n in v)):
                raise ConfigError(f"{name} must be a list of integers >= 2")
        if len(self.M_levels) != 2:
            raise ConfigError("M_levels must be [M_coarse, M_fine]")
        if self.m_coarse == 1:
            raise ConfigError("m_coarse must be 0 or at least 2")
        if not (isinstance(self.methods, list) and self.methods and set(self.methods) <= set(METHODS)):
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}")
        if not isinstance(self.out, str):
            raise ConfigError("out must be a path")
        if not isinstance(self.residual, (int, float)) or self.residual < 0:
            raise ConfigError("residual must be a nonnegative number")
        if self.corrupt_realization is not None and (
            not isinstance(self.corrupt_realization, int) or self.corrupt_realization < 0
        ):
            raise ConfigError("corrupt_realization must be a nonnegative integer or null")
        self.alpha_policy()

    def alpha_policy(self):
        a = self.alpha
        if a == "auto":
            return "auto"
        if isinstance(a, (int, float)) and not isinstance(a, bool) and a >= 0:
            return float(a)
        if isinstance(a, dict) and set(a) == {"relative"} and isinstance(a["relative"], (int, float)) \
                and a["relative"] >= 0:
            return RelativeAlpha(float(a["relative"]))
        raise ConfigError("alpha must be 'auto', a nonnegative number, or {'relative': f}")

    @property
    def fine_grid(self) -> Grid2D:
        return Grid2D(*self.grid)

    @property
    def coarse(self) -> Grid2D:
        return Grid2D(*self.coarse_grid)

    def to_dict(self) -> dict:
        return asdict(self)


KIND_DEFAULTS = {
    "reconstruct": {},
    "active": {},
    "mlmc-compare": {"observations": 15},
    "verify-bounds": {"grid": [9, 9], "coarse_grid": [5, 5], "observations": 8, "M": 30},
}


def make_config(kind: str, values: Optional[dict] = None, **overrides) -> ExperimentConfig:
    """Build a config from defaults, a dict (e.g. parsed JSON) and overrides; unknown keys are rejected."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    data = dict(KIND_DEFAULTS[kind])
    values = dict(values or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if values.get("kind", kind) != kind:
        raise ConfigError(f"config is for {values['kind']!r}, not {kind!r}")
    data.update(values)
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["kind"] = kind
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def observation_indices(cfg: ExperimentConfig, grid: Grid2D) -> np.ndarray:
    obs = cfg.observations
    if obs == "all":
        return np.arange(grid.size)
    if isinstance(obs, int):
        if obs > grid.size:
            raise ConfigError("more observations than grid nodes")
        return halton_design(obs, grid, cfg.seed)
    try:
        return np.asarray(grid.locate(np.asarray(obs, float)), dtype=int)
    except KeyError as e:
        raise ConfigError(f"observation is not a grid node: {e}") from None


def _domain(grid: Grid2D):
    return (grid.xmin, grid.ymin), (grid.xmax, grid.ymax)


def predictor_for(method: str, cfg: ExperimentConfig, grid: Grid2D, rng: RngSpec):
    """A function ``observations -> Prediction`` over ``grid`` for ``method``."""
    model = get_model(cfg.model)
    alpha = cfg.alpha_policy()
    if method == "phik":
        ens = generate_ensemble(model, grid, cfg.M, rng)
        return lambda obs: phik_predict(ens, obs, grid, alpha=alpha), cfg.M
    if method == "mlmc-phik":
        m_c, m_f = cfg.M_levels
        levels = generate_two_level(model, grid, cfg.coarse, m_f, m_c, rng)
        return lambda obs: mlmc_phik_predict(levels, obs, grid, alpha=alpha), [m_c, m_f]
    if method == "kriging":
        dom = _domain(grid)

        def krige(obs: Observations):
            X = obs.locations.points
            fit = fit_kriging(X, obs.values, domain=dom)
            return kriging_predict(fit, X, obs.values, grid, alpha=alpha)

        return krige, None
    raise ConfigError(f"unknown method {method!r}")


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_reconstruct(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Reconstruct the deterministic Branin field from sparse observations."""
    grid = cfg.fine_grid
    model = get_model(cfg.model)
    truth = model.truth(grid)
    idx = observation_indices(cfg, grid)
    obs = observe(grid, idx, truth[idx])
    rng = RngSpec(cfg.seed)
    out = _prepare_out(cfg) if write else None
    if write:
        io.write_field(out / "truth.csv", Field(grid, truth))
    results = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        predict, M = predictor_for(method, cfg, grid, rng)
        pred = predict(obs)
        err = relative_frobenius_error(pred.mean, truth)
        results.append({
            "method": method, "N": len(obs), "M": M, "alpha": pred.alpha,
            "rel_error": err, "wall_time": time.perf_counter() - t0,
        })
        if write:
            io.write_field(out / f"recon_{method}.csv", Field(grid, pred.mean))
            io.write_field(out / f"error_{method}.csv", Field(grid, pred.mean - truth))
            io.write_field(out / f"std_{method}.csv", Field(grid, pred.std))
    summary = {"kind": "reconstruct", "seed": cfg.seed, "results": results}
    if write:
        io.write_json(out / "summary.json", summary)
    return summary


def run_active(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Greedy learning curves from the initial design up to ``N_max`` observations."""
    grid = cfg.fine_grid
    model = get_model(cfg.model)
    truth = model.truth(grid)
    idx = observation_indices(cfg, grid)
    if cfg.N_max < len(idx):
        raise ConfigError("N_max is smaller than the initial number of observations")
    rng = RngSpec(cfg.seed)

    def oracle(point):
        return truth[grid.locate(np.array([point]))[0]]

    curves, results = [], []
    for method in cfg.methods:
        t0 = time.perf_counter()
        predict, M = predictor_for(method, cfg, grid, rng)
        state = AcquisitionState(observe(grid, idx, truth[idx]), grid, cfg.N_max)
        run_active_learning(predict, oracle, state, truth=truth)
        curves.append((method, state.curve))
        results.append({
            "method": method, "N": state.n_obs, "N0": len(idx), "M": M,
            "alpha": state.prediction.alpha,
            "rel_error": state.curve[-1].rel_error,
            "rel_error_initial": state.curve[0].rel_error,
            "wall_time": time.perf_counter() - t0,
        })
    summary = {"kind": "active", "seed": cfg.seed, "results": results}
    if write:
        out = _prepare_out(cfg)
        io.write_learning_curves(out / "learning_curve.csv", curves)
        io.write_json(out / "summary.json", summary)
    summary["curves"] = {m: c for m, c in curves}
    return summary


MLMC_COLUMNS = ["m_fine", "m_coarse", "mc_rel_error", "mlmc_rel_error", "mc_cost", "mlmc_cost"]


def mlmc_compare_row(model, fine: Grid2D, coarse: Grid2D, m_fine: int, m_coarse: int,
                     n_obs: int, seed: int, alpha="auto") -> dict:
    """MC-PhIK from ``m_fine`` fine samples vs MLMC-PhIK adding ``m_coarse`` coarse ones.

    The truth is a held-out fine realization.  MC uses the fine members of
    the coupled pairs, so both estimators see the same fine simulations.
    """
    rng = RngSpec(seed)
    truth = held_out_realization(model, fine, rng)
    idx = halton_design(n_obs, fine, seed)
    obs = observe(fine, idx, truth[idx])
    pairs = generate_levels(model, [coarse, fine], [max(m_coarse, 2), m_fine], rng)
    mc_ens = Ensemble(fine, pairs[1].fine)
    mc = phik_predict(mc_ens, obs, fine, alpha=alpha)
    mc_err = relative_frobenius_error(mc.mean, truth)
    mc_cost = float(m_fine)
    if m_coarse == 0:
        ml_err, ml_cost, ml_alpha = mc_err, mc_cost, mc.alpha
    else:
        ml = mlmc_phik_predict(pairs, obs, fine, alpha=alpha)
        ml_err, ml_alpha = relative_frobenius_error(ml.mean, truth), ml.alpha
        ml_cost = mlmc_cost([m_coarse, m_fine], [coarse, fine])
    return {"m_fine": m_fine, "m_coarse": m_coarse, "mc_rel_error": mc_err,
            "mlmc_rel_error": ml_err, "mc_cost": mc_cost, "mlmc_cost": ml_cost,
            "mc_alpha": mc.alpha, "mlmc_alpha": ml_alpha}


def run_mlmc_compare(cfg: ExperimentConfig, write: bool = True) -> dict:
    if not isinstance(cfg.observations, int):
        raise ConfigError("mlmc-compare places observations by count")
    model = get_model(cfg.model)
    t0 = time.perf_counter()
    rows = [mlmc_compare_row(model, cfg.fine_grid, cfg.coarse, m, cfg.m_coarse, cfg.observations,
                             cfg.seed, cfg.alpha_policy()) for m in cfg.m_fine]
    summary = {
        "kind": "mlmc-compare", "seed": cfg.seed,
        "results": [{"method": meth, "N": cfg.observations,
                     "M": [r["m_fine"] for r in rows] if meth == "phik" else
                     [[cfg.m_coarse, r["m_fine"]] for r in rows],
                     "alpha": [r[f"{key}_alpha"] for r in rows],
                     "rel_error": [r[f"{key}_rel_error"] for r in rows]}
                    for meth, key in (("phik", "mc"), ("mlmc-phik", "mlmc"))],
        "wall_time": time.perf_counter() - t0,
    }
    if write:
        out = _prepare_out(cfg)
        io.write_rows(out / "mlmc_compare.csv", MLMC_COLUMNS,
                      [[r[c] if c in ("m_fine", "m_coarse") else float(r[c]) for c in MLMC_COLUMNS]
                       for r in rows])
        io.write_json(out / "summary.json", summary)
    summary["rows"] = rows
    return summary


def _trial_seed(seed: int, config_id: int, trial: int) -> int:
    return stream_key(seed, 1000 + config_id, trial) >> 1


def bound_trial(n_levels: int, trial: int, cfg: ExperimentConfig) -> BoundReport:
    """One randomized bound check with ``n_levels`` levels (1 = plain Monte Carlo)."""
    seed = _trial_seed(cfg.seed, n_levels, trial)
    rng = RngSpec(seed)
    u = rng.uniforms(99, 0, 4)
    eps0 = cfg.residual * 10 ** (2 * u[0] - 1)  # injected residual within a decade either way
    model = BoundaryResidualModel(residual=eps0)
    fine = cfg.fine_grid
    grids = [fine]
    for _ in range(n_levels - 1):
        g = grids[0]
        grids.insert(0, Grid2D((g.nx + 1) // 2, (g.ny + 1) // 2))
    n_obs = 3 + int(u[1] * (min(cfg.observations, fine.size - 1) if isinstance(cfg.observations, int) else 10))
    norm = "l2" if trial % 2 else "linf"
    if trial % 4 == 3:
        A = normal_derivative_operator(fine, ("left", "right", "bottom", "top")[trial // 4 % 4], norm_kind=norm)
    else:
        A = boundary_restriction_operator(fine, norm_kind=norm)
    truth = held_out_realization(model, fine, rng)
    idx = halton_design(min(n_obs, fine.size), fine, seed % (2**32))
    obs = observe(fine, idx, truth[idx])
    M = 3 + int(u[2] * cfg.M)
    alpha = cfg.alpha_policy()
    if n_levels == 1:
        ens = generate_ensemble(model, fine, M, rng)
        xi = rng.normal_matrix(1, range(M), model.n_params)
        op = A.with_target(A(model.target(fine.points, xi)))
        pred = phik_predict(ens, obs, fine, alpha=alpha)
        return theorem_bound(ens, obs, op, pred)
    sizes = [M * 4 ** (n_levels - 1 - l) for l in range(n_levels)]
    levels = generate_levels(model, grids, sizes, rng)
    targets = [A(t) for t in model.level_targets(fine.points, levels, rng)]
    pred = mlmc_phik_predict(levels, obs, fine, alpha=alpha)
    return theorem_bound(levels, obs, A, pred, level_targets=targets)


def exact_preservation_case(cfg: ExperimentConfig) -> dict:
    """Boundary-matching ensemble; optionally corrupt one realization."""
    grid = cfg.fine_grid
    rng = RngSpec(cfg.seed)
    profile = lambda x, y: 1.0 + x - 0.5 * y**2  # noqa: E731
    ens = constrained_field_model(grid, cfg.M, rng, profile)
    A = boundary_restriction_operator(grid)
    g = A(np.asarray(profile(grid.points[:, 0], grid.points[:, 1]), float))
    if cfg.corrupt_realization is not None:
        if cfg.corrupt_realization >= ens.M:
            raise ConfigError("corrupt_realization is not a realization index")
        r = ens.realizations.copy()
        r[grid.boundary_indices()[0], cfg.corrupt_realization] += 1e-3
        ens = Ensemble(grid, r)
    truth = held_out_realization("stochastic-branin", grid, rng)
    n = cfg.observations if isinstance(cfg.observations, int) else 10
    # boundary nodes carry no variance in this ensemble
    idx = halton_design(n, grid, cfg.seed, exclude=grid.boundary_indices())
    obs = observe(grid, idx, truth[idx])
    try:
        ok, viol = exact_preservation_check(ens, obs, A, g, grid)
        return {"passed": ok, "max_violation": viol, "error": None}
    except ConstraintPreconditionError as e:
        return {"passed": False, "max_violation": None, "error": str(e),
                "corrupt_realization": e.realization}


BOUND_COLUMNS = ["suite", "trial", "norm", "measured", "bound", "spectral_bound", "holds"]


def run_verify_bounds(cfg: ExperimentConfig, write: bool = True) -> dict:
    t0 = time.perf_counter()
    exact = exact_preservation_case(cfg)
    suites, rows = {}, []
    for n_levels, name in ((1, "single-level"), (2, "two-level"), (3, "3-level")):
        reports = [bound_trial(n_levels, t, cfg) for t in range(cfg.trials)]
        passed = sum(r.holds for r in reports)
        suites[name] = {"trials": len(reports), "passed": passed,
                        "spectral_passed": sum(r.spectral_holds for r in reports),
                        "example": reports[0].to_dict() if reports else None}
        rows += [[name, t, r.norm_kind, float(r.measured), float(r.bound), float(r.spectral_bound),
                  int(r.holds)] for t, r in enumerate(reports)]
    ok = exact["passed"] and all(s["passed"] == s["trials"] for s in suites.values())
    report = {"kind": "verify-bounds", "seed": cfg.seed, "passed": ok,
              "exact_preservation": exact, "suites": suites,
              "alpha": cfg.alpha if not isinstance(cfg.alpha, dict) else dict(cfg.alpha),
              "wall_time": time.perf_counter() - t0}
    if write:
        out = _prepare_out(cfg)
        io.write_rows(out / "bounds.csv", BOUND_COLUMNS, rows)
        io.write_json(out / "report.json", report)
    return report


RUNNERS = {
    "reconstruct": run_reconstruct,
    "active": run_active,
    "mlmc-compare": run_mlmc_compare,
    "verify-bounds": run_verify_bounds,
}
