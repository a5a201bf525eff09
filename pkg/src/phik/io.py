"""CSV and JSON readers and writers for fields, ensembles, curves and reports.

Floats are written with ``%.17g`` so that values round-trip exactly and
files are byte-identical for identical inputs.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import Field, Grid2D
from .mc import Ensemble
from .mlmc import LevelEnsemble


def fmt(v) -> str:
    if v is None:
        return ""
    return "%.17g" % float(v)


def _writer(path):
    f = open(path, "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\n")


def write_field(path, field: Field) -> None:
    pts = field.grid.points
    f, w = _writer(path)
    with f:
        w.writerow(["x", "y", "value"])
        for (x, y), v in zip(pts, field.values):
            w.writerow([fmt(x), fmt(y), fmt(v)])


def read_field(path, grid: Grid2D) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.allclose(data[:, :2], grid.points, rtol=0, atol=1e-12):
        raise ValueError(f"{path}: coordinates do not match the grid")
    return Field(grid, data[:, 2])


def _grid_meta(grid: Grid2D) -> dict:
    return {"nx": grid.nx, "ny": grid.ny, "bounds": list(grid.bounds)}


def write_ensemble(path, ensemble: Ensemble, level: Optional[LevelEnsemble] = None) -> None:
    """Ensemble CSV ``loc_index,m0,m1,...`` plus a ``.json`` sidecar describing the grid."""
    path = Path(path)
    if not isinstance(ensemble.locations, Grid2D):
        raise TypeError("only grid ensembles can be written")
    f, w = _writer(path)
    with f:
        w.writerow(["loc_index"] + [f"m{m}" for m in range(ensemble.M)])
        for i, row in enumerate(ensemble.realizations):
            w.writerow([str(i)] + [fmt(v) for v in row])
    meta = _grid_meta(ensemble.locations)
    if level is not None:
        meta.update(level=level.level, base_seed=level.base_seed)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_ensemble(path) -> tuple[Ensemble, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    xmin, xmax, ymin, ymax = meta["bounds"]
    grid = Grid2D(meta["nx"], meta["ny"], xmin, xmax, ymin, ymax)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.array_equal(data[:, 0], np.arange(grid.size)):
        raise ValueError(f"{path}: loc_index column must enumerate the grid nodes")
    return Ensemble(grid, data[:, 1:]), meta


CURVE_COLUMNS = ["n_obs", "method", "rel_error", "s2_sum", "chosen_x", "chosen_y"]


def write_learning_curves(path, curves: Iterable[tuple]) -> None:
    """``curves`` yields ``(method, list of CurvePoint)``."""
    f, w = _writer(path)
    with f:
        w.writerow(CURVE_COLUMNS)
        for method, points in curves:
            for cp in points:
                cx, cy = cp.chosen if cp.chosen is not None else (None, None)
                w.writerow([cp.n_obs, method, fmt(cp.rel_error), fmt(cp.s2_sum), fmt(cx), fmt(cy)])


def write_rows(path, header, rows) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n",
                          encoding="utf-8")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")
