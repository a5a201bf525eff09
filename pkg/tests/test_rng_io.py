import json

import numpy as np
import pytest

from phik import io
from phik.active import CurvePoint
from phik.core import Field, Grid2D
from phik.mc import Ensemble
from phik.mlmc import LevelEnsemble
from phik.rng import RngSpec, _splitmix64_array, splitmix64, stream_key, uniforms


class TestRng:
    def test_splitmix_reference_value(self):
        # first output of the reference splitmix64 generator seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_array_matches_scalar(self):
        xs = [0, 1, 2**63, 2**64 - 1, 123456789]
        arr = _splitmix64_array(np.array(xs, dtype=np.uint64))
        assert [int(v) for v in arr] == [splitmix64(x) for x in xs]

    def test_uniforms_open_interval(self):
        u = uniforms(stream_key(0, 1, 0), 10_000)
        assert np.all((u > 0) & (u < 1))
        assert abs(u.mean() - 0.5) < 0.01

    def test_streams(self):
        r = RngSpec(5)
        assert np.array_equal(r.normals(1, 3, 12), RngSpec(5).normals(1, 3, 12))
        assert not np.array_equal(r.normals(1, 3, 12), r.normals(2, 3, 12))
        assert not np.array_equal(r.normals(1, 3, 12), r.normals(1, 4, 12))
        assert np.array_equal(r.normal_matrix(1, [3, 0], 12)[0], r.normals(1, 3, 12))

    def test_normal_moments(self):
        z = np.concatenate([RngSpec(1).normals(1, m, 100) for m in range(200)])
        assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


class TestIo:
    def test_field_roundtrip(self, tmp_path):
        g = Grid2D(4, 3, -1, 1, 0, 2)
        f = Field(g, np.random.default_rng(0).standard_normal(g.size) / 3)
        io.write_field(tmp_path / "f.csv", f)
        assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,y,value"
        back = io.read_field(tmp_path / "f.csv", g)
        assert np.array_equal(back.values, f.values)

    def test_ensemble_roundtrip(self, tmp_path):
        g = Grid2D(3, 3)
        ens = Ensemble(g, np.random.default_rng(1).standard_normal((9, 4)))
        lev = LevelEnsemble(2, g, ens, base_seed=7)
        io.write_ensemble(tmp_path / "e.csv", ens, lev)
        back, meta = io.read_ensemble(tmp_path / "e.csv")
        assert np.array_equal(back.realizations, ens.realizations)
        assert back.locations == g
        assert meta["level"] == 2 and meta["base_seed"] == 7
        assert (tmp_path / "e.csv").read_text().splitlines()[0] == "loc_index,m0,m1,m2,m3"

    def test_learning_curve(self, tmp_path):
        pts = [CurvePoint(8, 0.1, 2.0, 1.0), CurvePoint(9, 0.05, 1.5, 0.5, (0.25, 0.5))]
        io.write_learning_curves(tmp_path / "c.csv", [("phik", pts)])
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "n_obs,method,rel_error,s2_sum,chosen_x,chosen_y"
        assert lines[1] == "8,phik,0.10000000000000001,2,,"
        assert lines[2] == "9,phik,0.050000000000000003,1.5,0.25,0.5"

    def test_json_numpy(self, tmp_path):
        io.write_json(tmp_path / "a.json", {"a": np.float64(1.5), "b": np.arange(2)})
        assert json.loads((tmp_path / "a.json").read_text()) == {"a": 1.5, "b": [0, 1]}
