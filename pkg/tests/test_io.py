import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dlse import core, io
from dlse.errors import DataError, DimensionError
from dlse.pwa import PwaSpec

from conftest import random_model


class TestModelFile:
    def test_round_trip_is_bit_exact(self, rng, tmp_path):
        m = random_model(rng, 3, 4, 2, 0.123456789)
        path = tmp_path / "m.json"
        io.write_model(m, path)
        back = io.read_model(path)
        assert back == m
        d = json.loads(path.read_text())
        assert d["schema_version"] == 1 and d["n"] == 3 and d["plus"]["K"] == 4 and d["minus"]["K"] == 2

    def test_rejects_bad_documents(self, rng, tmp_path):
        d = io.model_to_dict(random_model(rng, 2, 2, 2, 0.5))
        for mutate in (lambda d: d.pop("T"), lambda d: d["plus"].update(K=5),
                       lambda d: d.update(schema_version=99), lambda d: d.update(T=-1.0),
                       lambda d: d["minus"].update(alphas=[[1.0, 2.0, 3.0]])):
            bad = json.loads(json.dumps(d))
            mutate(bad)
            with pytest.raises(DataError):
                io.model_from_dict(bad)
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(DataError):
            io.read_model(path)

    def test_pwa_file(self, tmp_path):
        s = PwaSpec(1.0, -0.5, [0.0, 2.0], [1.5, -3.0])
        io.write_pwa(s, tmp_path / "p.json")
        assert io.read_pwa(tmp_path / "p.json").to_dict() == s.to_dict()


class TestDataFile:
    def test_round_trip(self, rng, tmp_path):
        X = rng.normal(size=(10, 3))
        y = rng.normal(size=10)
        io.write_data(tmp_path / "d.csv", X, y)
        X2, y2 = io.read_data(tmp_path / "d.csv")
        assert_array_equal(X2, X)
        assert_array_equal(y2, y)
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x1,x2,x3,y"

    def test_optional_y(self, tmp_path):
        io.write_data(tmp_path / "d.csv", np.ones((2, 2)))
        X, y = io.read_data(tmp_path / "d.csv", require_y=False)
        assert y is None and X.shape == (2, 2)
        with pytest.raises(DataError, match="y column"):
            io.read_data(tmp_path / "d.csv")

    def test_ragged_row_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n1,2\n3\n")
        with pytest.raises(DataError, match=":3:"):
            io.read_data(path)

    def test_bad_cells(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x1,y\n1,abc\n")
        with pytest.raises(DataError, match=":2:"):
            io.read_data(path)
        path.write_text("x1,y\n1,nan\n")
        with pytest.raises(DataError, match="non-finite"):
            io.read_data(path)
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="header"):
            io.read_data(path)
        path.write_text("")
        with pytest.raises(DataError):
            io.read_data(path)


class TestGenerators:
    def test_example1(self):
        X, y = io.gen_example1(100, 4)
        assert X.shape == (100, 1)
        assert X.min() >= -2 and X.max() <= 2
        grid = io.example1_phi(np.linspace(-2, 2, 400001))
        assert y.min() >= grid.min() - 1e-9 and y.max() <= grid.max() + 1e-9
        assert_allclose(y, X[:, 0] ** 2 + np.sin(2 * np.pi * X[:, 0]))

    def test_diet5_on_simplex(self):
        X, y = io.gen_diet5(1000, 0)
        assert np.all(np.abs(X.sum(axis=1) - 185) <= 1e-9)
        assert X.min() >= 0
        assert np.all(np.isfinite(y))

    def test_diet5_oracle_structure(self):
        # with all food in the last meal there is no carry-over
        e = 185.0
        peak = 90 + 1.6 * e - 0.0025 * e ** 2
        y = io.diet5_oracle(np.array([[0, 0, 0, 0, e]]))[0]
        assert_allclose(y, 5 * np.log(4 * np.exp(90 / 5) + np.exp(peak / 5)), rtol=1e-13)
        with pytest.raises(DimensionError):
            io.diet5_oracle(np.ones((1, 4)))

    def test_same_seed_same_bytes(self, tmp_path):
        for name, gen in io.GENERATORS.items():
            io.write_data(tmp_path / "a.csv", *gen(50, 3))
            io.write_data(tmp_path / "b.csv", *gen(50, 3))
            assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestMetrics:
    def test_perfect(self, rng):
        m = random_model(rng, 2, 3, 3, 0.5)
        X = rng.normal(size=(20, 2))
        y = core.eval_dlse(m, X)
        out = io.metrics(y, core.eval_dlse(m, X))
        assert out["mean_sq"] == 0 and out["r2"] == 1

    def test_constant_predictor(self, rng):
        y = rng.normal(size=30)
        assert_allclose(io.metrics(y, np.full(30, y.mean()))["r2"], 0.0, atol=1e-15)

    def test_values(self):
        out = io.metrics(np.array([1.0, 2.0, 4.0]), np.array([2.0, 2.0, 3.0]))
        assert_allclose(out["mean_sq"], 2 / 3)
        assert_allclose(out["mean_rel"], (1 + 0 + 0.25) / 3)
        assert out["max_abs"] == 1.0 and out["max_rel"] == 1.0
        assert_allclose(out["r2"], 1 - 2 / (14 / 3))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            io.metrics(np.ones(3), np.ones(2))
