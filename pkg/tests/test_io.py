"""Snapshot binaries, CSV emission, config parsing."""

import json

import numpy as np
import pytest

from vewaves.snapshots import (
    format_float,
    parse_config_text,
    read_snapshot,
    write_json,
    write_kernel_dump_csv,
    write_norms_csv,
    write_snapshot,
)
from vewaves.spectral import make_grid


class TestSnapshots:
    def test_round_trip(self, tmp_path, rng):
        grid = make_grid(8, 2.0)
        fields = {
            "density": rng.normal(size=grid.phys_shape),
            "velocity": rng.normal(size=(3,) + grid.phys_shape),
            "deformation": rng.normal(size=(3, 3) + grid.phys_shape),
        }
        path = write_snapshot(tmp_path / "snap.bin", grid, 1.25, fields, meta={"seed": 3})
        grid2, t, fields2 = read_snapshot(path)
        assert grid2.n == 8 and abs(grid2.length - 2.0) < 1e-15
        assert t == 1.25
        for name in fields:
            assert np.array_equal(fields[name], fields2[name])
        sidecar = json.loads((tmp_path / "snap.bin.json").read_text())
        assert sidecar["meta"]["seed"] == 3
        assert [c["name"] for c in sidecar["components"]] == list(fields)

    def test_rejects_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"not a snapshot")
        with pytest.raises(ValueError):
            read_snapshot(p)

    def test_rejects_bad_shape(self, tmp_path):
        grid = make_grid(8, 2.0)
        with pytest.raises(ValueError):
            write_snapshot(tmp_path / "x.bin", grid, 0.0, {"f": np.zeros((2, 8, 8, 8))})


class TestCsv:
    def test_seventeen_significant_digits_round_trip(self):
        vals = [np.pi, 1.0 / 3.0, 2.0 ** -52, 1234567.890123456]
        for v in vals:
            assert float(format_float(v)) == v

    def test_norm_series_layout(self, tmp_path):
        path = write_norms_csv(tmp_path / "n.csv", [0.0, 1.0], {"2": [3.0, 2.0], "inf": [5.0, 4.0]})
        lines = path.read_text().splitlines()
        assert lines[0] == "time,p,value"
        assert lines[1].split(",") == ["0", "2", "3"]
        assert lines[3].split(",")[1] == "inf"
        assert len(lines) == 5

    def test_kernel_dump_columns(self, tmp_path):
        rows = [{"k": 1.0, "t": 0.0, "s_minus": 0.0, "s_plus": 1.0, "s_zero": 1.0,
                 "c_minus": 0.0, "c_plus": 1.0, "c_zero": 1.0}]
        path = write_kernel_dump_csv(tmp_path / "k.csv", rows)
        header, row = path.read_text().splitlines()
        cols = header.split(",")
        assert cols[:2] == ["k", "t"]
        assert "s_minus_re" in cols and "c_zero_im" in cols
        assert len(cols) == 14
        assert row.split(",")[2] == "0"  # s_minus at t=0


class TestConfigParsing:
    def test_sections_and_coercion(self):
        cfg = parse_config_text(
            """
            mode = linear_radial
            t_end = 200
            dealias = true
            p_values = 2,4,inf
            [params]
            nu = 1.5   # viscosity
            beta = 0.8
            """
        )
        assert cfg["mode"] == "linear_radial"
        assert cfg["t_end"] == 200 and isinstance(cfg["t_end"], int)
        assert cfg["dealias"] is True
        assert cfg["p_values"] == [2, 4, float("inf")]
        assert cfg["params"]["nu"] == 1.5

    def test_json_passthrough(self):
        cfg = parse_config_text('{"a": 1, "b": {"c": [1, 2]}}')
        assert cfg == {"a": 1, "b": {"c": [1, 2]}}

    def test_bad_line_reported(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_config_text("a = 1\nnot a setting\n")

    def test_write_json_handles_numpy(self, tmp_path):
        path = write_json(tmp_path / "o.json", {"x": np.float64(1.5), "y": np.arange(3)})
        data = json.loads(path.read_text())
        assert data == {"x": 1.5, "y": [0, 1, 2]}
