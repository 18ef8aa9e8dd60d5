"""Trajectory file parsing, writing, and round-trips."""

import json

import numpy as np
import pytest

from dsmix.dataio import load_trajectories, save_trajectories
from dsmix.errors import ParseError, UsageError
from dsmix.mixture import Demonstration


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


class TestCsvParsing:
    def test_positions_only_with_dt(self, tmp_path):
        rows = ["x1,x2"] + [f"{0.1 * i},{0.2 * i}" for i in range(5)]
        demo = load_trajectories(write(tmp_path, "a.csv", "\n".join(rows)), dt=0.01)
        # interior: central difference
        expected = (demo.positions[2] - demo.positions[0]) / 0.02
        assert np.allclose(demo.velocities[1], expected)
        # endpoints: one-sided
        assert np.allclose(demo.velocities[0], (demo.positions[1] - demo.positions[0]) / 0.01)
        assert np.allclose(demo.velocities[-1], (demo.positions[-1] - demo.positions[-2]) / 0.01)

    def test_explicit_velocities_taken_verbatim(self, tmp_path):
        text = "x1,x2,v1,v2\n0,0,1.5,-2.5\n1,1,3.25,0.125\n"
        demo = load_trajectories(write(tmp_path, "b.csv", text))
        assert np.array_equal(demo.velocities, [[1.5, -2.5], [3.25, 0.125]])

    def test_blank_line_separates_trajectories(self, tmp_path):
        text = "x1,x2,v1,v2\n0,0,1,0\n1,0,1,0\n\n5,5,0,1\n5,6,0,1\n"
        demo = load_trajectories(write(tmp_path, "c.csv", text))
        assert demo.boundaries == (0, 2)

    def test_sentinel_row_separates_trajectories(self, tmp_path):
        text = "x1,x2,v1,v2\n0,0,1,0\n1,0,1,0\n---\n5,5,0,1\n5,6,0,1\n"
        demo = load_trajectories(write(tmp_path, "d.csv", text))
        assert demo.boundaries == (0, 2)

    def test_malformed_row_reports_line_number(self, tmp_path):
        text = "x1,x2,v1,v2\n0,0,1,0\n1,zap,1,0\n"
        with pytest.raises(ParseError, match="line 3"):
            load_trajectories(write(tmp_path, "e.csv", text))

    def test_wrong_column_count_reports_line(self, tmp_path):
        text = "x1,x2\n0,0\n1\n"
        with pytest.raises(ParseError, match="line 3"):
            load_trajectories(write(tmp_path, "f.csv", text), dt=0.1)

    def test_bad_header_rejected(self, tmp_path):
        with pytest.raises(ParseError, match="line 1"):
            load_trajectories(write(tmp_path, "g.csv", "a,b\n0,0\n1,1\n"), dt=0.1)

    def test_missing_dt_for_positions_only(self, tmp_path):
        text = "x1,x2\n0,0\n1,1\n"
        with pytest.raises(UsageError, match="dt"):
            load_trajectories(write(tmp_path, "h.csv", text))

    def test_missing_file(self):
        with pytest.raises(UsageError, match="no such file"):
            load_trajectories("/nonexistent/q.csv")

    def test_default_attractor_mean_of_finals(self, tmp_path):
        text = "x1,x2,v1,v2\n0,0,1,0\n2,0,1,0\n\n0,0,0,1\n0,4,0,1\n"
        demo = load_trajectories(write(tmp_path, "i.csv", text))
        assert np.allclose(demo.attractor, [1.0, 2.0])


class TestJsonParsing:
    def test_single_trajectory(self, tmp_path):
        doc = {"positions": [[0, 0], [1, 1], [2, 2]], "dt": 0.1}
        demo = load_trajectories(write(tmp_path, "a.json", json.dumps(doc)))
        assert demo.n_samples == 3 and demo.dt == 0.1

    def test_multiple_trajectories_and_attractor(self, tmp_path):
        doc = {
            "positions": [[[0, 0], [1, 1]], [[5, 5], [6, 6]]],
            "velocities": [[[1, 1], [1, 1]], [[1, 1], [1, 1]]],
            "attractor": [9.0, 9.0],
        }
        demo = load_trajectories(write(tmp_path, "b.json", json.dumps(doc)))
        assert demo.boundaries == (0, 2)
        assert np.allclose(demo.attractor, [9.0, 9.0])

    def test_invalid_json_reports_position(self, tmp_path):
        with pytest.raises(ParseError):
            load_trajectories(write(tmp_path, "c.json", "{broken"))

    def test_missing_positions_field(self, tmp_path):
        with pytest.raises(ParseError, match="positions"):
            load_trajectories(write(tmp_path, "d.json", json.dumps({"velocities": []})))


class TestRoundTrip:
    def test_save_load_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        pos = rng.normal(0, 1, (20, 3))
        vel = rng.normal(0, 1, (20, 3))
        demo = Demonstration(pos, vel, (0, 8), attractor=np.zeros(3))
        path = str(tmp_path / "rt.csv")
        save_trajectories(path, demo)
        back = load_trajectories(path)
        assert np.array_equal(back.positions, pos)
        assert np.array_equal(back.velocities, vel)
        assert back.boundaries == (0, 8)
        # a second save produces identical bytes
        path2 = str(tmp_path / "rt2.csv")
        save_trajectories(path2, back)
        assert open(path, "rb").read() == open(path2, "rb").read()
