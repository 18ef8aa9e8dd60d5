"""Reproduction metrics against independent oracles."""

import numpy as np
import pytest

from dsmix.errors import UsageError
from dsmix.lpvds import LpvDsModel
from dsmix.metrics import dtwd, edot, rmse
from dsmix.mixture import Demonstration, MixtureComponent


def model_for(attractor, scale=1.0):
    comp = MixtureComponent(np.asarray(attractor, float), np.eye(2), weight=1.0, count=5)
    return LpvDsModel(A=(-scale * np.eye(2))[None], components=(comp,),
                      attractor=np.asarray(attractor, float))


def brute_force_dtw(a, b):
    """Exhaustive enumeration of all boundary-anchored monotone alignment paths."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    n, m = a.shape[0], b.shape[0]
    best = [np.inf]

    def walk(i, j, acc):
        acc = acc + np.linalg.norm(a[i] - b[j])
        if acc >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = acc
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


class TestRmse:
    def test_exact_model_zero(self):
        m = model_for([0.0, 0.0])
        pos = np.random.default_rng(0).normal(0, 1, (30, 2))
        demo = Demonstration(pos, -pos, attractor=np.zeros(2))
        assert rmse(m, demo) == pytest.approx(0.0, abs=1e-9)

    def test_zero_prediction_gives_mean_speed(self):
        # all positions at the attractor: the field vanishes there
        m = model_for([1.0, 1.0])
        pos = np.tile([1.0, 1.0], (10, 1))
        vel = np.random.default_rng(1).normal(0, 2, (10, 2))
        demo = Demonstration(pos, vel, attractor=np.array([1.0, 1.0]))
        assert rmse(m, demo) == pytest.approx(np.mean(np.linalg.norm(vel, axis=1)), rel=1e-12)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(2)
        m = model_for([0.5, -0.5], scale=1.7)
        pos = rng.normal(0, 1, (25, 2))
        vel = rng.normal(0, 1, (25, 2))
        demo = Demonstration(pos, vel, attractor=np.array([0.5, -0.5]))
        pred = -(pos - m.attractor) * 1.7
        expected = np.mean(np.linalg.norm(vel - pred, axis=1))
        assert rmse(m, demo) == pytest.approx(expected, rel=1e-12)


class TestEdot:
    def test_perfectly_aligned_any_magnitude(self):
        m = model_for([0.0, 0.0])
        pos = np.random.default_rng(3).normal(0, 1, (20, 2))
        demo = Demonstration(pos, -3.7 * pos, attractor=np.zeros(2))
        assert edot(m, demo) == pytest.approx(0.0, abs=1e-12)

    def test_antiparallel_gives_two(self):
        m = model_for([0.0, 0.0])
        pos = np.random.default_rng(4).normal(0, 1, (20, 2))
        demo = Demonstration(pos, 2.0 * pos, attractor=np.zeros(2))
        assert edot(m, demo) == pytest.approx(2.0, abs=1e-12)

    def test_orthogonal_gives_one(self):
        m = model_for([0.0, 0.0])
        pos = np.random.default_rng(5).normal(0, 1, (20, 2))
        rot90 = pos @ np.array([[0.0, 1.0], [-1.0, 0.0]])
        demo = Demonstration(pos, rot90, attractor=np.zeros(2))
        assert edot(m, demo) == pytest.approx(1.0, abs=1e-12)

    def test_scale_invariance_in_prediction(self):
        rng = np.random.default_rng(6)
        pos = rng.normal(0, 1, (30, 2))
        vel = rng.normal(0, 1, (30, 2))
        demo = Demonstration(pos, vel, attractor=np.zeros(2))
        assert edot(model_for([0, 0], 1.0), demo) == pytest.approx(
            edot(model_for([0, 0], 2.0), demo), abs=1e-12
        )

    def test_zero_norm_prediction_contributes_one(self):
        m = model_for([0.0, 0.0])
        pos = np.vstack([np.zeros((1, 2)), np.ones((1, 2))])  # first row at attractor
        vel = np.array([[1.0, 0.0], [-1.0, -1.0]])
        demo = Demonstration(pos, vel, attractor=np.zeros(2))
        assert edot(m, demo) == pytest.approx(0.5 * (1.0 + 0.0), abs=1e-12)

    def test_zero_reference_velocities_skipped(self):
        m = model_for([0.0, 0.0])
        pos = np.ones((3, 2))
        vel = np.array([[0.0, 0.0], [-1.0, -1.0], [-2.0, -2.0]])
        demo = Demonstration(pos, vel, attractor=np.zeros(2))
        assert edot(m, demo) == pytest.approx(0.0, abs=1e-12)


class TestDtwd:
    def test_identical_series_zero(self):
        a = np.random.default_rng(7).normal(0, 1, (12, 3))
        assert dtwd(a, a) == 0.0

    def test_single_cell(self):
        assert dtwd([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            n, m = rng.integers(1, 9, size=2)
            a = rng.normal(0, 1, (n, 2))
            b = rng.normal(0, 1, (m, 2))
            assert dtwd(a, b) == pytest.approx(brute_force_dtw(a, b), rel=1e-12)

    def test_length_ten_exact(self):
        rng = np.random.default_rng(9)
        a = rng.normal(0, 1, (10, 2))
        b = rng.normal(0, 1, (10, 2))
        assert dtwd(a, b) == pytest.approx(brute_force_dtw(a, b), rel=1e-12)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            a = rng.normal(0, 1, (rng.integers(2, 15), 2))
            b = rng.normal(0, 1, (rng.integers(2, 15), 2))
            assert dtwd(a, b) >= 0.0
            assert dtwd(a, b) == pytest.approx(dtwd(b, a), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            dtwd(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            dtwd(np.zeros((0, 2)), np.zeros((3, 2)))
