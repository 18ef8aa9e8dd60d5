"""Unit-sphere geometry: maps, means, dispersion."""

import numpy as np
import pytest

from dsmix.errors import DegenerateInputError, UsageError
from dsmix.sphere import (
    TangentVector,
    UnitVector,
    directional_variance,
    exp_map,
    frechet_mean,
    geodesic_distance,
    log_map,
    random_unit,
    riemannian_covariance,
)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])


def frechet_objective(candidates, points, weights=None):
    """Independent objective evaluation: weighted sum of squared arc lengths."""
    dots = np.clip(candidates @ points.T, -1.0, 1.0)
    d2 = np.arccos(dots) ** 2
    w = np.full(points.shape[0], 1.0 / points.shape[0]) if weights is None else weights / np.sum(weights)
    return d2 @ w


def grid_mean_s1(points, n_grid=2_000_000):
    theta = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
    cand = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return cand[np.argmin(frechet_objective(cand, points))]


def rejection_grid_mean_s2(points, n_total=1_000_000, seed=1234):
    """Two-stage randomized grid: global rejection-sampled cover, then a dense
    refinement cloud around the coarse argmin."""
    rng = np.random.default_rng(seed)
    kept = []
    need = n_total // 5
    while sum(len(k) for k in kept) < need:
        cube = rng.uniform(-1.0, 1.0, (2 * need, 3))
        norms = np.linalg.norm(cube, axis=1)
        ok = (norms > 0.2) & (norms <= 1.0)
        kept.append(cube[ok] / norms[ok, None])
    coarse = np.vstack(kept)[:need]
    center = coarse[np.argmin(frechet_objective(coarse, points))]
    local = center + 0.02 * rng.standard_normal((n_total - need, 3))
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    cand = np.vstack([coarse, local])
    return cand[np.argmin(frechet_objective(cand, points))]


class TestGeodesicDistance:
    def test_identical_points(self):
        assert geodesic_distance(E1, E1) == 0.0

    def test_orthogonal(self):
        assert geodesic_distance(E1, E2) == pytest.approx(np.pi / 2, abs=1e-15)

    def test_antipodal(self):
        assert geodesic_distance(E1, -E1) == pytest.approx(np.pi, abs=1e-15)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(0)
        P, Q = random_unit(rng, 50, 4), random_unit(rng, 50, 4)
        assert np.array_equal(geodesic_distance(P, Q), geodesic_distance(Q, P))

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        P, Q, R = (random_unit(rng, 200, 3) for _ in range(3))
        lhs = geodesic_distance(P, R)
        rhs = geodesic_distance(P, Q) + geodesic_distance(Q, R)
        assert np.all(lhs <= rhs + 1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            geodesic_distance(np.array([1.0, 0.0]), E1)


class TestLogExpMaps:
    def test_log_at_self_is_zero(self):
        assert np.allclose(log_map(E1, E1), 0.0)

    def test_log_e1_to_e2(self):
        assert np.allclose(log_map(E1, E2), (np.pi / 2) * E2, atol=1e-15)

    def test_log_norm_equals_distance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p, q = random_unit(rng, 2, 5)
            if p @ q <= -1 + 1e-6:
                continue
            assert np.linalg.norm(log_map(p, q)) == pytest.approx(geodesic_distance(p, q), abs=1e-9)

    def test_antipodal_raises(self):
        with pytest.raises(DegenerateInputError):
            log_map(E1, -E1)

    def test_exp_of_zero(self):
        assert np.array_equal(exp_map(E1, np.zeros(3)), E1)

    def test_exp_inverts_log_basic(self):
        assert np.allclose(exp_map(E1, (np.pi / 2) * E2), E2, atol=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 6])
    def test_round_trip_random_pairs(self, d):
        rng = np.random.default_rng(3 + d)
        count = 0
        while count < 1000:
            p, q = random_unit(rng, 2, d)
            if p @ q <= -1 + 1e-6:
                continue
            back = exp_map(p, log_map(p, q))
            assert np.linalg.norm(back - q) <= 1e-9
            count += 1

    def test_tangent_vector_orthogonality(self):
        rng = np.random.default_rng(4)
        p, q = random_unit(rng, 2, 4)
        tv = TangentVector(log_map(p, q), UnitVector(p))
        assert tv.norm == pytest.approx(geodesic_distance(p, q), abs=1e-12)

    def test_unit_vector_rejects_bad_norm(self):
        with pytest.raises(UsageError):
            UnitVector(np.array([1.0, 1.0]))
        with pytest.raises(UsageError):
            TangentVector(E1, UnitVector(E1))


class TestFrechetMean:
    def test_single_point(self):
        q = np.array([0.6, 0.8])
        assert np.allclose(frechet_mean([q]), q, atol=1e-12)

    def test_two_point_midpoint_matches_grid(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        mean = frechet_mean(pts)
        expected = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert np.allclose(mean, expected, atol=1e-9)
        oracle = grid_mean_s1(pts, n_grid=400_000)
        assert geodesic_distance(mean, oracle) <= 1e-3

    def test_s1_cluster_matches_grid(self):
        rng = np.random.default_rng(5)
        theta = 0.7 + rng.normal(0.0, 0.3, 40)
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        mean = frechet_mean(pts)
        assert geodesic_distance(mean, grid_mean_s1(pts)) <= 1e-3

    def test_s2_cluster_matches_rejection_grid(self):
        rng = np.random.default_rng(6)
        pts = np.array([0.0, 0.0, 1.0]) + 0.25 * rng.standard_normal((50, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        mean = frechet_mean(pts)
        assert geodesic_distance(mean, rejection_grid_mean_s2(pts)) <= 1e-3

    def test_weighted_mean(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        mean = frechet_mean(pts, weights=np.array([3.0, 1.0]))
        theta = np.linspace(0.0, np.pi / 2, 1_000_000)
        cand = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        oracle = cand[np.argmin(frechet_objective(cand, pts, np.array([3.0, 1.0])))]
        assert geodesic_distance(mean, oracle) <= 1e-3

    def test_empty_raises(self):
        with pytest.raises(UsageError):
            frechet_mean([])

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(7)
        pts = random_unit(rng, 1, 3) + 0.2 * rng.standard_normal((30, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        raw, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        R = raw * np.sign(np.linalg.det(raw))
        assert geodesic_distance(frechet_mean(pts @ R.T), R @ frechet_mean(pts)) <= 1e-6

    def test_return_info(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0]])
        _, info = frechet_mean(pts, return_info=True)
        assert info["converged"] and info["iterations"] >= 1

    def test_mixed_antipodal_data_does_not_crash(self):
        pts = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
        mean = frechet_mean(pts)
        assert abs(np.linalg.norm(mean) - 1.0) <= 1e-9


class TestDispersion:
    def test_identical_directions_zero_variance(self):
        pts = np.tile(E1, (5, 1))
        assert directional_variance(pts, E1) == 0.0

    def test_two_symmetric_points(self):
        r = 0.3
        pts = np.array(
            [[np.cos(r), np.sin(r), 0.0], [np.cos(r), -np.sin(r), 0.0]]
        )
        assert directional_variance(pts, E1) == pytest.approx(2 * r * r, abs=1e-12)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(8)
        pts = E1 + 0.2 * rng.standard_normal((20, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        total = sum(np.arccos(np.clip(p @ E1, -1, 1)) ** 2 for p in pts)
        assert directional_variance(pts, E1) == pytest.approx(total / 19, rel=1e-12)

    def test_needs_two_points(self):
        with pytest.raises(UsageError):
            directional_variance([E1], E1)

    def test_covariance_identical_points_zero(self):
        pts = np.tile(E1, (4, 1))
        assert np.allclose(riemannian_covariance(pts, E1), 0.0)

    def test_covariance_two_symmetric_s1(self):
        r = 0.4
        pts = np.array([[np.cos(r), np.sin(r)], [np.cos(r), -np.sin(r)]])
        cov = riemannian_covariance(pts, np.array([1.0, 0.0]))
        assert np.linalg.matrix_rank(cov, tol=1e-12) == 1
        assert np.trace(cov) == pytest.approx(2 * r * r, abs=1e-12)

    def test_trace_equals_directional_variance(self):
        rng = np.random.default_rng(9)
        pts = random_unit(rng, 1, 4) + 0.3 * rng.standard_normal((25, 4))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        mean = frechet_mean(pts)
        assert np.trace(riemannian_covariance(pts, mean)) == pytest.approx(
            directional_variance(pts, mean), rel=1e-10
        )
