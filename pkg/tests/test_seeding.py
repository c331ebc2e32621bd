"""Tests for stippling, TSP paths, and closed-area seeding."""

import itertools

import numpy as np
import pytest

from inkspline.seeding import (
    SeedingError,
    area_seeds,
    density_from_image,
    expand_multiplicity,
    tsp_path,
    voronoi_stipple,
)
from inkspline.splines import KeyPointPath, build_spline


class TestVoronoiStipple:
    def test_single_point_uniform_density_centers(self):
        density = np.ones((20, 30))
        pts = voronoi_stipple(density, 1, np.random.default_rng(0), iterations=30)
        assert np.allclose(pts[0], [15.0, 10.0], atol=0.5)

    def test_density_support_respected(self):
        density = np.zeros((16, 32))
        density[:, :16] = 1.0
        pts = voronoi_stipple(density, 6, np.random.default_rng(1), iterations=30)
        assert np.all(pts[:, 0] <= 16.5)

    def test_darkness_attracts_points(self):
        # left-to-right brightness ramp: stipple density = darkness
        w, h = 64, 32
        img = np.tile(np.linspace(0.0, 1.0, w), (h, 1))
        density = density_from_image(img)  # dark (left) = heavy
        pts = voronoi_stipple(density, 80, np.random.default_rng(2), iterations=25)
        # darkest quartile (leftmost) holds more than its 25% area share
        frac = np.mean(pts[:, 0] < w / 4)
        assert frac > 0.30

    def test_deterministic(self):
        density = np.ones((12, 12))
        a = voronoi_stipple(density, 5, np.random.default_rng(7))
        b = voronoi_stipple(density, 5, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_stays_in_canvas(self):
        rng = np.random.default_rng(3)
        density = rng.uniform(size=(10, 14))
        pts = voronoi_stipple(density, 20, rng, iterations=40)
        assert np.all(pts[:, 0] >= 0) and np.all(pts[:, 0] <= 14)
        assert np.all(pts[:, 1] >= 0) and np.all(pts[:, 1] <= 10)

    def test_zero_mass_rejected(self):
        with pytest.raises(SeedingError):
            voronoi_stipple(np.zeros((8, 8)), 3, np.random.default_rng(0))


class TestTspPath:
    def brute_force_open(self, pts):
        n = len(pts)
        ranks = np.lexsort((pts[:, 1], pts[:, 0]))
        start, end = ranks[0], ranks[-1]
        middle = [i for i in range(n) if i not in (start, end)]
        best = None
        for perm in itertools.permutations(middle):
            order = [start, *perm, end]
            length = np.sum(
                np.linalg.norm(np.diff(pts[np.asarray(order)], axis=0), axis=1)
            )
            if best is None or length < best:
                best = length
        return best

    def test_three_points_optimal(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            pts = rng.uniform(0, 10, (3, 2))
            order = tsp_path(pts, open_path=True)
            got = np.sum(np.linalg.norm(np.diff(pts[order], axis=0), axis=1))
            assert got == pytest.approx(self.brute_force_open(pts), rel=1e-9)

    def test_small_sets_match_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            pts = rng.uniform(0, 10, (7, 2))
            order = tsp_path(pts, open_path=True)
            got = np.sum(np.linalg.norm(np.diff(pts[order], axis=0), axis=1))
            # 2-opt is a heuristic that can stall in local optima; allow slack
            assert got <= self.brute_force_open(pts) * 1.15 + 1e-9

    def test_collinear_monotone(self):
        xs = np.array([4.0, 1.0, 3.0, 0.0, 2.0])
        pts = np.column_stack([xs, np.zeros(5)])
        order = tsp_path(pts, open_path=True)
        assert np.all(np.diff(pts[order][:, 0]) > 0)

    def test_endpoints_convention(self):
        rng = np.random.default_rng(12)
        pts = rng.uniform(0, 10, (9, 2))
        order = tsp_path(pts, open_path=True)
        ranks = np.lexsort((pts[:, 1], pts[:, 0]))
        assert order[0] == ranks[0]  # left-topmost
        assert order[-1] == ranks[-1]  # bottom-rightmost

    def test_permutation(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(0, 5, (12, 2))
        for open_path in (True, False):
            order = tsp_path(pts, open_path=open_path)
            assert sorted(order.tolist()) == list(range(12))

    def test_two_opt_no_worse_than_nearest_neighbor(self):
        from inkspline.seeding import _nearest_neighbor_order, _tour_length

        rng = np.random.default_rng(14)
        pts = rng.uniform(0, 20, (25, 2))
        order = tsp_path(pts, open_path=False)
        nn = _nearest_neighbor_order(pts, 0)
        assert _tour_length(pts, np.asarray(order), True) <= _tour_length(
            pts, np.asarray(nn), True
        ) + 1e-9

    def test_duplicate_points_allowed(self):
        pts = np.array([[1.0, 1.0], [1.0, 1.0], [4.0, 4.0]])
        order = tsp_path(pts, open_path=True)
        assert sorted(order.tolist()) == [0, 1, 2]


class TestAreaSeeds:
    def test_single_area_covers_canvas(self):
        sal = np.ones((12, 16))
        paths, ranks = area_seeds(sal, 1, np.random.default_rng(0))
        assert len(paths) == 1
        kp = paths[0].keypoints
        assert paths[0].closed
        assert np.allclose(kp[:, 0].min(), 0) and np.allclose(kp[:, 0].max(), 16)
        assert np.allclose(kp[:, 1].min(), 0) and np.allclose(kp[:, 1].max(), 12)

    def test_cells_tile_canvas(self):
        from shapely.geometry import Polygon

        sal = np.ones((32, 32))
        paths, _ = area_seeds(sal, 6, np.random.default_rng(1))
        total = sum(
            Polygon(p.keypoints[:, :2]).area for p in paths
        )
        assert total == pytest.approx(32 * 32, rel=0.01)

    def test_salient_blob_ranks_last(self):
        sal = np.zeros((32, 32))
        sal[4:12, 4:12] = 1.0  # bright blob top-left
        rng = np.random.default_rng(3)
        paths, ranks = area_seeds(sal + 0.01, 4, rng)
        assert all(b >= a for a, b in zip(ranks, ranks[1:]))
        # the last (most salient) cell must cover the blob center
        from shapely.geometry import Point, Polygon

        last = Polygon(paths[-1].keypoints[:, :2])
        assert last.buffer(1.0).contains(Point(8, 8))

    def test_paths_build_valid_splines(self):
        sal = np.ones((24, 24))
        paths, _ = area_seeds(sal, 5, np.random.default_rng(4))
        for p in paths:
            sp = build_spline(p)
            assert sp.closed


class TestExpandMultiplicity:
    def test_identity(self):
        kp = np.array([[0.0, 0, 1], [1, 1, 1], [2, 0, 1]])
        path = KeyPointPath(kp, degree=3)
        out = expand_multiplicity(path, 1)
        assert np.array_equal(out.multiplicities, [1, 1, 1])

    def test_count(self):
        kp = np.array([[0.0, 0, 1], [1, 1, 1], [2, 0, 1], [3, 1, 1]])
        out = expand_multiplicity(KeyPointPath(kp, degree=5), 3)
        from inkspline.splines import expand_keypoints

        expanded, _ = expand_keypoints(out)
        assert len(expanded) == 12

    def test_invalid(self):
        kp = np.array([[0.0, 0, 1], [1, 1, 1]])
        with pytest.raises(SeedingError):
            expand_multiplicity(KeyPointPath(kp, degree=3), 0)
