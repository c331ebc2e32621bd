"""Tests for the cardinal B-spline core."""

import numpy as np
import pytest

from inkspline.splines import (
    KeyPointPath,
    SplineError,
    build_spline,
    cardinal_basis,
    cardinal_basis_deriv,
    derivative_spline,
    eval_spline,
    expand_keypoints,
    keypoint_adjoint,
    sampling_map,
)


def brute_force_basis(k, u):
    """Independent Cox-de Boor oracle on explicit integer knots 0..k."""
    knots = list(range(k + 1))

    def b(i, kk, x):
        if kk == 1:
            return 1.0 if knots[i] <= x < knots[i + 1] else 0.0
        left = (x - knots[i]) / (kk - 1) * b(i, kk - 1, x)
        right = (knots[i + kk] - x) / (kk - 1) * b(i + 1, kk - 1, x) if i + 1 + kk - 1 <= k else 0.0
        return left + right

    # only basis 0 exists on this local knot span
    def b_ext(i, kk, x):
        # extend with virtual uniform knots so the recursion never indexes out
        def t(j):
            return float(j)

        if kk == 1:
            return 1.0 if t(i) <= x < t(i + 1) else 0.0
        return (x - t(i)) / (kk - 1) * b_ext(i, kk - 1, x) + (t(i + kk) - x) / (
            kk - 1
        ) * b_ext(i + 1, kk - 1, x)

    return b_ext(0, k, u)


def random_keypoints(rng, m, scale=10.0):
    return np.column_stack(
        [rng.uniform(0, scale, m), rng.uniform(0, scale, m), rng.uniform(0.5, 2.0, m)]
    )


class TestCardinalBasis:
    def test_order_one_indicator(self):
        assert cardinal_basis(1, 0.5) == 1.0
        assert cardinal_basis(1, -0.1) == 0.0
        assert cardinal_basis(1, 1.0) == 0.0

    def test_triangle_peak(self):
        assert cardinal_basis(2, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_cubic_integer_values(self):
        # brute-force Cox-de Boor oracle at the integer grid
        for u, want in [(1.0, 1 / 6), (2.0, 2 / 3), (3.0, 1 / 6)]:
            assert cardinal_basis(4, u) == pytest.approx(want, abs=1e-14)
            assert brute_force_basis(4, u) == pytest.approx(want, abs=1e-14)

    @pytest.mark.parametrize("k", [2, 3, 4, 6])
    def test_matches_brute_force(self, k):
        rng = np.random.default_rng(0)
        for u in rng.uniform(-1, k + 1, 50):
            assert cardinal_basis(k, u) == pytest.approx(
                brute_force_basis(k, u), abs=1e-12
            )

    @pytest.mark.parametrize("k", [1, 2, 4, 6])
    def test_partition_of_unity(self, k):
        rng = np.random.default_rng(1)
        u = rng.uniform(0, k, 10_000)
        total = sum(cardinal_basis(k, u - j) for j in range(-k, k + 1))
        assert np.all(np.abs(total - 1.0) < 1e-12)

    def test_nonnegative_and_support(self):
        rng = np.random.default_rng(2)
        for k in (2, 5, 6):
            u = rng.uniform(-2, k + 2, 500)
            vals = cardinal_basis(k, u)
            assert np.all(vals >= 0)
            assert np.all(vals[(u < 0) | (u >= k)] == 0)

    def test_invalid_order(self):
        with pytest.raises(SplineError):
            cardinal_basis(0, 0.5)

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(3)
        h = 1e-6
        for k, d in [(4, 1), (6, 2), (6, 3)]:
            u = rng.uniform(0.1, k - 0.1, 40)
            # keep away from knots where high derivatives may kink
            u = u[np.abs(u - np.round(u)) > 1e-2]
            lower = cardinal_basis_deriv(k, d - 1, u)

            def f(x):
                return cardinal_basis_deriv(k, d - 1, x)

            fd = (f(u + h) - f(u - h)) / (2 * h)
            got = cardinal_basis_deriv(k, d, u)
            assert np.max(np.abs(got - fd)) < 1e-5 * max(1.0, np.max(np.abs(lower)))


class TestBuildSpline:
    def test_open_padding_counts(self):
        path = KeyPointPath(np.array([[0.0, 0, 1], [4, 2, 1]]), degree=3)
        sp = build_spline(path)
        assert sp.n == 2 + 2 * 3
        assert np.array_equal(sp.knots, np.arange(-3, 9, dtype=float))
        # first k and last k control entries identical
        assert np.all(sp.control_points[:4] == sp.control_points[0])
        assert np.all(sp.control_points[-4:] == sp.control_points[-1])

    def test_closed_wrap_counts(self):
        rng = np.random.default_rng(4)
        path = KeyPointPath(random_keypoints(rng, 5), closed=True, degree=5)
        sp = build_spline(path)
        assert sp.n == 5 + 5
        assert np.array_equal(sp.control_points[-5:], sp.control_points[:5])

    def test_multiplicity_slots(self):
        kp = np.array([[0.0, 0, 1], [1, 0, 1], [2, 0, 1]])
        path = KeyPointPath(kp, degree=5, multiplicities=[1, 3, 1])
        expanded, idx = expand_keypoints(path)
        assert len(expanded) == 5
        assert np.array_equal(idx, [0, 1, 1, 1, 2])
        sp = build_spline(path)
        # q2 occupies 3 consecutive control slots inside the padded sequence
        inner = sp.control_points[5:-5]
        assert np.all(inner[1] == kp[1]) and np.all(inner[2] == kp[1]) and np.all(
            inner[3] == kp[1]
        )

    def test_under_determined(self):
        with pytest.raises(SplineError):
            build_spline(KeyPointPath(np.array([[0.0, 0, 1]]), degree=3))

    def test_keypoint_adjoint_matches_dense(self):
        rng = np.random.default_rng(5)
        path = KeyPointPath(
            random_keypoints(rng, 6), degree=3, multiplicities=[1, 2, 1, 1, 3, 1]
        )
        sp = build_spline(path)
        g = rng.normal(size=sp.control_points.shape)
        got = keypoint_adjoint(sp, g)
        # dense oracle: build the 0/1 expansion matrix explicitly
        dense = np.zeros((sp.n, 6))
        dense[np.arange(sp.n), sp.control_to_keypoint] = 1.0
        assert np.allclose(got, dense.T @ g, atol=1e-14)


class TestEval:
    def test_constant_control_points(self):
        c = np.tile([2.0, -1.0, 0.5], (9, 1))
        sp = build_spline(
            KeyPointPath(np.tile([2.0, -1.0, 0.5], (3, 1)), degree=4)
        )
        u = np.linspace(*sp.domain, 37)
        assert np.allclose(eval_spline(sp, u), [2.0, -1.0, 0.5], atol=1e-13)
        del c

    def test_open_starts_at_first_keypoint(self):
        rng = np.random.default_rng(6)
        kp = random_keypoints(rng, 5)
        sp = build_spline(KeyPointPath(kp, degree=5))
        assert np.allclose(eval_spline(sp, 0.0), kp[0], atol=1e-12)
        assert np.allclose(eval_spline(sp, sp.domain[1]), kp[-1], atol=1e-12)

    def test_closed_seam(self):
        rng = np.random.default_rng(7)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 7), closed=True, degree=5))
        lo, hi = sp.domain
        assert np.allclose(eval_spline(sp, lo), eval_spline(sp, hi), atol=1e-9)

    def test_domain_error(self):
        rng = np.random.default_rng(8)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 4), degree=3))
        with pytest.raises(SplineError):
            eval_spline(sp, sp.domain[1] + 0.5)


class TestDerivative:
    def test_constant_gives_zero(self):
        sp = build_spline(KeyPointPath(np.tile([1.0, 2.0, 3.0], (4, 1)), degree=3))
        d1 = derivative_spline(sp, 1)
        assert np.allclose(d1.control_points, 0.0)

    def test_collinear_second_derivative_zero(self):
        # equally spaced collinear control points: linear parametrization
        from inkspline.splines import SplineCurve

        t = np.arange(8.0)
        c = np.column_stack([t, 2 * t, 0 * t])
        sp = SplineCurve(c, degree=4)
        d2 = derivative_spline(sp, 2)
        u = np.linspace(*d2.domain, 25)
        assert np.allclose(eval_spline(d2, u), 0.0, atol=1e-12)

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(9)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 8), degree=5))
        d1 = derivative_spline(sp, 1)
        h = 1e-6
        for u0 in rng.uniform(0.5, sp.domain[1] - 0.5, 20):
            fd = (eval_spline(sp, u0 + h) - eval_spline(sp, u0 - h)) / (2 * h)
            got = eval_spline(d1, u0)
            assert np.max(np.abs(got - fd)) < 1e-6 * max(1.0, np.max(np.abs(fd)))

    def test_order_error(self):
        rng = np.random.default_rng(10)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 4), degree=3))
        with pytest.raises(SplineError):
            derivative_spline(sp, 4)


class TestSamplingMap:
    def test_constant_reproduced(self):
        sp = build_spline(KeyPointPath(np.tile([3.0, 1.0, 2.0], (4, 1)), degree=3))
        sm = sampling_map(sp, 17)
        out = sm.apply(sp.control_points)
        assert np.allclose(out, [3.0, 1.0, 2.0], atol=1e-13)

    def test_matches_direct_eval(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            m = rng.integers(3, 9)
            p = int(rng.choice([2, 3, 5]))
            closed = bool(rng.integers(0, 2))
            sp = build_spline(
                KeyPointPath(random_keypoints(rng, m), degree=p, closed=closed)
            )
            sm = sampling_map(sp, 33)
            direct = eval_spline(sp, sm.u)
            worst = max(worst, np.max(np.abs(sm.apply(sp.control_points) - direct)))
        assert worst < 1e-12

    def test_rows_sum_to_one_and_sparsity(self):
        rng = np.random.default_rng(12)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 9), degree=5))
        sm = sampling_map(sp, 41)
        rows = np.asarray(sm.matrix.sum(axis=1)).ravel()
        assert np.max(np.abs(rows - 1.0)) < 1e-12
        nnz_per_row = np.diff(sm.matrix.indptr)
        assert np.max(nnz_per_row) <= sp.order

    def test_adjoint_matches_finite_difference(self):
        rng = np.random.default_rng(13)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 6), degree=3))
        sm = sampling_map(sp, 21)
        g = rng.normal(size=(sm.sample_count, 3))
        adj = sm.adjoint(g)
        c0 = np.asarray(sp.control_points).copy()
        h = 0.5  # the map is linear, so central differences are exact at any step

        def scalar(c):
            return float(np.sum(g * (sm.matrix @ c)))

        for idx in [(0, 0), (3, 1), (5, 2), (8, 0)]:
            cp = c0.copy()
            cp[idx] += h
            cm = c0.copy()
            cm[idx] -= h
            fd = (scalar(cp) - scalar(cm)) / (2 * h)
            assert adj[idx] == pytest.approx(fd, rel=1e-9, abs=1e-9)

    def test_too_few_samples(self):
        rng = np.random.default_rng(14)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 4), degree=3))
        with pytest.raises(SplineError):
            sampling_map(sp, 1)


class TestContinuityProperties:
    @pytest.mark.parametrize("degree,closed", [(3, False), (5, False), (5, True)])
    def test_ck2_continuity_at_interior_knots(self, degree, closed):
        rng = np.random.default_rng(15)
        sp = build_spline(
            KeyPointPath(random_keypoints(rng, 8), degree=degree, closed=closed)
        )
        lo, hi = sp.domain
        for d in range(0, degree):  # orders 0 .. k-2
            cur = sp if d == 0 else derivative_spline(sp, d)
            for knot in np.arange(np.ceil(lo) + 1, hi):
                left = eval_spline(cur, knot, side="left")
                right = eval_spline(cur, knot, side="right")
                assert np.max(np.abs(left - right)) < 1e-9

    def test_closed_seam_derivatives(self):
        rng = np.random.default_rng(16)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 9), closed=True, degree=5))
        lo, hi = sp.domain
        for d in range(1, sp.degree):
            ds = derivative_spline(sp, d)
            a = eval_spline(ds, lo, side="right")
            b = eval_spline(ds, hi, side="left")
            assert np.max(np.abs(a - b)) < 1e-9

    def test_open_curve_rest(self):
        rng = np.random.default_rng(17)
        sp = build_spline(KeyPointPath(random_keypoints(rng, 7), degree=5))
        lo, hi = sp.domain
        for d in range(1, sp.degree):  # 1 .. k-2
            ds = derivative_spline(sp, d)
            assert np.max(np.abs(eval_spline(ds, lo))) < 1e-9
            assert np.max(np.abs(eval_spline(ds, hi, side="left"))) < 1e-9

    def test_multiplicity_sharpens_corner(self):
        # geometric corner sharpness (tangent-direction change across the
        # repeated key-point) must grow monotonically with the repeat count
        kp = np.array([[0.0, 0, 1], [5, 0, 1], [10, 5, 1], [15, 5, 1]])
        angles = []
        for r in (1, 2, 3, 4):
            path = KeyPointPath(kp, degree=5, multiplicities=[1, 1, r, 1])
            sp = build_spline(path)
            d1 = derivative_spline(sp, 1)
            # parameter of the repeated key-point's central knot
            u0 = 0.5 * sum(sp.domain)
            lo, hi = d1.domain
            us = np.linspace(max(lo, u0 - 1.5), min(hi, u0 + 1.5), 101)
            vel = eval_spline(d1, us)[:, :2]
            ang = np.unwrap(np.arctan2(vel[:, 1], vel[:, 0]))
            angles.append(np.ptp(ang))
        assert all(b > a - 1e-9 for a, b in zip(angles, angles[1:]))
        assert angles[-1] > angles[0] + 1e-3
