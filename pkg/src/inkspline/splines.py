"""Cardinal (normalized uniform) B-splines built from key-points.

All splines here live on a fixed integer knot grid ``[-p, ..., n]`` with unit
spacing, so every basis function is an integer shift of a single cardinal
basis ``N_k``.  Curves are specified by key-points (x, y, width) that are
expanded into control points by end-padding (open/clamped) or wrapping
(closed/periodic); the expansion is a fixed 0/1 linear map, which keeps the
whole key-point -> sample chain linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


class SplineError(ValueError):
    """Invalid spline construction or evaluation request."""


def cardinal_basis(k: int, u) -> np.ndarray | float:
    """Evaluate the cardinal B-spline basis N_k at u (scalar or array).

    N_k is the normalized uniform basis of order k (degree k-1) supported on
    [0, k), built by the Cox-de Boor recursion on integer knots.  N_1 is the
    half-open indicator of [0, 1).
    """
    if k < 1:
        raise SplineError(f"basis order must be >= 1, got {k}")
    scalar = np.isscalar(u)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = _cardinal(k, u)
    return float(out[0]) if scalar else out


def _cardinal(k: int, u: np.ndarray) -> np.ndarray:
    if k == 1:
        return np.where((u >= 0.0) & (u < 1.0), 1.0, 0.0)
    # N_k(u) = (u * N_{k-1}(u) + (k - u) * N_{k-1}(u - 1)) / (k - 1)
    return (u * _cardinal(k - 1, u) + (k - u) * _cardinal(k - 1, u - 1.0)) / (k - 1)


def cardinal_basis_deriv(k: int, d: int, u) -> np.ndarray | float:
    """d-th derivative of N_k: alternating-binomial combination of N_{k-d}."""
    if k < 1:
        raise SplineError(f"basis order must be >= 1, got {k}")
    if d < 0 or d >= k:
        raise SplineError(f"derivative order must be in [0, {k - 1}], got {d}")
    scalar = np.isscalar(u)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    coef = 1.0
    for a in range(d + 1):
        out += coef * _cardinal(k - d, u - a)
        coef *= -(d - a) / (a + 1.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class KeyPointPath:
    """User-facing curve spec: key-points in (x, y, width) plus topology.

    keypoints: (M, 3) array of (x px, y px, stroke radius px)
    closed: periodic curve if True, clamped otherwise
    degree: polynomial degree p >= 1 (order k = p + 1)
    multiplicities: per-key-point repeat count >= 1; a repeat count r puts the
        key-point in r consecutive control slots, sharpening the curve there
    """

    keypoints: np.ndarray
    closed: bool = False
    degree: int = 5
    multiplicities: np.ndarray | None = None

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=float)
        if kp.ndim != 2 or kp.shape[1] != 3:
            raise SplineError(f"keypoints must be (M, 3), got {kp.shape}")
        if self.degree < 1:
            raise SplineError(f"degree must be >= 1, got {self.degree}")
        if self.multiplicities is None:
            mult = np.ones(len(kp), dtype=int)
        else:
            mult = np.asarray(self.multiplicities, dtype=int)
            if mult.shape != (len(kp),):
                raise SplineError("multiplicities must have one entry per key-point")
            if np.any(mult < 1):
                raise SplineError("multiplicities must be >= 1")
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def order(self) -> int:
        return self.degree + 1


@dataclass(frozen=True)
class SplineCurve:
    """Cardinal B-spline with fixed integer knots [-p, ..., n].

    control_points: (n, D) array; D is 3 for (x, y, w) curves but evaluation
        works for any D.  The knot vector is implied: t_i = i - p, and the
        evaluation domain is [0, n - p].
    control_to_keypoint / expanded_to_keypoint: index maps recording how
        build_spline derived the control sequence from key-points (None for
        curves not built from a KeyPointPath).  They make the padding adjoint
        a scatter-add.
    """

    control_points: np.ndarray
    degree: int
    closed: bool = False
    control_to_keypoint: np.ndarray | None = field(default=None, compare=False)
    expanded_to_keypoint: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.asarray(self.control_points, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if self.degree < 1:
            raise SplineError(f"degree must be >= 1, got {self.degree}")
        if len(c) < self.order:
            raise SplineError(
                f"need at least k={self.order} control points, got {len(c)}"
            )
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "control_points", c)

    @property
    def order(self) -> int:
        return self.degree + 1

    @property
    def n(self) -> int:
        return len(self.control_points)

    @property
    def knots(self) -> np.ndarray:
        return np.arange(-self.degree, self.n + 1, dtype=float)

    @property
    def domain(self) -> tuple[float, float]:
        return 0.0, float(self.n - self.degree)

    @property
    def spans(self) -> int:
        """Number of unit polynomial spans in the evaluation domain."""
        return self.n - self.degree

    @property
    def n_unique(self) -> int:
        """Control count before the closed wrap copies (n for open curves)."""
        return self.n - (self.order - 1 if self.closed else 0)


def expand_keypoints(path: KeyPointPath) -> tuple[np.ndarray, np.ndarray]:
    """Repeat key-points per multiplicity; returns (expanded, index map)."""
    idx = np.repeat(np.arange(len(path.keypoints)), path.multiplicities)
    return path.keypoints[idx], idx


def build_spline(path: KeyPointPath) -> SplineCurve:
    """Expand a key-point path into a clamped or periodic cardinal B-spline.

    Open: the first and last expanded key-points are padded so that the first
    k and last k control entries are identical, giving a curve that starts and
    ends at rest on the key-point.  Closed: the first k-1 expanded key-points
    are appended, making the curve periodic over the expanded sequence.
    """
    expanded, exp_idx = expand_keypoints(path)
    m = len(expanded)
    if m < 2:
        raise SplineError(
            f"under-determined: need >= 2 expanded key-points, got {m}"
        )
    p = path.degree
    k = p + 1
    if path.closed:
        ctrl_idx = np.concatenate([np.arange(m), np.arange(k - 1) % m])
    else:
        ctrl_idx = np.concatenate(
            [np.zeros(k - 1, dtype=int), np.arange(m), np.full(k - 1, m - 1)]
        )
    return SplineCurve(
        control_points=expanded[ctrl_idx],
        degree=p,
        closed=path.closed,
        control_to_keypoint=exp_idx[ctrl_idx],
        expanded_to_keypoint=exp_idx,
    )


def keypoint_adjoint(spline: SplineCurve, control_grad: np.ndarray) -> np.ndarray:
    """Scatter a gradient w.r.t. control points back onto the key-points."""
    if spline.control_to_keypoint is None:
        raise SplineError("spline was not built from a KeyPointPath")
    idx = spline.control_to_keypoint
    out = np.zeros((idx.max() + 1,) + control_grad.shape[1:])
    np.add.at(out, idx, control_grad)
    return out


def _basis_weights(spline: SplineCurve, u: np.ndarray, side: str = "right"):
    """Active control indices and basis weights at parameters u.

    Returns (idx, w) with idx (len(u), k) and w (len(u), k) such that
    eval(u) = sum_a w[:, a] * c[idx[:, a]].  side='left' takes the left
    one-sided limit at knot values (identical for orders >= 2 except at the
    domain ends, where it selects the adjacent span).
    """
    p = spline.degree
    k = spline.order
    lo, hi = spline.domain
    if np.any(u < lo - 1e-9) or np.any(u > hi + 1e-9):
        raise SplineError(f"parameter outside evaluation domain [{lo}, {hi}]")
    if side == "left":
        span = np.ceil(u).astype(int) - 1
    else:
        span = np.floor(u).astype(int)
    span = np.clip(span, 0, spline.n - p - 1)
    idx = span[:, None] + np.arange(k)[None, :]
    # basis i contributes N_k(u - t_i) with t_i = i - p
    w = _cardinal(k, u[:, None] - idx + p)
    return idx, w


def eval_spline(spline: SplineCurve, u, side: str = "right") -> np.ndarray:
    """Evaluate the curve at parameter(s) u in the domain [0, n - p]."""
    scalar = np.isscalar(u)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    idx, w = _basis_weights(spline, u, side=side)
    out = np.einsum("sa,sad->sd", w, spline.control_points[idx])
    return out[0] if scalar else out


def derivative_spline(spline: SplineCurve, d: int = 1) -> SplineCurve:
    """d-th derivative as a spline of order k - d.

    On the unit knot grid the derivative control points are plain d-th order
    forward differences of the originals (no knot-span denominators).
    """
    if d < 1 or d > spline.degree:
        raise SplineError(
            f"derivative order must be in [1, {spline.degree}], got {d}"
        )
    dc = np.diff(np.asarray(spline.control_points), d, axis=0)
    return SplineCurve(control_points=dc, degree=spline.degree - d, closed=spline.closed)


@dataclass(frozen=True)
class SamplingMap:
    """Fixed linear map from control points to S curve samples.

    matrix is the per-coordinate (S, n) sparse operator; the full map on
    flattened (x, y, w) control points is matrix kron I_3.  It depends only on
    (degree, n, S) and is precomputed once per path, so image-space gradients
    reach the control points through its transpose.
    """

    matrix: sparse.csr_matrix
    u: np.ndarray

    @property
    def sample_count(self) -> int:
        return self.matrix.shape[0]

    def apply(self, control_points: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(control_points)

    def adjoint(self, sample_grad: np.ndarray) -> np.ndarray:
        return self.matrix.T @ np.asarray(sample_grad)


def sampling_map(spline: SplineCurve, samples: int) -> SamplingMap:
    """Uniform-in-parameter sampling operator with `samples` rows."""
    if samples < 2:
        raise SplineError(f"need at least 2 samples, got {samples}")
    lo, hi = spline.domain
    u = np.linspace(lo, hi, samples)
    idx, w = _basis_weights(spline, u)
    rows = np.repeat(np.arange(samples), spline.order)
    mat = sparse.csr_matrix(
        (w.ravel(), (rows, idx.ravel())), shape=(samples, spline.n)
    )
    mat.sum_duplicates()
    return SamplingMap(matrix=mat, u=u)
