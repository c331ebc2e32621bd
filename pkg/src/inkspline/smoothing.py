"""Minimum-square-derivative smoothing costs for cardinal B-splines.

The cost of a curve x(u) with control vector c is

    (1/T) * integral over the domain of ||x^(d)(u)||^2  =  (1/T) c' Gbar c

with Gbar = G kron I_D.  G comes in two flavours: the exact Gramian of basis
derivative inner products (integrated over the evaluation domain, which for
open clamped splines is what the boundary-corrected Gramian computes), and
the penalized-spline approximation G = D_(d)' D_(d) built from order-d finite
differences of the control points.  For closed curves both operators act on
the unwrapped (periodic) control sequence and are circulant.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .splines import cardinal_basis_deriv


class SmoothingError(ValueError):
    """Invalid smoothing operator construction or application."""


@dataclass(frozen=True)
class GramOperator:
    """Precomputed smoothing matrix with its normalization span.

    matrix: (n, n) symmetric PSD array; banded with bandwidth < k in exact
        mode, circulant in closed mode.
    order: derivative order d of the penalized derivative.
    span: domain length T used to normalize the quadratic form.
    mode: "exact" or "pspline".
    closed: operator acts on a periodic control sequence.
    """

    matrix: np.ndarray
    order: int
    span: float
    mode: str
    closed: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _local_gram_block(k: int, d: int, quad_nodes: int | None = None) -> np.ndarray:
    """k x k integrals of N^(d) pair products over one unit knot interval.

    On any interval [a, a+1] the active bases are shifts a..a+p of N_k, and by
    uniformity the integrand depends only on the shift offsets, so a single
    block serves every interval.  Gauss-Legendre with k nodes is exact: the
    integrand is piecewise polynomial of degree <= 2(k-1-d) <= 2k-1.
    """
    q = quad_nodes or max(k, 2)
    nodes, weights = np.polynomial.legendre.leggauss(q)
    xi = 0.5 * (nodes + 1.0)  # map to (0, 1)
    w = 0.5 * weights
    # basis with local offset c takes arguments xi + c, c = 0..p
    vals = np.stack([cardinal_basis_deriv(k, d, xi + c) for c in range(k)])
    # offset of local basis li on the interval is p - li
    v = vals[::-1]
    return np.einsum("q,aq,bq->ab", w, v, v)


def gram_exact(k: int, d: int, n: int, closed: bool = False) -> GramOperator:
    """Exact derivative-energy Gramian for an order-k spline.

    Open mode integrates over the evaluation domain [0, n-k+1]; bases whose
    support leaves the domain simply participate in fewer intervals, which
    reproduces the clamped boundary corrections.  Closed mode accumulates the
    same local blocks with modular indexing over one period of n unwrapped
    control points, yielding a circulant matrix.
    """
    if d < 1 or d >= k:
        raise SmoothingError(f"derivative order must be in [1, {k - 1}], got {d}")
    p = k - 1
    block = _local_gram_block(k, d)
    if closed:
        if n < 2:
            raise SmoothingError(f"closed spline needs n >= 2, got {n}")
        period = n
        g = np.zeros((n, n))
        li = np.arange(k)
        for a in range(period):
            idx = (a + li) % period
            np.add.at(g, (idx[:, None], idx[None, :]), block)
        span = float(period)
    else:
        if n < k:
            raise SmoothingError(f"open spline needs n >= k={k}, got {n}")
        g = np.zeros((n, n))
        for a in range(n - p):
            g[a : a + k, a : a + k] += block
        span = float(n - p)
    g = 0.5 * (g + g.T)
    return GramOperator(matrix=g, order=d, span=span, mode="exact", closed=closed)


def difference_matrix(d: int, n: int, closed: bool = False) -> np.ndarray:
    """Order-d forward difference operator: (n-d) x n open, n x n circulant closed."""
    if closed:
        dd = np.zeros((n, n))
        for a in range(d + 1):
            dd[np.arange(n), (np.arange(n) + a) % n] += (-1) ** (d - a) * comb(d, a)
        return dd
    return np.diff(np.eye(n), d, axis=0)


def gram_pspline(
    d: int, n: int, closed: bool = False, span: float | None = None
) -> GramOperator:
    """Penalized-spline smoothing matrix G = D_(d)' D_(d).

    span defaults to n (closed) or n - d (open); pass the spline's true domain
    length to keep weights comparable with exact mode.
    """
    if n <= d:
        raise SmoothingError(f"need n > d, got n={n}, d={d}")
    dd = difference_matrix(d, n, closed=closed)
    g = dd.T @ dd
    if span is None:
        span = float(n) if closed else float(n - d)
    return GramOperator(matrix=g, order=d, span=span, mode="pspline", closed=closed)


def smooth_cost(c: np.ndarray, op: GramOperator) -> tuple[float, np.ndarray]:
    """Quadratic smoothing cost and its gradient: (c'Gbar c / T, 2 Gbar c / T).

    c may be (n, D) or flattened (n*D,); the Kronecker structure Gbar = G kron
    I_D means the scalar matrix applies to each coordinate column.
    """
    c = np.asarray(c, dtype=float)
    flat = c.ndim == 1
    if flat:
        if c.size % op.n != 0:
            raise SmoothingError(
                f"flattened length {c.size} not a multiple of n={op.n}"
            )
        c = c.reshape(op.n, -1)
    if c.shape[0] != op.n:
        raise SmoothingError(f"control count {c.shape[0]} != operator size {op.n}")
    gc = op.matrix @ c
    value = float(np.sum(c * gc)) / op.span
    grad = (2.0 / op.span) * gc
    return value, grad.ravel() if flat else grad


def dimensionless_jerk(points: np.ndarray, dt: float) -> float:
    """Duration- and scale-normalized integrated squared jerk of a polyline.

    Third differences estimate the jerk of the sampled motion; the sum of
    their squared norms times dt approximates the jerk energy, which is made
    dimensionless by duration^5 / path_length^2 (Hogan-Sternad style).  Lower
    is smoother.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 4:
        raise SmoothingError("need at least 4 samples of a 2D/3D polyline")
    if dt <= 0:
        raise SmoothingError("dt must be positive")
    length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    if length <= 1e-12:
        raise SmoothingError("undefined metric: zero-length path")
    jerk = np.diff(pts, 3, axis=0) / dt**3
    energy = float(np.sum(jerk**2)) * dt
    duration = (len(pts) - 1) * dt
    return energy * duration**5 / length**2
