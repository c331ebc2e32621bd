"""Exact linear conversion of uniform B-splines to cubic piecewise Bezier.

A degree-p uniform B-spline span equals one degree-p Bezier segment under a
fixed (p+1) x (p+1) block; stacking shifted copies (p rows, 1 column per
span, junction rows shared) converts the whole curve.  Quintic chains are
then multi-degree-reduced to cubic with 4 x 6 blocks stacked with shared
junction rows/columns.  Everything is a sparse matrix fixed by (p, n), so
both the forward map and its gradient adjoint are precomputed matvecs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import sparse


class BezierError(ValueError):
    """Invalid conversion request or shape mismatch."""


_S5 = (
    np.array(
        [
            [1, 26, 66, 26, 1, 0],
            [0, 16, 66, 36, 2, 0],
            [0, 8, 60, 48, 4, 0],
            [0, 4, 48, 60, 8, 0],
            [0, 2, 36, 66, 16, 0],
            [0, 1, 26, 66, 26, 1],
        ],
        dtype=float,
    )
    / 120.0
)

_S3 = (
    np.array(
        [
            [1, 4, 1, 0],
            [0, 4, 2, 0],
            [0, 2, 4, 0],
            [0, 1, 4, 1],
        ],
        dtype=float,
    )
    / 6.0
)

_R53 = np.array(
    [
        [1, 0, 0, 0, 0, 0],
        [float(Fraction(-2, 3)), float(Fraction(5, 3)), 0, 0, 0, 0],
        [0, 0, 0, 0, float(Fraction(5, 3)), float(Fraction(-2, 3))],
        [0, 0, 0, 0, 0, 1],
    ]
)


def conversion_block(p: int) -> np.ndarray:
    """(p+1) x (p+1) block mapping one B-spline span to a Bezier segment."""
    if p == 5:
        return _S5.copy()
    if p == 3:
        return _S3.copy()
    raise BezierError(f"unsupported conversion degree {p} (supported: 3, 5)")


def reduction_block(p: int, q: int) -> np.ndarray:
    """(q+1) x (p+1) multi-degree-reduction block."""
    if (p, q) == (5, 3):
        return _R53.copy()
    if p == q:
        return np.eye(p + 1)
    raise BezierError(f"unsupported reduction ({p} -> {q})")


def _stack_overlapping(block: np.ndarray, count: int, row_shift: int, col_shift: int):
    """Stack `count` copies of block shifted by (row_shift, col_shift).

    Consecutive copies overlap by block_rows - row_shift rows; overlapping
    entries agree by construction, so later copies overwrite earlier ones.
    """
    br, bc = block.shape
    rows = row_shift * (count - 1) + br
    cols = col_shift * (count - 1) + bc
    out = sparse.lil_matrix((rows, cols))
    for j in range(count):
        out[j * row_shift : j * row_shift + br, j * col_shift : j * col_shift + bc] = block
    return out.tocsr()


def stack_conversion(block: np.ndarray, segments: int) -> sparse.csr_matrix:
    """Stacked spline-to-Bezier map: copies shifted by p rows and 1 column.

    Output has p*segments + 1 rows (junction control points are shared
    between consecutive segments, and the overlapping rows coincide).
    """
    if segments < 1:
        raise BezierError("need at least one segment")
    p = block.shape[0] - 1
    return _stack_overlapping(block, segments, row_shift=p, col_shift=1)


def stack_reduction(block: np.ndarray, segments: int) -> sparse.csr_matrix:
    """Stacked degree-reduction map: copies shifted by q rows and p columns."""
    if segments < 1:
        raise BezierError("need at least one segment")
    q = block.shape[0] - 1
    p = block.shape[1] - 1
    return _stack_overlapping(block, segments, row_shift=q, col_shift=p)


@dataclass(frozen=True)
class BezierChain:
    """Piecewise cubic Bezier control points in shared-junction form.

    points: (3*segments + 1, D) array; segment j uses rows 3j .. 3j+3, so
    C0 continuity is structural.
    """

    points: np.ndarray
    closed: bool = False

    @property
    def segment_count(self) -> int:
        return (len(self.points) - 1) // 3

    @property
    def segments(self) -> np.ndarray:
        """(segments, 4, D) view of the per-segment control quadruples."""
        idx = 3 * np.arange(self.segment_count)[:, None] + np.arange(4)[None, :]
        return self.points[idx]


@dataclass(frozen=True)
class ConversionPipeline:
    """Precomputed sparse maps for one path topology.

    to_bezier: stacked S-bar (degree-p chain from spline control points)
    reduce: stacked R-bar (cubic chain from the degree-p chain)
    matrix: composed map R-bar @ S-bar applied per coordinate; the full map on
        flattened (x, y, w) vectors is matrix kron I_3.
    """

    degree: int
    n: int
    closed: bool
    to_bezier: sparse.csr_matrix
    reduce: sparse.csr_matrix
    matrix: sparse.csr_matrix

    @property
    def segment_count(self) -> int:
        return self.n - self.degree


def make_pipeline(degree: int, n: int, closed: bool = False) -> ConversionPipeline:
    """Build the fixed conversion map for a spline with n control points."""
    if n <= degree:
        raise BezierError(f"need n > p, got n={n}, p={degree}")
    segments = n - degree
    sbar = stack_conversion(conversion_block(degree), segments)
    rbar = stack_reduction(reduction_block(degree, 3), segments)
    matrix = (rbar @ sbar).tocsr()
    matrix.sum_duplicates()
    return ConversionPipeline(
        degree=degree, n=n, closed=closed, to_bezier=sbar, reduce=rbar, matrix=matrix
    )


def to_cubic(control_points: np.ndarray, pipeline: ConversionPipeline) -> BezierChain:
    """Convert spline control points (n, D) to the cubic chain."""
    c = np.asarray(control_points, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    if c.shape[0] != pipeline.n:
        raise BezierError(
            f"control count {c.shape[0]} does not match pipeline n={pipeline.n}"
        )
    return BezierChain(points=pipeline.matrix @ c, closed=pipeline.closed)


def chain_backward(
    grad_points: np.ndarray, pipeline: ConversionPipeline
) -> np.ndarray:
    """Adjoint of to_cubic: gradient w.r.t. spline control points."""
    g = np.asarray(grad_points, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != pipeline.matrix.shape[0]:
        raise BezierError(
            f"gradient rows {g.shape[0]} do not match chain size "
            f"{pipeline.matrix.shape[0]}"
        )
    return pipeline.matrix.T @ g


def eval_chain(chain: BezierChain, t: np.ndarray) -> np.ndarray:
    """Evaluate the chain at global parameters t in [0, segment_count].

    Integer part selects the segment, fractional part the Bernstein argument.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    seg = np.clip(np.floor(t).astype(int), 0, chain.segment_count - 1)
    x = t - seg
    b = _bernstein3(x)
    idx = 3 * seg[:, None] + np.arange(4)[None, :]
    return np.einsum("sa,sad->sd", b, chain.points[idx])


def _bernstein3(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    omx = 1.0 - x
    return np.stack([omx**3, 3 * x * omx**2, 3 * x**2 * omx, x**3], axis=-1)


def chain_sampling_matrix(segments: int, per_segment: int) -> sparse.csr_matrix:
    """Sparse map from chain points to a polyline: per_segment samples per span.

    Produces segments*per_segment + 1 rows; junction samples are emitted once.
    """
    if per_segment < 1:
        raise BezierError("need at least one sample per segment")
    total = segments * per_segment + 1
    t = np.linspace(0.0, 1.0, per_segment + 1)
    b = _bernstein3(t)  # (per_segment+1, 4)
    mat = sparse.lil_matrix((total, 3 * segments + 1))
    for j in range(segments):
        rows = slice(j * per_segment, j * per_segment + per_segment + 1)
        mat[rows, 3 * j : 3 * j + 4] = b
    out = mat.tocsr()
    out.sum_duplicates()
    return out


def elevate_degree(points: np.ndarray, target: int) -> np.ndarray:
    """Classical Bezier degree elevation of one segment to `target` degree."""
    b = np.asarray(points, dtype=float)
    p = len(b) - 1
    while p < target:
        nxt = np.empty((p + 2,) + b.shape[1:])
        nxt[0] = b[0]
        nxt[-1] = b[-1]
        for i in range(1, p + 1):
            a = i / (p + 1)
            nxt[i] = a * b[i - 1] + (1 - a) * b[i]
        b = nxt
        p += 1
    return b
