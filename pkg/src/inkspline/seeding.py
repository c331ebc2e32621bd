"""Initialization strategies: weighted Voronoi stippling, TSP paths, areas.

Stippling runs Lloyd relaxation on a discrete pixel grid (nearest-seed
labeling via a KD-tree), moving each seed to the density-weighted centroid
of its cell; darker/denser regions end up with proportionally more points.
A nearest-neighbor + 2-opt tour turns stipples into a single drawing path.
Closed-area seeding takes Voronoi cell polygons over a saliency map, ranked
by increasing mean saliency so salient areas draw last (on top).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import MultiPoint, Point, box
from shapely.ops import voronoi_diagram

from .splines import KeyPointPath

logger = logging.getLogger(__name__)


class SeedingError(ValueError):
    """Invalid seeding input."""


def density_from_image(image: np.ndarray, invert: bool = True) -> np.ndarray:
    """Grayscale mass map from an image: dark pixels attract by default."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img.mean(axis=2)
    return 1.0 - img if invert else img.copy()


def voronoi_stipple(
    density: np.ndarray,
    n: int,
    rng: np.random.Generator,
    iterations: int = 50,
) -> np.ndarray:
    """Weighted Voronoi stippling: n points Lloyd-relaxed toward density.

    density is a (H, W) nonnegative mass map in pixel space; returns (n, 2)
    points in (x, y) pixel coordinates, deterministic for a given rng state.
    """
    d = np.asarray(density, dtype=float)
    if d.ndim != 2:
        raise SeedingError(f"density must be (H, W), got {d.shape}")
    if n < 1:
        raise SeedingError("need at least one point")
    d = np.maximum(d, 0.0)
    total = d.sum()
    if total <= 0:
        raise SeedingError("density has no mass")
    h, w = d.shape
    ys, xs = np.mgrid[0:h, 0:w]
    centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    mass = d.ravel()
    # seed by sampling pixels proportionally to mass, jittered within a pixel
    pick = rng.choice(len(mass), size=n, p=mass / total)
    pts = centers[pick] + rng.uniform(-0.5, 0.5, size=(n, 2))
    for _ in range(iterations):
        labels = cKDTree(pts).query(centers)[1]
        wsum = np.bincount(labels, weights=mass, minlength=n)
        cx = np.bincount(labels, weights=mass * centers[:, 0], minlength=n)
        cy = np.bincount(labels, weights=mass * centers[:, 1], minlength=n)
        occupied = wsum > 0
        pts[occupied] = np.column_stack(
            [cx[occupied] / wsum[occupied], cy[occupied] / wsum[occupied]]
        )
        pts[:, 0] = np.clip(pts[:, 0], 0.0, w)
        pts[:, 1] = np.clip(pts[:, 1], 0.0, h)
    return pts


def _tour_length(points: np.ndarray, order: np.ndarray, closed: bool) -> float:
    seq = points[order]
    length = float(np.sum(np.linalg.norm(np.diff(seq, axis=0), axis=1)))
    if closed:
        length += float(np.linalg.norm(seq[-1] - seq[0]))
    return length


def _nearest_neighbor_order(points, start, skip=None):
    n = len(points)
    visited = np.zeros(n, dtype=bool)
    if skip is not None:
        visited[skip] = True
    order = [start]
    visited[start] = True
    cur = start
    for _ in range(n - 1 - (1 if skip is not None else 0)):
        d = np.linalg.norm(points - points[cur], axis=1)
        d[visited] = np.inf
        cur = int(np.argmin(d))
        visited[cur] = True
        order.append(cur)
    return order


def _two_opt(points, order, closed, max_sweeps=60):
    order = list(order)
    n = len(order)
    improved = True
    sweeps = 0
    while improved and sweeps < max_sweeps:
        improved = False
        sweeps += 1
        # reversing order[i:j+1]; open tours pin both endpoints
        lo = 1 if not closed else 1
        hi = n - 2 if not closed else n - 1
        for i in range(lo, hi):
            a_prev = points[order[i - 1]]
            a = points[order[i]]
            for j in range(i + 1, hi + 1):
                b = points[order[j]]
                b_next = points[order[(j + 1) % n]]
                if not closed and j + 1 >= n:
                    continue
                old = np.linalg.norm(a - a_prev) + np.linalg.norm(b_next - b)
                new = np.linalg.norm(b - a_prev) + np.linalg.norm(b_next - a)
                if new < old - 1e-12:
                    order[i : j + 1] = order[i : j + 1][::-1]
                    improved = True
                    a = points[order[i]]
    return order


def tsp_path(points: np.ndarray, open_path: bool = True) -> np.ndarray:
    """Heuristic tour: nearest-neighbor construction plus 2-opt improvement.

    Open paths run from the left-topmost to the bottom-rightmost point
    (lexicographic on (x, y)); closed tours may start anywhere.  Returns the
    visiting order as an index permutation.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise SeedingError("need at least 2 points")
    n = len(pts)
    if open_path:
        ranks = np.lexsort((pts[:, 1], pts[:, 0]))
        start, end = int(ranks[0]), int(ranks[-1])
        if start == end:
            end = int(ranks[-2]) if n > 1 else start
        order = _nearest_neighbor_order(pts, start, skip=end)
        order.append(end)
        order = _two_opt(pts, order, closed=False)
    else:
        order = _nearest_neighbor_order(pts, 0)
        order = _two_opt(pts, order, closed=True)
    return np.asarray(order, dtype=int)


def area_seeds(
    saliency: np.ndarray,
    n: int,
    rng: np.random.Generator,
    degree: int = 5,
    iterations: int = 50,
):
    """Closed key-point paths from Voronoi cells of saliency-weighted seeds.

    Cell polygons are clipped to the canvas; degenerate cells (< 3 vertices)
    are dropped with a warning.  Returns (paths, mean saliencies) sorted by
    increasing mean cell saliency, so the most salient areas come last and
    render on top.
    """
    sal = np.asarray(saliency, dtype=float)
    if sal.ndim == 3:
        sal = sal.mean(axis=2)
    if n < 1:
        raise SeedingError("need at least one area")
    h, w = sal.shape
    canvas = box(0.0, 0.0, float(w), float(h))
    if n == 1:
        polys = [canvas]
        seeds = np.array([[w / 2.0, h / 2.0]])
    else:
        seeds = voronoi_stipple(np.maximum(sal, 1e-6), n, rng, iterations)
        cells = voronoi_diagram(_multipoint(seeds), envelope=canvas)
        polys = [None] * len(seeds)
        for cell in cells.geoms:
            clipped = cell.intersection(canvas)
            if clipped.is_empty:
                continue
            for i, s in enumerate(seeds):
                if polys[i] is None and clipped.contains(Point(s)):
                    polys[i] = clipped
                    break
        polys = [p for p in polys if p is not None]
    ys, xs = np.mgrid[0:h, 0:w]
    centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    labels = cKDTree(seeds).query(centers)[1]
    paths, ranks = [], []
    for i, poly in enumerate(polys):
        if poly is None or poly.geom_type != "Polygon":
            continue
        verts = np.asarray(poly.exterior.coords)[:-1]  # drop closing duplicate
        if len(verts) < 3:
            logger.warning("dropping degenerate voronoi cell with %d vertices",
                           len(verts))
            continue
        cell_mask = labels == i if n > 1 else np.ones(len(centers), dtype=bool)
        mean_sal = float(sal.ravel()[cell_mask].mean()) if np.any(cell_mask) else 0.0
        kp = np.column_stack([verts, np.zeros(len(verts))])
        paths.append(KeyPointPath(kp, closed=True, degree=degree))
        ranks.append(mean_sal)
    order = np.argsort(ranks, kind="stable")
    return [paths[i] for i in order], [ranks[i] for i in order]


def _multipoint(seeds: np.ndarray):
    return MultiPoint([tuple(s) for s in seeds])


def expand_multiplicity(path: KeyPointPath, r: int) -> KeyPointPath:
    """Copy of the path with every key-point multiplicity set to r."""
    if r < 1:
        raise SeedingError("multiplicity must be >= 1")
    return KeyPointPath(
        keypoints=path.keypoints.copy(),
        closed=path.closed,
        degree=path.degree,
        multiplicities=np.full(len(path.keypoints), r, dtype=int),
    )
