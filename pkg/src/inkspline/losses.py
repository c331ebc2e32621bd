"""Image-space and geometric loss terms with analytic gradients.

Every term returns (value, gradient(s)).  Image-space gradients are defined
on the rendered canvas and flow to geometry through the rasterizer backward;
geometric terms differentiate directly w.r.t. the points they consume.  The
combiner applies relative weights (default 1), skips disabled terms, and
aborts on non-finite values naming the offending term.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .raster import BlurPyramid


class LossError(ValueError):
    """Invalid loss input."""


class NonFiniteLossError(RuntimeError):
    """A loss term produced NaN/inf; carries the term name for diagnostics."""

    def __init__(self, term: str, value):
        super().__init__(f"non-finite value in loss term {term!r}: {value}")
        self.term = term


@dataclass
class LossWeights:
    """Relative weights of the loss terms; unspecified weights default to 1."""

    smooth: float = 1.0
    box: float = 1.0
    repul: float = 1.0
    coverage: float = 1.0
    overlap: float = 1.0
    align: float = 1.0
    balance: float = 1.0
    ext: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise LossError(f"weight {f.name} must be >= 0")

    def get(self, name: str) -> float:
        return getattr(self, name)


def multiscale_mse(rendered: np.ndarray, target: np.ndarray, pyramid: BlurPyramid):
    """Sum over pyramid levels of the per-level mean squared error.

    Returns (value, gradient w.r.t. the rendered image).  Target opacity is
    honored upstream by compositing the target against the background before
    calling; a lighter target directly asks for sparser coverage.
    """
    r = np.asarray(rendered, dtype=float)
    t = np.asarray(target, dtype=float)
    if r.shape != t.shape:
        raise LossError(f"image shapes differ: {r.shape} vs {t.shape}")
    diffs = [a - b for a, b in zip(pyramid.forward(r), pyramid.forward(t))]
    value = sum(float(np.mean(d**2)) for d in diffs)
    grad = pyramid.adjoint([2.0 * d / d.size for d in diffs])
    return value, grad


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bbox_loss(points: np.ndarray, b_min, b_max, phi: str = "relu"):
    """Penalty for points leaving the box [b_min, b_max] (componentwise).

    value = sum_i 1' [phi(b_min - p_i) + phi(p_i - b_max)]; zero with
    phi=relu iff every point is inside.  Returns (value, point gradients).
    """
    p = np.asarray(points, dtype=float)
    lo = np.asarray(b_min, dtype=float)
    hi = np.asarray(b_max, dtype=float)
    if np.any(lo >= hi):
        raise LossError("bounding box must satisfy b_min < b_max componentwise")
    under = lo - p
    over = p - hi
    if phi == "relu":
        value = float(np.sum(np.maximum(under, 0)) + np.sum(np.maximum(over, 0)))
        grad = (over > 0).astype(float) - (under > 0).astype(float)
    elif phi == "softplus":
        value = float(np.sum(_softplus(under)) + np.sum(_softplus(over)))
        grad = _sigmoid(over) - _sigmoid(under)
    else:
        raise LossError(f"phi must be relu|softplus, got {phi!r}")
    return value, grad


def _tangents(points: np.ndarray, closed: bool) -> np.ndarray:
    """Central-difference tangents (unnormalized); one-sided at open ends."""
    if closed:
        return np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
    t = np.empty_like(points)
    t[1:-1] = points[2:] - points[:-2]
    t[0] = points[1] - points[0]
    t[-1] = points[-1] - points[-2]
    return t


def repulsion_loss(
    points: np.ndarray,
    closed: bool = True,
    exclude_window: int = 2,
    eps: float = 1e-9,
):
    """Discrete tangent-point energy of one curve's samples.

    Quadrature of the tangent-point integral over ordered non-adjacent pairs:

        E = sum w_i w_j |P_normal(t_i)(x_i - x_j)|^2 / |x_i - x_j|^4

    with arc-length weights w_i = |x_{i+1} - x_{i-1}| / 2 and unit tangents
    t_i.  The kernel blows up as a non-adjacent pair approaches contact,
    discouraging self-intersection, while the weights let kink loops shrink
    out of existence instead of being inflated.  Distinct curves are scored
    separately by the caller, so different areas may overlap freely.
    Returns (value, point gradients).
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or len(x) < 3:
        raise LossError("need at least 3 samples of a 2D curve")
    s = len(x)
    tan = _tangents(x, closed)
    u = x[:, None, :] - x[None, :, :]  # u[i, j] = x_i - x_j
    n2u = (u**2).sum(axis=2)
    idx = np.arange(s)
    sep = np.abs(idx[:, None] - idx[None, :])
    if closed:
        sep = np.minimum(sep, s - sep)
    valid = sep > exclude_window
    cross = tan[:, None, 0] * u[:, :, 1] - tan[:, None, 1] * u[:, :, 0]
    n2t = np.maximum((tan**2).sum(axis=1), eps)[:, None]
    n2u_g = np.maximum(n2u, eps)
    wgt = 0.5 * np.sqrt(n2t[:, 0])
    ww = wgt[:, None] * wgt[None, :]
    kern = np.where(valid, cross**2 / (n2t * n2u_g**2), 0.0)
    value = float((ww * kern).sum())

    de_dc = ww * np.where(valid, 2.0 * cross / (n2t * n2u_g**2), 0.0)
    de_dn2t = ww * np.where(valid, -(cross**2) / (n2t**2 * n2u_g**2), 0.0)
    de_dn2u = ww * np.where(valid, -2.0 * cross**2 / (n2t * n2u_g**3), 0.0)
    # cross = tan_i x u -> d/du = (-tan_y, tan_x), d/dtan = (u_y, -u_x)
    g_u = de_dc[:, :, None] * np.stack([-tan[:, None, 1] * np.ones_like(cross),
                                        tan[:, None, 0] * np.ones_like(cross)], axis=2)
    g_u += (2.0 * de_dn2u)[:, :, None] * u
    g_t = de_dc[:, :, None] * np.stack([u[:, :, 1], -u[:, :, 0]], axis=2)
    g_t_total = g_t.sum(axis=1) + (2.0 * de_dn2t.sum(axis=1))[:, None] * tan
    # energy also depends on the tangents through the quadrature weights
    de_dw = (wgt[None, :] * kern).sum(axis=1) + (wgt[:, None] * kern).sum(axis=0)
    g_t_total += (de_dw / (4.0 * wgt))[:, None] * tan
    grad = g_u.sum(axis=1) - g_u.sum(axis=0)
    # scatter tangent gradients onto the stencil points
    if closed:
        grad += np.roll(g_t_total, 1, axis=0) - np.roll(g_t_total, -1, axis=0)
    else:
        grad[2:] += g_t_total[1:-1]
        grad[:-2] -= g_t_total[1:-1]
        grad[1] += g_t_total[0]
        grad[0] -= g_t_total[0]
        grad[-1] += g_t_total[-1]
        grad[-2] -= g_t_total[-1]
    return value, grad


def overlap_cost(image: np.ndarray, threshold: float = 0.5):
    """sum ReLU(v - threshold) over pixel intensities of a single-channel render.

    Meant for scenes of half-opacity white shapes on black, where intensity
    above the threshold marks overlapping coverage.
    """
    v = np.asarray(image, dtype=float)
    over = v - threshold
    value = float(np.sum(np.maximum(over, 0.0)))
    grad = (over > 0).astype(float)
    return value, grad


def alignment_cost(centers: np.ndarray, eps: float = 1e-9):
    """Sum of absolute turning angles between consecutive center points.

    Zero for collinear ordered centers; preserves the given ordering.
    Returns (value, center gradients).
    """
    c = np.asarray(centers, dtype=float)
    if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
        raise LossError("need at least 3 ordered 2D centers")
    a = c[1:-1] - c[:-2]
    b = c[2:] - c[1:-1]
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na < eps) or np.any(nb < eps):
        raise LossError("duplicate consecutive centers make the angle undefined")
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = (a * b).sum(axis=1)
    theta = np.arctan2(cross, dot)
    value = float(np.sum(np.abs(theta)))
    sgn = np.sign(theta)
    denom = cross**2 + dot**2
    # d theta / d cross = dot / (cross^2 + dot^2); d theta / d dot = -cross / ...
    g_cross = sgn * dot / denom
    g_dot = -sgn * cross / denom
    g_a = g_cross[:, None] * np.stack([b[:, 1], -b[:, 0]], axis=1) + g_dot[:, None] * b
    g_b = g_cross[:, None] * np.stack([-a[:, 1], a[:, 0]], axis=1) + g_dot[:, None] * a
    grad = np.zeros_like(c)
    np.add.at(grad, np.arange(len(c) - 2), -g_a)
    np.add.at(grad, np.arange(1, len(c) - 1), g_a - g_b)
    np.add.at(grad, np.arange(2, len(c)), g_b)
    return value, grad


def combine(terms: dict, weights: LossWeights):
    """Weight and sum loss terms: terms maps name -> (value, grads dict).

    Returns (total, merged grads dict); a term with weight zero is skipped
    entirely so its gradients are bit-identical to omitting it.  Non-finite
    term values abort with the term name.
    """
    total = 0.0
    merged: dict = {}
    for name, (value, grads) in terms.items():
        lam = weights.get(name)
        if lam == 0.0:
            continue
        if not np.isfinite(value):
            raise NonFiniteLossError(name, value)
        total += lam * value
        for key, g in grads.items():
            g = lam * g
            if key in merged:
                merged[key] = merged[key] + g
            else:
                merged[key] = g
    if not np.isfinite(total):
        raise NonFiniteLossError("total", total)
    return total, merged


def polyline_self_intersections(points: np.ndarray, closed: bool = True) -> int:
    """Count transversal crossings between non-adjacent segments."""
    pts = np.asarray(points, dtype=float)
    segs = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    if closed and not np.allclose(pts[0], pts[-1]):
        segs.append((pts[-1], pts[0]))
    m = len(segs)

    def crosses(s1, s2):
        p, p2 = s1
        q, q2 = s2
        r = p2 - p
        srch = q2 - q
        denom = r[0] * srch[1] - r[1] * srch[0]
        if abs(denom) < 1e-12:
            return False
        t = ((q - p)[0] * srch[1] - (q - p)[1] * srch[0]) / denom
        u = ((q - p)[0] * r[1] - (q - p)[1] * r[0]) / denom
        return 1e-9 < t < 1 - 1e-9 and 1e-9 < u < 1 - 1e-9

    count = 0
    for i in range(m):
        for j in range(i + 2, m):
            if closed and i == 0 and j == m - 1:
                continue  # adjacent around the seam
            if crosses(segs[i], segs[j]):
                count += 1
    return count
