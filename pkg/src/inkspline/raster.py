"""Differentiable soft rasterizer for variable-width strokes and filled areas.

A stroke is a union of per-segment capsules whose radius interpolates
linearly between sample widths.  Each capsule contributes a smoothstep
coverage over its signed distance with a fixed anti-aliasing band (full ink
at radius - band, none at radius), and the capsules combine by the smooth
union 1 - prod(1 - a_i).  Unlike a smooth-min of distances, the union is
exactly zero wherever every capsule's coverage is zero, so a stroke fades in
over its band and vanishes completely as its width reaches zero.  Fills use
the nonzero winding number of the sample polyline for inside/outside and a
smooth-min distance to the outline for a soft boundary centered on it.
Drawables composite back-to-front with "over" blending.  The backward pass
is analytic: coverage saturates exactly outside the band, so distant pixels
contribute exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d


class RasterError(ValueError):
    """Invalid raster request or backward without a retained forward pass."""


@dataclass(frozen=True)
class RasterSettings:
    """Coverage model knobs, recorded for reproducibility."""

    aa_band: float = 1.0
    smin_tau: float = 0.25
    segment_chunk: int = 64


@dataclass
class Canvas:
    """Float image in [0, 1], shape (H, W, C) with C in {1, 3, 4}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3, 4):
            raise RasterError(f"canvas must be (H, W, C<=4), got {px.shape}")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass
class Drawable:
    """One renderable polyline: an open/closed stroke or a filled region.

    points: (S, 2) sample positions in pixel coordinates
    widths: (S,) stroke radii (ignored by fills)
    kind: "stroke" or "fill"
    color: (C,) color; opacity in [0, 1]
    """

    points: np.ndarray
    widths: np.ndarray
    kind: str = "stroke"
    color: np.ndarray = field(default_factory=lambda: np.zeros(1))
    opacity: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.widths = np.asarray(self.widths, dtype=float)
        self.color = np.atleast_1d(np.asarray(self.color, dtype=float))
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise RasterError(f"points must be (S, 2), got {self.points.shape}")
        if self.widths.shape != (len(self.points),):
            raise RasterError("widths must have one entry per point")
        if self.kind not in ("stroke", "fill"):
            raise RasterError(f"kind must be stroke|fill, got {self.kind!r}")


@dataclass
class DrawableGrad:
    points: np.ndarray
    widths: np.ndarray
    color: np.ndarray
    opacity: float


@dataclass
class RenderContext:
    """Intermediates retained by a forward render for the backward pass."""

    drawables: list
    settings: RasterSettings
    shape: tuple
    background: np.ndarray
    below: list  # canvas before each drawable was composited
    coverage: list  # per-drawable full-canvas coverage map (H, W)
    fields: list  # per-drawable dict of distance-field intermediates


def _pixel_grid(h: int, w: int, rows: slice, cols: slice) -> np.ndarray:
    ys, xs = np.mgrid[rows, cols]
    return np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])


def _segment_data(drawable: Drawable):
    pts = drawable.points
    rad = drawable.widths
    if drawable.kind == "fill" and len(pts) >= 2:
        if not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[0]])
            rad = np.concatenate([rad, rad[:1]])
    a, b = pts[:-1], pts[1:]
    if drawable.kind == "stroke":
        r0, r1 = rad[:-1], rad[1:]
    else:
        r0 = r1 = np.zeros(len(a))
    return a, b, r0, r1


def _influence_box(drawable: Drawable, h, w, settings: RasterSettings):
    """Fill pixel box outside which coverage (and gradient) is exactly zero."""
    a, b, r0, r1 = _segment_data(drawable)
    if len(a) == 0:
        return None
    m = len(a)
    # the fill boundary uses a smooth-min whose undershoot needs slack
    pad = settings.aa_band + settings.smin_tau * (np.log(m) + 1.0) + 1.0
    lo = np.minimum(a.min(axis=0), b.min(axis=0)) - pad
    hi = np.maximum(a.max(axis=0), b.max(axis=0)) + pad
    c0 = max(int(np.floor(lo[0])), 0)
    c1 = min(int(np.ceil(hi[0])) + 1, w)
    r0_ = max(int(np.floor(lo[1])), 0)
    r1_ = min(int(np.ceil(hi[1])) + 1, h)
    if c0 >= c1 or r0_ >= r1_:
        return None
    return slice(r0_, r1_), slice(c0, c1)


def _segment_distances(x, a, b, r0, r1, eps=1e-12):
    """Signed capsule distances of pixels x (N, 2) to segments (m, ...)."""
    d = b - a  # (m, 2)
    len2 = np.maximum((d**2).sum(axis=1), eps)
    u = x[:, None, :] - a[None, :, :]  # (N, m, 2)
    theta = (u @ d[:, :, None]).squeeze(-1) if False else np.einsum("nmd,md->nm", u, d)
    theta = theta / len2[None, :]
    t = np.clip(theta, 0.0, 1.0)
    v = u - t[:, :, None] * d[None, :, :]
    dist = np.sqrt(np.maximum((v**2).sum(axis=2), eps**2))
    rho = r0[None, :] + t * (r1 - r0)[None, :]
    return dist - rho, t, theta, v, dist, len2


def _smooth_min_field(x, a, b, r0, r1, tau, chunk):
    """Two-pass stabilized softmin of segment distances; returns (f, dmin, wsum)."""
    n = len(x)
    m = len(a)
    dmin = np.full(n, np.inf)
    for s in range(0, m, chunk):
        dd, *_ = _segment_distances(x, a[s : s + chunk], b[s : s + chunk],
                                    r0[s : s + chunk], r1[s : s + chunk])
        dmin = np.minimum(dmin, dd.min(axis=1))
    wsum = np.zeros(n)
    for s in range(0, m, chunk):
        dd, *_ = _segment_distances(x, a[s : s + chunk], b[s : s + chunk],
                                    r0[s : s + chunk], r1[s : s + chunk])
        wsum += np.exp(-(dd - dmin[:, None]) / tau).sum(axis=1)
    f = dmin - tau * np.log(wsum)
    return f, dmin, wsum


def _winding_number(x, pts, chunk):
    """Nonzero-rule winding number of closed polyline pts around pixels x."""
    a, b = pts[:-1], pts[1:]
    wn = np.zeros(len(x), dtype=int)
    for s in range(0, len(a), chunk):
        aa, bb = a[s : s + chunk], b[s : s + chunk]
        ay, by = aa[:, 1][None, :], bb[:, 1][None, :]
        py = x[:, 1][:, None]
        cross = (bb[:, 0] - aa[:, 0])[None, :] * (py - ay) - (by - ay) * (
            x[:, 0][:, None] - aa[:, 0][None, :]
        )
        up = (ay <= py) & (by > py) & (cross > 0)
        down = (by <= py) & (ay > py) & (cross < 0)
        wn += up.sum(axis=1) - down.sum(axis=1)
    return wn


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _window_offsets(a, b, r0, r1, h, w, band):
    """Per-segment pixel windows guaranteed to contain each capsule + band.

    Returns (corner_x, corner_y, win_w, win_h): every segment's window has
    the chunk-wide size (win_w, win_h), lies inside the canvas, and covers
    the segment's entire influence region, so pixels outside all windows
    have exactly zero coverage.
    """
    pad = np.maximum(r0, r1) + band + 1.0
    lo = np.floor(np.minimum(a, b) - pad[:, None]).astype(int)
    hi = np.ceil(np.maximum(a, b) + pad[:, None]).astype(int) + 1
    ext = hi - lo
    win_w = int(min(ext[:, 0].max(), w))
    win_h = int(min(ext[:, 1].max(), h))
    cx = np.clip(lo[:, 0], 0, max(w - win_w, 0))
    cy = np.clip(lo[:, 1], 0, max(h - win_h, 0))
    return cx, cy, win_w, win_h


def _windowed_distances(px, py, a, b, r0, r1, eps=1e-12):
    """Capsule distances on per-segment pixel windows: arrays (m, K)."""
    x = np.stack([px + 0.5, py + 0.5], axis=-1)
    e = b - a
    len2 = np.maximum((e**2).sum(axis=1), eps)[:, None]
    u = x - a[:, None, :]
    theta = np.einsum("mkd,md->mk", u, e) / len2
    t = np.clip(theta, 0.0, 1.0)
    v = u - t[:, :, None] * e[:, None, :]
    dist = np.sqrt(np.maximum((v**2).sum(axis=2), eps**2))
    rho = r0[:, None] + t * (r1 - r0)[:, None]
    return dist - rho, t, theta, v, dist, len2


def _stroke_chunks(a, b, r0, r1, h, w, band, base_chunk, budget=4_000_000):
    """Yield (slice, px, py) windowed pixel grids, bounded-size temporaries."""
    m = len(a)
    s = 0
    while s < m:
        chunk = min(base_chunk, m - s)
        while True:
            sl = slice(s, s + chunk)
            cx, cy, win_w, win_h = _window_offsets(
                a[sl], b[sl], r0[sl], r1[sl], h, w, band
            )
            if chunk == 1 or chunk * win_w * win_h <= budget:
                break
            chunk = max(1, chunk // 2)
        oy, ox = np.mgrid[0:win_h, 0:win_w]
        px = cx[:, None] + ox.ravel()[None, :]
        py = cy[:, None] + oy.ravel()[None, :]
        yield sl, px, py
        s += chunk


def _stroke_forward(drawable, h, w, settings: RasterSettings):
    """Log-space union of per-capsule coverages over segment windows."""
    a, b, r0, r1 = _segment_data(drawable)
    log_rem = np.zeros(h * w)
    band = settings.aa_band
    for sl, px, py in _stroke_chunks(
        a, b, r0, r1, h, w, band, settings.segment_chunk
    ):
        dd, *_ = _windowed_distances(px, py, a[sl], b[sl], r0[sl], r1[sl])
        keep = 1.0 - _smoothstep(np.clip(-dd / band, 0.0, 1.0))
        with np.errstate(divide="ignore"):
            log_rem += np.bincount(
                (py * w + px).ravel(), weights=np.log(keep.ravel()),
                minlength=h * w,
            )
    return log_rem


def _coverage_forward(drawable: Drawable, h, w, settings: RasterSettings):
    """Full-canvas coverage map plus intermediates for backward."""
    cov = np.zeros((h, w))
    a, b, r0, r1 = _segment_data(drawable)
    if len(a) == 0:
        return cov, None
    if drawable.kind == "stroke":
        log_rem = _stroke_forward(drawable, h, w, settings)
        cov = 1.0 - np.exp(log_rem).reshape(h, w)
        return cov, {"log_rem": log_rem, "segments": (a, b, r0, r1)}
    box = _influence_box(drawable, h, w, settings)
    if box is None:
        return cov, None
    rows, cols = box
    x = _pixel_grid(h, w, rows, cols)
    f, dmin, wsum = _smooth_min_field(
        x, a, b, r0, r1, settings.smin_tau, settings.segment_chunk
    )
    pts = drawable.points
    if not np.allclose(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[0]])
    wn = _winding_number(x, pts, settings.segment_chunk)
    sign = np.where(wn != 0, -1.0, 1.0)
    t = np.clip(0.5 - sign * f / settings.aa_band, 0.0, 1.0)
    cov[rows, cols] = _smoothstep(t).reshape(
        rows.stop - rows.start, cols.stop - cols.start
    )
    inter = {
        "box": box,
        "x": x,
        "dmin": dmin,
        "wsum": wsum,
        "t": t,
        "sign": sign,
        "segments": (a, b, r0, r1),
    }
    return cov, inter


def render(
    drawables,
    width: int,
    height: int,
    channels: int = 1,
    background=1.0,
    settings: RasterSettings | None = None,
    retain: bool = False,
):
    """Composite drawables back-to-front onto a constant background.

    Returns a Canvas, or (Canvas, RenderContext) when retain=True; the
    context feeds render_backward.
    """
    if width < 1 or height < 1:
        raise RasterError(f"canvas dimensions must be positive, got {width}x{height}")
    settings = settings or RasterSettings()
    bg = np.broadcast_to(np.atleast_1d(np.asarray(background, dtype=float)),
                         (channels,)).copy()
    img = np.tile(bg, (height, width, 1))
    below, covs, fields = [], [], []
    for d in drawables:
        if len(d.color) != channels:
            raise RasterError(
                f"drawable color has {len(d.color)} channels, canvas has {channels}"
            )
        cov, inter = _coverage_forward(d, height, width, settings)
        if retain:
            below.append(img.copy())
            covs.append(cov)
            fields.append(inter)
        alpha = (cov * d.opacity)[:, :, None]
        img = img * (1.0 - alpha) + d.color[None, None, :] * alpha
    canvas = Canvas(img)
    if retain:
        ctx = RenderContext(
            drawables=list(drawables),
            settings=settings,
            shape=(height, width, channels),
            background=bg,
            below=below,
            coverage=covs,
            fields=fields,
        )
        return canvas, ctx
    return canvas


def _stroke_backward(drawable, inter, g_cov, settings: RasterSettings):
    """Windowed backward for strokes through the coverage union product."""
    s = len(drawable.points)
    g_pts = np.zeros((s, 2))
    g_wid = np.zeros(s)
    a, b, r0, r1 = inter["segments"]
    log_rem = inter["log_rem"]
    g_flat = g_cov.ravel()
    band = settings.aa_band
    h, w = g_cov.shape
    for sl, px, py in _stroke_chunks(
        a, b, r0, r1, h, w, band, settings.segment_chunk
    ):
        dd, tt, theta, v, dist, len2 = _windowed_distances(
            px, py, a[sl], b[sl], r0[sl], r1[sl]
        )
        idx = py * w + px
        tcl = np.clip(-dd / band, 0.0, 1.0)
        keep = 1.0 - _smoothstep(tcl)
        # d cov / d alpha_i = prod_{j != i} keep_j = exp(log_rem - log keep_i);
        # at keep_i = 0 the chain is zero anyway via d alpha / d d = 0
        pos = keep > 0.0
        safe = np.where(pos, keep, 1.0)
        partial = np.where(pos, np.exp(log_rem[idx] - np.log(safe)), 0.0)
        dalpha_dd = 6.0 * tcl * (1.0 - tcl) * (-1.0 / band)
        gd = g_flat[idx] * partial * dalpha_dd
        e = (b[sl] - a[sl])[:, None, :]
        vn = v / dist[:, :, None]
        g_t = -np.einsum("mkd,mkd->mk", vn, e) - (r1[sl] - r0[sl])[:, None]
        unclamped = (theta > 0.0) & (theta < 1.0)
        g_theta = np.where(unclamped, gd * g_t, 0.0)
        g_u = gd[:, :, None] * vn
        g_e = -gd[:, :, None] * (tt[:, :, None] * vn)
        x = np.stack([px + 0.5, py + 0.5], axis=-1)
        u = x - a[sl][:, None, :]
        g_u += (g_theta / len2)[:, :, None] * e
        g_e += (g_theta / len2)[:, :, None] * (u - 2.0 * theta[:, :, None] * e)
        ga = (-g_u - g_e).sum(axis=1)
        gb = g_e.sum(axis=1)
        gr0 = (-gd * (1.0 - tt)).sum(axis=1)
        gr1 = (-gd * tt).sum(axis=1)
        seg_idx = np.arange(sl.start, sl.stop)
        np.add.at(g_pts, seg_idx, ga)
        np.add.at(g_pts, seg_idx + 1, gb)
        np.add.at(g_wid, seg_idx, gr0)
        np.add.at(g_wid, seg_idx + 1, gr1)
    return g_pts, g_wid


def _coverage_backward(drawable, inter, g_cov, settings: RasterSettings):
    """Route a coverage gradient map to sample positions and widths."""
    s = len(drawable.points)
    g_pts = np.zeros((s, 2))
    g_wid = np.zeros(s)
    if inter is None:
        return g_pts, g_wid
    if drawable.kind == "stroke":
        return _stroke_backward(drawable, inter, g_cov, settings)
    rows, cols = inter["box"]
    g = g_cov[rows, cols].ravel()
    band = settings.aa_band
    t = inter["t"]
    g_up = g * 6.0 * t * (1.0 - t) * (-inter["sign"] / band)
    active = g_up != 0.0
    if not np.any(active):
        return g_pts, g_wid
    x = inter["x"][active]
    g_up = g_up[active]
    dmin = inter["dmin"][active]
    wsum = inter["wsum"][active]
    a, b, r0, r1 = inter["segments"]
    tau = settings.smin_tau
    m = len(a)
    chunk = settings.segment_chunk
    closed_fill = not np.allclose(drawable.points[0], drawable.points[-1])
    for sstart in range(0, m, chunk):
        sl = slice(sstart, min(sstart + chunk, m))
        dd, tt, theta, v, dist, len2 = _segment_distances(
            x, a[sl], b[sl], r0[sl], r1[sl]
        )
        omega = np.exp(-(dd - dmin[:, None]) / tau) / wsum[:, None]
        gd = g_up[:, None] * omega  # (N, mc) upstream per segment distance
        dvec = (b[sl] - a[sl])[None, :, :]
        vn = v / dist[:, :, None]
        # d(dist - rho)/dt holding the direct terms
        g_t = -np.einsum("nmd,nmd->nm", vn, dvec) - (r1[sl] - r0[sl])[None, :]
        unclamped = (theta > 0.0) & (theta < 1.0)
        g_theta = np.where(unclamped, gd * g_t, 0.0)
        # direct terms
        g_u = gd[:, :, None] * vn
        g_e = -gd[:, :, None] * (tt[:, :, None] * vn)
        # theta = (u . e) / |e|^2
        u = x[:, None, :] - a[None, sl, :]
        g_u += (g_theta / len2[None, :])[:, :, None] * dvec
        g_e += (g_theta / len2[None, :])[:, :, None] * (
            u - 2.0 * theta[:, :, None] * dvec
        )
        ga = (-g_u - g_e).sum(axis=0)
        gb = g_e.sum(axis=0)
        seg_idx = np.arange(sl.start, sl.stop)
        pt_a = seg_idx % s if closed_fill else seg_idx
        pt_b = (seg_idx + 1) % s if closed_fill else np.minimum(seg_idx + 1, s - 1)
        np.add.at(g_pts, pt_a, ga)
        np.add.at(g_pts, pt_b, gb)
    return g_pts, g_wid


def render_backward(ctx: RenderContext, canvas_grad: np.ndarray):
    """Analytic backward pass; returns one DrawableGrad per drawable."""
    if ctx is None or not isinstance(ctx, RenderContext):
        raise RasterError("backward requires the context retained by render()")
    g = np.asarray(canvas_grad, dtype=float)
    if g.shape != ctx.shape:
        raise RasterError(f"canvas gradient shape {g.shape} != {ctx.shape}")
    grads = [None] * len(ctx.drawables)
    for j in range(len(ctx.drawables) - 1, -1, -1):
        d = ctx.drawables[j]
        cov = ctx.coverage[j]
        below = ctx.below[j]
        alpha = (cov * d.opacity)[:, :, None]
        g_color = (g * alpha).sum(axis=(0, 1))
        g_a = (g * (d.color[None, None, :] - below)).sum(axis=2)
        g_cov = g_a * d.opacity
        g_opacity = float((g_a * cov).sum())
        g_pts, g_wid = _coverage_backward(d, ctx.fields[j], g_cov, ctx.settings)
        grads[j] = DrawableGrad(
            points=g_pts, widths=g_wid, color=g_color, opacity=g_opacity
        )
        g = g * (1.0 - alpha)
    return grads


def downsample_blur(image: np.ndarray, levels: int, sigma: float = 1.0) -> list:
    """Blur-and-halve pyramid of an image; level 0 is the image itself.

    Convenience wrapper over BlurPyramid; build the pyramid object directly
    when the adjoint is needed or the same shape is processed repeatedly.
    """
    img = np.asarray(image, dtype=float)
    return BlurPyramid(img.shape[0], img.shape[1], levels, sigma).forward(img)


class BlurPyramid:
    """Linear blur-and-halve pyramid with an exact adjoint.

    Each level Gaussian-blurs (sigma = 1 px, zero-padded and renormalized so
    constants are preserved) and then decimates by 2.  Level 0 is the
    identity.  The whole map is linear, so its adjoint routes multiscale
    gradients back to the full-resolution image.
    """

    def __init__(self, height: int, width: int, levels: int, sigma: float = 1.0):
        if levels < 1:
            raise RasterError("need at least one pyramid level")
        if min(height, width) < 2 ** (levels - 1):
            raise RasterError(
                f"{levels} levels would reduce a {height}x{width} image below 1x1"
            )
        radius = max(1, int(np.ceil(3.0 * sigma)))
        xs = np.arange(-radius, radius + 1, dtype=float)
        kernel = np.exp(-0.5 * (xs / sigma) ** 2)
        self.kernel = kernel / kernel.sum()
        self.levels = levels
        self.shapes = [(height, width)]
        self.norms = []
        h, w = height, width
        for _ in range(levels - 1):
            ones = np.ones((h, w))
            norm = self._blur_raw(ones)
            self.norms.append(norm)
            h, w = len(range(0, h, 2)), len(range(0, w, 2))
            self.shapes.append((h, w))

    def _blur_raw(self, img2d):
        out = correlate1d(img2d, self.kernel, axis=0, mode="constant", cval=0.0)
        return correlate1d(out, self.kernel, axis=1, mode="constant", cval=0.0)

    def _blur(self, img, level):
        norm = self.norms[level]
        if img.ndim == 2:
            return self._blur_raw(img) / norm
        out = np.empty_like(img)
        for c in range(img.shape[2]):
            out[:, :, c] = self._blur_raw(img[:, :, c]) / norm
        return out

    def _blur_adjoint(self, grad, level):
        norm = self.norms[level]
        if grad.ndim == 2:
            return self._blur_raw(grad / norm)
        out = np.empty_like(grad)
        for c in range(grad.shape[2]):
            out[:, :, c] = self._blur_raw(grad[:, :, c] / norm)
        return out

    def forward(self, image: np.ndarray) -> list:
        img = np.asarray(image, dtype=float)
        if img.shape[:2] != self.shapes[0]:
            raise RasterError(
                f"image shape {img.shape[:2]} != pyramid base {self.shapes[0]}"
            )
        out = [img]
        for level in range(self.levels - 1):
            img = self._blur(img, level)[::2, ::2]
            out.append(img)
        return out

    def adjoint(self, grads: list) -> np.ndarray:
        if len(grads) != self.levels:
            raise RasterError(f"expected {self.levels} gradient levels")
        acc = np.zeros_like(np.asarray(grads[-1], dtype=float))
        for level in range(self.levels - 1, 0, -1):
            g = np.asarray(grads[level], dtype=float) + acc
            up = np.zeros(
                self.shapes[level - 1] + g.shape[2:], dtype=float
            )
            up[::2, ::2] = g
            acc = self._blur_adjoint(up, level - 1)
        return np.asarray(grads[0], dtype=float) + acc
