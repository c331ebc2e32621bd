"""Gradient-descent engine: Adam over key-points, widths, colors, and logits.

Each step rebuilds control points from the current key-points (a fixed 0/1
gather), maps them through the precomputed conversion + sampling matrices to
a render polyline, rasterizes, evaluates the weighted losses, and routes
gradients back through the transposed linear maps and the rasterizer's
analytic backward.  There is no autodiff tape: everything between key-points
and samples is linear, so adjoints are sparse matvecs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import losses as L
from .bezier import chain_sampling_matrix, make_pipeline
from .palette import (
    anneal_temperature,
    balance_reg,
    color_grad_to_logits,
    hard_assign,
    soft_assign,
    soft_assign_backward,
)
from .provider import GradientProvider
from .raster import BlurPyramid, Drawable, RasterSettings, render, render_backward
from .smoothing import gram_exact, gram_pspline, smooth_cost
from .splines import build_spline


class EngineError(RuntimeError):
    """Configuration problem detected before or during a run."""


class EngineAbort(RuntimeError):
    """Non-finite loss or gradient; carries the last finite state."""

    def __init__(self, message, step, scene, trace):
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.scene = scene
        self.trace = trace


def cosine_lr(step: int, total: int, lr_base: float, lr_min: float = 0.0) -> float:
    """Cosine annealing from lr_base at step 0 to lr_min at step total."""
    if not 0 <= step <= total or total < 1:
        raise EngineError(f"step {step} outside [0, {total}]")
    return lr_min + 0.5 * (lr_base - lr_min) * (1.0 + np.cos(np.pi * step / total))


class Adam:
    """Standard Adam state for one parameter array."""

    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if param.shape != grad.shape:
            raise EngineError("parameter/gradient shape mismatch")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return param - lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class ScenePath:
    """One drawable curve: key-points plus styling."""

    path: "KeyPointPath"
    kind: str = "stroke"  # stroke | fill
    color: np.ndarray = field(default_factory=lambda: np.zeros(1))
    opacity: float = 1.0
    logits: np.ndarray | None = None

    def __post_init__(self):
        self.color = np.atleast_1d(np.asarray(self.color, dtype=float))
        if self.logits is not None:
            self.logits = np.asarray(self.logits, dtype=float)


@dataclass
class Scene:
    """Ordered drawable collection over a canvas."""

    paths: list
    width: int
    height: int
    channels: int = 1
    background: float | np.ndarray = 1.0
    palette: np.ndarray | None = None

    def __post_init__(self):
        if self.palette is not None:
            self.palette = np.asarray(self.palette, dtype=float)


@dataclass
class OptimJob:
    """Everything needed to reproduce one optimization run."""

    scene: Scene
    target: np.ndarray | None = None
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    steps: int = 300
    seed: int = 0
    lr_positions: float = 1.0
    lr_widths: float = 0.1
    lr_colors: float = 0.02
    lr_logits: float = 0.02
    lr_min: float = 0.0
    width_min: float = 0.0
    width_max: float = 16.0
    samples_per_segment: int = 8
    pyramid_levels: int = 4
    smooth_order: int = 3
    smooth_mode: str = "exact"  # exact | pspline
    gumbel_beta: float = 0.15
    tau_start: float = 1.0
    tau_end: float = 0.05
    target_opacity: float = 1.0
    bbox_phi: str = "relu"
    optimize_positions: bool = True
    optimize_widths: bool = True
    optimize_colors: bool = False
    provider_command: list | None = None
    raster: RasterSettings = field(default_factory=RasterSettings)
    trace_path: str | None = None
    checkpoint_dir: str | None = None
    checkpoint_every: int = 0

    def validate(self):
        if self.steps < 1:
            raise EngineError("steps must be >= 1")
        if self.width_min < 0 or self.width_max < self.width_min:
            raise EngineError("need 0 <= width_min <= width_max")
        for name in ("lr_positions", "lr_widths", "lr_colors", "lr_logits"):
            if getattr(self, name) <= 0:
                raise EngineError(f"{name} must be positive")
        if self.weights.smooth > 0:
            for sp in self.scene.paths:
                if self.smooth_order > sp.path.degree - 1:
                    raise EngineError(
                        f"smoothing order {self.smooth_order} needs degree >= "
                        f"{self.smooth_order + 1} (path has degree {sp.path.degree})"
                    )
        if self.smooth_mode not in ("exact", "pspline"):
            raise EngineError(f"unknown smoothing mode {self.smooth_mode!r}")


@dataclass
class _PathState:
    """Fixed per-path linear maps; only key-point values change per step."""

    keypoints: np.ndarray
    control_index: np.ndarray
    n: int
    n_unique: int
    closed: bool
    render_map: sparse.csr_matrix
    gram: object
    repul_samples: int


@dataclass
class RunResult:
    scene: Scene
    trace: list
    canvas: np.ndarray
    term_names: list


def _prepare_path(sp: ScenePath, job: OptimJob) -> _PathState:
    spline = build_spline(sp.path)
    pipe = make_pipeline(sp.path.degree, spline.n, closed=sp.path.closed)
    sampler = chain_sampling_matrix(pipe.segment_count, job.samples_per_segment)
    render_map = (sampler @ pipe.matrix).tocsr()
    gram = None
    if job.weights.smooth > 0:
        k = sp.path.order
        if job.smooth_mode == "exact":
            gram = (
                gram_exact(k, job.smooth_order, spline.n_unique, closed=True)
                if sp.path.closed
                else gram_exact(k, job.smooth_order, spline.n)
            )
        else:
            span = float(spline.n - sp.path.degree)
            gram = gram_pspline(
                job.smooth_order,
                spline.n_unique if sp.path.closed else spline.n,
                closed=sp.path.closed,
                span=span,
            )
    samples = render_map.shape[0]
    return _PathState(
        keypoints=sp.path.keypoints.copy(),
        control_index=spline.control_to_keypoint,
        n=spline.n,
        n_unique=spline.n_unique,
        closed=sp.path.closed,
        render_map=render_map,
        gram=gram,
        repul_samples=samples - 1 if sp.path.closed else samples,
    )


def _effective_target(job: OptimJob):
    if job.target is None:
        return None
    t = np.asarray(job.target, dtype=float)
    if t.ndim == 2:
        t = t[:, :, None]
    bg = np.broadcast_to(
        np.atleast_1d(np.asarray(job.scene.background, dtype=float)),
        (job.scene.channels,),
    )
    return bg * (1.0 - job.target_opacity) + t * job.target_opacity


def scene_drawables(scene: Scene, polylines, soft_colors=None):
    """Drawables for the given per-path polylines (S, 3) arrays."""
    out = []
    for i, (sp, poly) in enumerate(zip(scene.paths, polylines)):
        color = sp.color
        if soft_colors is not None and soft_colors[i] is not None:
            color = soft_colors[i]
        out.append(
            Drawable(
                points=poly[:, :2],
                widths=poly[:, 2],
                kind=sp.kind,
                color=color,
                opacity=sp.opacity,
            )
        )
    return out


def render_scene(
    scene: Scene,
    samples_per_segment: int = 8,
    settings: RasterSettings | None = None,
    hard_colors: bool = True,
):
    """Rasterize a scene as-is (hard palette colors unless told otherwise)."""
    polylines = []
    soft_colors = []
    for sp in scene.paths:
        spline = build_spline(sp.path)
        pipe = make_pipeline(sp.path.degree, spline.n, closed=sp.path.closed)
        sampler = chain_sampling_matrix(pipe.segment_count, samples_per_segment)
        polylines.append(sampler @ (pipe.matrix @ spline.control_points))
        if sp.logits is not None and scene.palette is not None and hard_colors:
            soft_colors.append(hard_assign(sp.logits, scene.palette))
        else:
            soft_colors.append(None)
    drawables = scene_drawables(scene, polylines, soft_colors)
    return render(
        drawables,
        scene.width,
        scene.height,
        channels=scene.channels,
        background=scene.background,
        settings=settings or RasterSettings(),
    )


def run(job: OptimJob) -> RunResult:
    """Optimize the job's scene; returns the final scene, trace, and canvas."""
    job.validate()
    scene = job.scene
    states = [_prepare_path(sp, job) for sp in scene.paths]
    target = _effective_target(job)
    weights = job.weights

    use_coverage = target is not None and weights.coverage > 0
    use_smooth = weights.smooth > 0
    use_box = weights.box > 0
    use_repul = weights.repul > 0
    has_palette = scene.palette is not None and any(
        sp.logits is not None for sp in scene.paths
    )
    use_balance = has_palette and weights.balance > 0
    provider = None
    use_ext = job.provider_command is not None and weights.ext > 0
    if use_ext:
        provider = GradientProvider(job.provider_command)

    term_names = [
        name
        for name, on in [
            ("coverage", use_coverage),
            ("smooth", use_smooth),
            ("box", use_box),
            ("repul", use_repul),
            ("balance", use_balance),
            ("ext", use_ext),
        ]
        if on
    ]

    pyramid = None
    if use_coverage:
        pyramid = BlurPyramid(scene.height, scene.width, job.pyramid_levels)

    # deterministic per-area gumbel streams split from the job seed
    area_rngs = [
        np.random.default_rng(np.random.SeedSequence([job.seed, i]))
        for i in range(len(scene.paths))
    ]

    adam_pos = [Adam(st.keypoints[:, :2].shape) for st in states]
    adam_wid = [Adam(st.keypoints[:, 2].shape) for st in states]
    adam_col = [Adam(sp.color.shape) for sp in scene.paths]
    adam_log = [
        Adam(sp.logits.shape) if sp.logits is not None else None
        for sp in scene.paths
    ]

    trace = []
    last_good = [st.keypoints.copy() for st in states]

    try:
        for step in range(job.steps):
            tau = anneal_temperature(step, job.steps, job.tau_start, job.tau_end)

            polylines = []
            controls = []
            for st in states:
                c = st.keypoints[st.control_index]
                controls.append(c)
                polylines.append(st.render_map @ c)

            soft_assignments = [None] * len(scene.paths)
            soft_colors = [None] * len(scene.paths)
            if has_palette:
                for i, sp in enumerate(scene.paths):
                    if sp.logits is None:
                        continue
                    a, v = soft_assign(
                        sp.logits, scene.palette, tau,
                        beta=job.gumbel_beta, rng=area_rngs[i],
                    )
                    soft_assignments[i] = a
                    soft_colors[i] = v

            drawables = scene_drawables(scene, polylines, soft_colors)
            canvas, ctx = render(
                drawables,
                scene.width,
                scene.height,
                channels=scene.channels,
                background=scene.background,
                settings=job.raster,
                retain=True,
            )

            terms = {}
            if use_coverage:
                value, grad = L.multiscale_mse(canvas.pixels, target, pyramid)
                terms["coverage"] = (value, {"canvas": grad})
            if use_ext:
                ext_loss, ext_grad = provider.query(step, canvas.pixels)
                terms["ext"] = (
                    0.0 if ext_loss is None else ext_loss,
                    {"canvas": ext_grad},
                )
            if use_smooth:
                value = 0.0
                grads = {}
                for i, st in enumerate(states):
                    c = controls[i][: st.n_unique] if st.closed else controls[i]
                    v, g = smooth_cost(c, st.gram)
                    value += v
                    gc = np.zeros((st.n, 3))
                    gc[: len(g)] = g
                    grads[("control", i)] = gc
                terms["smooth"] = (value, grads)
            if use_box:
                value = 0.0
                grads = {}
                for i, st in enumerate(states):
                    v, g = L.bbox_loss(
                        st.keypoints[:, :2],
                        [0.0, 0.0],
                        [float(scene.width), float(scene.height)],
                        phi=job.bbox_phi,
                    )
                    value += v
                    grads[("kp_xy", i)] = g
                terms["box"] = (value, grads)
            if use_repul:
                value = 0.0
                grads = {}
                for i, st in enumerate(states):
                    pts = polylines[i][: st.repul_samples, :2]
                    v, g = L.repulsion_loss(pts, closed=st.closed)
                    value += v
                    gs = np.zeros((polylines[i].shape[0], 2))
                    gs[: st.repul_samples] = g
                    grads[("samples", i)] = gs
                terms["repul"] = (value, grads)
            if use_balance:
                rows = [a for a in soft_assignments if a is not None]
                idxs = [i for i, a in enumerate(soft_assignments) if a is not None]
                value, g_a = balance_reg(np.stack(rows), weight=1.0)
                grads = {}
                for row, i in enumerate(idxs):
                    g_logit = soft_assign_backward(
                        soft_assignments[i], g_a[row], tau
                    )
                    grads[("logits", i)] = g_logit
                terms["balance"] = (value, grads)

            total, merged = L.combine(terms, weights)

            kp_grads = [np.zeros_like(st.keypoints) for st in states]
            color_grads = [np.zeros_like(sp.color) for sp in scene.paths]
            logit_grads = [
                np.zeros_like(sp.logits) if sp.logits is not None else None
                for sp in scene.paths
            ]

            canvas_grad = merged.pop("canvas", None)
            if canvas_grad is not None:
                dgrads = render_backward(ctx, canvas_grad)
                for i, dg in enumerate(dgrads):
                    sample_grad = np.column_stack([dg.points, dg.widths])
                    key = ("samples", i)
                    if key in merged:
                        pad = np.column_stack(
                            [merged.pop(key), np.zeros(len(sample_grad))]
                        )
                        sample_grad = sample_grad + pad
                    g_c = states[i].render_map.T @ sample_grad
                    key_c = ("control", i)
                    if key_c in merged:
                        g_c = g_c + merged.pop(key_c)
                    np.add.at(kp_grads[i], states[i].control_index, g_c)
                    if soft_colors[i] is not None:
                        logit_grads[i] += color_grad_to_logits(
                            soft_assignments[i], scene.palette, dg.color, tau
                        )
                    else:
                        color_grads[i] += dg.color
            # leftover geometric grads when no image term was active
            for (kind, i) in list(merged.keys()):
                g = merged.pop((kind, i))
                if kind == "samples":
                    g3 = np.column_stack([g, np.zeros(len(g))])
                    g_c = states[i].render_map.T @ g3
                    np.add.at(kp_grads[i], states[i].control_index, g_c)
                elif kind == "control":
                    np.add.at(kp_grads[i], states[i].control_index, g)
                elif kind == "kp_xy":
                    kp_grads[i][:, :2] += g
                elif kind == "logits":
                    logit_grads[i] += g

            for g in kp_grads:
                if not np.all(np.isfinite(g)):
                    raise L.NonFiniteLossError("gradient", float("nan"))

            row = {"step": step}
            for name in term_names:
                row[name] = terms[name][0]
            row["total"] = total
            trace.append(row)
            last_good = [st.keypoints.copy() for st in states]

            lr_pos = cosine_lr(step, job.steps, job.lr_positions, job.lr_min)
            lr_wid = cosine_lr(step, job.steps, job.lr_widths, job.lr_min)
            lr_col = cosine_lr(step, job.steps, job.lr_colors, job.lr_min)
            lr_log = cosine_lr(step, job.steps, job.lr_logits, job.lr_min)
            for i, st in enumerate(states):
                if job.optimize_positions:
                    st.keypoints[:, :2] = adam_pos[i].step(
                        st.keypoints[:, :2], kp_grads[i][:, :2], lr_pos
                    )
                if job.optimize_widths:
                    st.keypoints[:, 2] = adam_wid[i].step(
                        st.keypoints[:, 2], kp_grads[i][:, 2], lr_wid
                    )
                    st.keypoints[:, 2] = np.clip(
                        st.keypoints[:, 2], job.width_min, job.width_max
                    )
                if job.optimize_colors and soft_colors[i] is None:
                    scene.paths[i].color = np.clip(
                        adam_col[i].step(scene.paths[i].color, color_grads[i], lr_col),
                        0.0,
                        1.0,
                    )
                if scene.paths[i].logits is not None:
                    scene.paths[i].logits = adam_log[i].step(
                        scene.paths[i].logits, logit_grads[i], lr_log
                    )

            if (
                job.checkpoint_dir
                and job.checkpoint_every
                and (step + 1) % job.checkpoint_every == 0
            ):
                _write_checkpoint(job, states, step + 1)
    except L.NonFiniteLossError as exc:
        _sync_scene(scene, last_good)
        raise EngineAbort(str(exc), len(trace), scene, trace) from exc
    finally:
        if provider is not None:
            provider.close()

    _sync_scene(scene, [st.keypoints for st in states])
    final = render_scene(
        scene, job.samples_per_segment, job.raster, hard_colors=True
    )
    if job.trace_path:
        write_trace(trace, term_names, job.trace_path)
    return RunResult(
        scene=scene, trace=trace, canvas=final.pixels, term_names=term_names
    )


def _sync_scene(scene: Scene, keypoint_arrays):
    for sp, kp in zip(scene.paths, keypoint_arrays):
        sp.path = replace(sp.path, keypoints=kp.copy())


def _write_checkpoint(job: OptimJob, states, step):
    from pathlib import Path

    from .pngio import write_png
    from .svgio import export_svg

    _sync_scene(job.scene, [st.keypoints for st in states])
    out = Path(job.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    canvas = render_scene(job.scene, job.samples_per_segment, job.raster)
    write_png(out / f"step_{step:05d}.png", canvas.pixels)
    (out / f"step_{step:05d}.svg").write_text(
        export_svg(job.scene, samples_per_segment=job.samples_per_segment)
    )


def write_trace(trace: list, term_names: list, path) -> None:
    """Trace CSV: one row per step with every term value and the total."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", *term_names, "total"])
        for row in trace:
            writer.writerow(
                [row["step"]]
                + ["%.17g" % row[name] for name in term_names]
                + ["%.17g" % row["total"]]
            )
