"""Key-point B-spline strokes with differentiable rasterization and fitting."""

from .bezier import (
    BezierChain,
    ConversionPipeline,
    chain_backward,
    conversion_block,
    make_pipeline,
    reduction_block,
    to_cubic,
)
from .engine import Adam, OptimJob, RunResult, Scene, ScenePath, cosine_lr, run
from .losses import LossWeights
from .raster import BlurPyramid, Canvas, Drawable, render, render_backward
from .smoothing import GramOperator, dimensionless_jerk, gram_exact, gram_pspline, smooth_cost
from .splines import (
    KeyPointPath,
    SamplingMap,
    SplineCurve,
    build_spline,
    cardinal_basis,
    derivative_spline,
    eval_spline,
    sampling_map,
)
from .svgio import export_svg, load_scene, save_scene

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BezierChain",
    "BlurPyramid",
    "Canvas",
    "ConversionPipeline",
    "Drawable",
    "GramOperator",
    "KeyPointPath",
    "LossWeights",
    "OptimJob",
    "RunResult",
    "SamplingMap",
    "Scene",
    "ScenePath",
    "SplineCurve",
    "build_spline",
    "cardinal_basis",
    "chain_backward",
    "conversion_block",
    "cosine_lr",
    "derivative_spline",
    "dimensionless_jerk",
    "eval_spline",
    "export_svg",
    "gram_exact",
    "gram_pspline",
    "load_scene",
    "make_pipeline",
    "reduction_block",
    "render",
    "render_backward",
    "run",
    "sampling_map",
    "save_scene",
    "smooth_cost",
    "to_cubic",
]
