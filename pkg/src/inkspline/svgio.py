"""SVG 1.1 export and scene persistence.

SVG has no variable-width strokes, so strokes are exported as filled outline
polygons: the sampled centerline offset left/right by the local radius with
round caps.  The centerline itself is embedded as a constant-width cubic
path in a hidden metadata layer, and the full scene (key-points, colors,
palette, logits) is serialized as JSON inside <metadata>, which makes every
exported SVG re-importable by load_scene.  Quantized scenes export hard
palette colors.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as etree
from pathlib import Path

import numpy as np

from .bezier import chain_sampling_matrix, make_pipeline, to_cubic
from .engine import Scene, ScenePath
from .palette import hard_assign
from .splines import KeyPointPath, build_spline


class SvgError(ValueError):
    """Malformed scene file."""


SCENE_FORMAT_VERSION = 1


def _color_hex(color: np.ndarray) -> str:
    c = np.atleast_1d(np.asarray(color, dtype=float))
    if c.size == 1:
        c = np.repeat(c, 3)
    elif c.size == 4:
        c = c[:3]
    vals = np.clip(np.round(c * 255), 0, 255).astype(int)
    return "#%02x%02x%02x" % tuple(vals)


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def _normals(points: np.ndarray) -> np.ndarray:
    tan = np.empty_like(points)
    tan[1:-1] = points[2:] - points[:-2]
    tan[0] = points[1] - points[0]
    tan[-1] = points[-1] - points[-2]
    norm = np.linalg.norm(tan, axis=1)
    # reuse the previous direction across degenerate (zero-speed) samples
    for i in range(len(tan)):
        if norm[i] < 1e-12:
            tan[i] = tan[i - 1] if i > 0 else np.array([1.0, 0.0])
            norm[i] = np.linalg.norm(tan[i])
    tan /= norm[:, None]
    return np.column_stack([-tan[:, 1], tan[:, 0]]), tan


def stroke_outline(
    points: np.ndarray, radii: np.ndarray, cap_samples: int = 16
) -> np.ndarray:
    """Closed outline polygon of a variable-width open stroke with round caps."""
    p = np.asarray(points, dtype=float)
    r = np.maximum(np.asarray(radii, dtype=float), 0.0)
    normals, tangents = _normals(p)
    left = p + r[:, None] * normals
    right = p - r[:, None] * normals
    s = np.linspace(0.0, 1.0, cap_samples + 2)[1:-1]
    # end cap: from +n around through the forward tangent to -n
    phi1 = np.arctan2(tangents[-1, 1], tangents[-1, 0])
    ang1 = phi1 + np.pi / 2 - s * np.pi
    end_cap = p[-1] + r[-1] * np.column_stack([np.cos(ang1), np.sin(ang1)])
    # start cap: from -n backward through the reversed tangent to +n
    phi0 = np.arctan2(tangents[0, 1], tangents[0, 0])
    ang0 = phi0 - np.pi / 2 - s * np.pi
    start_cap = p[0] + r[0] * np.column_stack([np.cos(ang0), np.sin(ang0)])
    return np.vstack([left, end_cap, right[::-1], start_cap])


def _closed_stroke_rings(points, radii):
    """Outer/inner rings for a closed stroke (seam sample duplicated)."""
    p = np.asarray(points, dtype=float)[:-1]
    r = np.maximum(np.asarray(radii, dtype=float), 0.0)[:-1]
    tan = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
    norm = np.maximum(np.linalg.norm(tan, axis=1), 1e-12)
    tan = tan / norm[:, None]
    normals = np.column_stack([-tan[:, 1], tan[:, 0]])
    return p + r[:, None] * normals, p - r[:, None] * normals


def _polygon_path(points: np.ndarray) -> str:
    coords = " L ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in points)
    return f"M {coords} Z"


def _cubic_path(chain_points: np.ndarray, close: bool) -> str:
    pts = chain_points[:, :2]
    out = [f"M {_fmt(pts[0, 0])} {_fmt(pts[0, 1])}"]
    for j in range(0, len(pts) - 1, 3):
        c1, c2, c3 = pts[j + 1], pts[j + 2], pts[j + 3]
        out.append(
            "C "
            + " ".join(_fmt(v) for v in (c1[0], c1[1], c2[0], c2[1], c3[0], c3[1]))
        )
    if close:
        out.append("Z")
    return " ".join(out)


def _path_chain(sp: ScenePath):
    spline = build_spline(sp.path)
    pipe = make_pipeline(sp.path.degree, spline.n, closed=sp.path.closed)
    return to_cubic(spline.control_points, pipe), pipe


def _display_color(sp: ScenePath, scene: Scene) -> np.ndarray:
    if sp.logits is not None and scene.palette is not None:
        return hard_assign(sp.logits, scene.palette)
    return sp.color


def export_svg(scene: Scene, samples_per_segment: int = 8) -> str:
    """Serialize the scene as an SVG 1.1 document string."""
    w, h = scene.width, scene.height
    bg = _color_hex(np.broadcast_to(
        np.atleast_1d(np.asarray(scene.background, dtype=float)), (scene.channels,)
    ))
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f"<metadata id=\"scene-json\"><![CDATA[{json.dumps(scene_to_dict(scene))}]]>"
        "</metadata>",
        f'<rect width="{w}" height="{h}" fill="{bg}"/>',
        '<g id="drawables">',
    ]
    centerlines = []
    for sp in scene.paths:
        chain, pipe = _path_chain(sp)
        sampler = chain_sampling_matrix(pipe.segment_count, samples_per_segment)
        poly = sampler @ chain.points
        color = _color_hex(_display_color(sp, scene))
        opacity = _fmt(sp.opacity)
        if sp.kind == "fill":
            d = _cubic_path(chain.points, close=True)
            parts.append(f'<path d="{d}" fill="{color}" fill-opacity="{opacity}"/>')
        else:
            if sp.path.closed:
                outer, inner = _closed_stroke_rings(poly[:, :2], poly[:, 2])
                d = _polygon_path(outer) + " " + _polygon_path(inner[::-1])
                parts.append(
                    f'<path d="{d}" fill="{color}" fill-opacity="{opacity}" '
                    'fill-rule="evenodd"/>'
                )
            else:
                outline = stroke_outline(poly[:, :2], poly[:, 2])
                parts.append(
                    f'<path d="{_polygon_path(outline)}" fill="{color}" '
                    f'fill-opacity="{opacity}"/>'
                )
            mean_w = 2.0 * float(np.mean(np.maximum(poly[:, 2], 0.0)))
            centerlines.append(
                f'<path d="{_cubic_path(chain.points, close=sp.path.closed)}" '
                f'fill="none" stroke="{color}" stroke-width="{_fmt(mean_w)}"/>'
            )
    parts.append("</g>")
    parts.append('<g id="centerlines" display="none">')
    parts.extend(centerlines)
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "format": SCENE_FORMAT_VERSION,
        "width": scene.width,
        "height": scene.height,
        "channels": scene.channels,
        "background": np.atleast_1d(
            np.asarray(scene.background, dtype=float)
        ).tolist(),
        "palette": None if scene.palette is None else scene.palette.tolist(),
        "paths": [
            {
                "keypoints": sp.path.keypoints.tolist(),
                "multiplicities": sp.path.multiplicities.tolist(),
                "closed": sp.path.closed,
                "degree": sp.path.degree,
                "kind": sp.kind,
                "color": sp.color.tolist(),
                "opacity": sp.opacity,
                "logits": None if sp.logits is None else sp.logits.tolist(),
            }
            for sp in scene.paths
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    if data.get("format") != SCENE_FORMAT_VERSION:
        raise SvgError(f"unsupported scene format {data.get('format')!r}")
    paths = []
    for p in data["paths"]:
        paths.append(
            ScenePath(
                path=KeyPointPath(
                    np.asarray(p["keypoints"], dtype=float),
                    closed=p["closed"],
                    degree=p["degree"],
                    multiplicities=np.asarray(p["multiplicities"], dtype=int),
                ),
                kind=p["kind"],
                color=np.asarray(p["color"], dtype=float),
                opacity=float(p["opacity"]),
                logits=None if p["logits"] is None else np.asarray(p["logits"]),
            )
        )
    return Scene(
        paths=paths,
        width=int(data["width"]),
        height=int(data["height"]),
        channels=int(data["channels"]),
        background=np.asarray(data["background"], dtype=float),
        palette=None if data["palette"] is None else np.asarray(data["palette"]),
    )


def save_scene(scene: Scene, path) -> None:
    """Write a scene as .json or as .svg with embedded metadata."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(scene_to_dict(scene), indent=1))
    else:
        path.write_text(export_svg(scene))


def load_scene(path) -> Scene:
    """Read a scene from .json or from the metadata of an exported .svg."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return scene_from_dict(json.loads(text))
    match = re.search(r"<!\[CDATA\[(.*?)\]\]>", text, re.DOTALL)
    if not match:
        raise SvgError(f"{path} carries no embedded scene metadata")
    return scene_from_dict(json.loads(match.group(1)))


_PATH_GRAMMAR = re.compile(
    r"^[MLCZmlcz0-9eE+.,\s-]+$"
)


def validate_svg(text: str) -> bool:
    """Well-formed XML whose path data uses only SVG 1.1 M/L/C/Z commands."""
    root = etree.fromstring(text)
    ns = "{http://www.w3.org/2000/svg}"
    assert root.tag in ("svg", f"{ns}svg")
    for el in root.iter():
        if el.tag.endswith("path"):
            d = el.get("d", "")
            if not _PATH_GRAMMAR.match(d):
                return False
            if not re.match(r"^\s*[Mm]", d):
                return False
    return True
