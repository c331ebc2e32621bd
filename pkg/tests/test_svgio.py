"""Tests for SVG export, scene persistence, and outline geometry."""

import numpy as np
import pytest

from inkspline.engine import Scene, ScenePath, render_scene
from inkspline.raster import Drawable, render
from inkspline.splines import KeyPointPath
from inkspline.svgio import (
    SvgError,
    export_svg,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    stroke_outline,
    validate_svg,
)


def stroke_scene(size=48, seed=0, closed=False):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    kp = np.column_stack(
        [
            size / 2 + size / 4 * np.cos(t) + rng.uniform(-1, 1, 8),
            size / 2 + size / 4 * np.sin(t) + rng.uniform(-1, 1, 8),
            rng.uniform(1.0, 3.0, 8),
        ]
    )
    path = KeyPointPath(kp, degree=5, closed=closed)
    return Scene([ScenePath(path, "stroke", color=np.zeros(1))], size, size)


class TestExport:
    def test_empty_scene_valid(self):
        svg = export_svg(Scene([], 32, 24))
        assert validate_svg(svg)
        assert '<rect width="32" height="24"' in svg

    def test_open_stroke_valid(self):
        svg = export_svg(stroke_scene())
        assert validate_svg(svg)
        assert "centerlines" in svg

    def test_closed_stroke_valid(self):
        svg = export_svg(stroke_scene(closed=True))
        assert validate_svg(svg)

    def test_fill_uses_cubic_path(self):
        kp = np.column_stack(
            [[10.0, 30, 30, 10], [10.0, 10, 30, 30], np.zeros(4)]
        )
        scene = Scene(
            [ScenePath(KeyPointPath(kp, degree=3, closed=True), "fill",
                       color=np.array([0.3]))],
            40, 40,
        )
        svg = export_svg(scene)
        assert validate_svg(svg)
        assert " C " in svg

    def test_quantized_scene_uses_hard_colors(self):
        palette = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        kp = np.column_stack([[5.0, 20, 20, 5], [5.0, 5, 20, 20], np.zeros(4)])
        sp = ScenePath(
            KeyPointPath(kp, degree=3, closed=True),
            "fill",
            color=np.zeros(3),
            logits=np.array([3.0, -1.0]),
        )
        svg = export_svg(Scene([sp], 25, 25, channels=3, palette=palette))
        assert "#ff0000" in svg


class TestSceneRoundTrip:
    def test_dict_round_trip(self):
        scene = stroke_scene(seed=3)
        back = scene_from_dict(scene_to_dict(scene))
        assert np.array_equal(
            back.paths[0].path.keypoints, scene.paths[0].path.keypoints
        )
        assert back.paths[0].path.degree == 5

    def test_svg_round_trip(self, tmp_path):
        scene = stroke_scene(seed=4)
        p = tmp_path / "scene.svg"
        save_scene(scene, p)
        back = load_scene(p)
        assert np.allclose(
            back.paths[0].path.keypoints, scene.paths[0].path.keypoints
        )
        # re-rendering the reloaded scene matches the original render
        a = render_scene(scene).pixels
        b = render_scene(back).pixels
        assert np.array_equal(a, b)

    def test_json_round_trip(self, tmp_path):
        scene = stroke_scene(seed=5)
        p = tmp_path / "scene.json"
        save_scene(scene, p)
        back = load_scene(p)
        assert np.array_equal(
            back.paths[0].path.keypoints, scene.paths[0].path.keypoints
        )

    def test_load_rejects_plain_svg(self, tmp_path):
        p = tmp_path / "plain.svg"
        p.write_text("<svg xmlns='http://www.w3.org/2000/svg'/>")
        with pytest.raises(SvgError):
            load_scene(p)


class TestOutlineGeometry:
    def test_constant_width_capsule_hausdorff(self):
        # straight constant-width stroke: outline within 0.5 px of the capsule
        p = np.column_stack([np.linspace(10, 40, 25), np.full(25, 20.0)])
        r = np.full(25, 5.0)
        outline = stroke_outline(p, r, cap_samples=24)

        def capsule_distance(q):
            # distance from q to the capsule boundary (segment dilated by r)
            a, b = np.array([10.0, 20.0]), np.array([40.0, 20.0])
            t = np.clip(np.dot(q - a, b - a) / np.dot(b - a, b - a), 0, 1)
            d_center = np.linalg.norm(q - (a + t * (b - a)))
            return abs(d_center - 5.0)

        worst = max(capsule_distance(q) for q in outline)
        assert worst < 0.5

    def test_rerender_of_outline_matches_stroke(self):
        # rasterizing the exported outline as a fill approximates the
        # internal stroke render to < 2/255 mean abs difference
        size = 96
        t = np.linspace(0.2, 0.8 * np.pi, 40)
        pts = np.column_stack(
            [15 + 60 * t / np.pi, 45 + 18 * np.sin(t)]
        )
        radii = np.full(len(pts), 4.0)
        stroke = Drawable(pts, radii, "stroke", color=[0.0])
        direct = render([stroke], size, size, channels=1).pixels
        outline = stroke_outline(pts, radii, cap_samples=24)
        filled = Drawable(outline, np.zeros(len(outline)), "fill", color=[0.0])
        from_outline = render([filled], size, size, channels=1).pixels
        mean_diff = float(np.mean(np.abs(direct - from_outline)))
        assert mean_diff < 2.0 / 255.0
