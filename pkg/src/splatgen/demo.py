"""Synthetic splat assets and a ready-to-run scene, for trials and tests.

Real captures should be preferred for actual dataset work; these
procedurally built clouds exist so the full pipeline can run out of the
box and so tests have small, controlled assets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset_io import write_json
from .rasterizer import FieldStyle
from .scene import PlacementSpec, Range, SceneSpec, save_scene_spec
from . import scene as _scene
from .splats import SH_C0, SplatCloud, save_ply

BALL_RADIUS = 0.11


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack(
        [np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth), np.cos(polar)],
        axis=-1,
    )


def _dc_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """DC coefficients that reproduce rgb under the 0.5-offset convention."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def make_ball_cloud(
    radius: float = BALL_RADIUS, n: int = 500, seed: int = 7, sh_degree: int = 1
) -> SplatCloud:
    """Panelled ball: white shell with dark patches, splats on the surface."""
    rng = np.random.default_rng(seed)
    dirs = _fibonacci_sphere(n)
    means = dirs * radius * rng.uniform(0.985, 1.015, (n, 1))
    spacing = np.sqrt(4.0 * np.pi * radius * radius / n)
    scales = np.full((n, 3), 0.62 * spacing) * rng.uniform(0.85, 1.15, (n, 3))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    opacities = np.full(n, 0.93)

    polar = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    azimuth = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
    dark = (np.floor(polar / np.pi * 4.0) + np.floor(azimuth / (2.0 * np.pi) * 8.0)) % 2 == 0
    rgb = np.where(dark[:, None], [0.08, 0.08, 0.10], [0.92, 0.92, 0.90])

    c = (sh_degree + 1) ** 2
    sh = np.zeros((n, c, 3))
    sh[:, 0, :] = _dc_from_rgb(rgb)
    if c > 1:
        sh[:, 1:, :] = rng.normal(0.0, 0.02, (n, c - 1, 3))
    return SplatCloud(means, scales, rotations, opacities, sh)


def _box_surface(rng: np.random.Generator, n: int, size, center) -> np.ndarray:
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    pts = np.zeros((n, 3))
    for f in range(6):
        sel = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        other = [a for a in range(3) if a != axis]
        pts[sel, axis] = sign * (size[axis] / 2.0)
        pts[sel, other[0]] = u[sel] * size[other[0]]
        pts[sel, other[1]] = v[sel] * size[other[1]]
    return pts + np.asarray(center, dtype=np.float64)


def make_robot_cloud(height: float = 0.58, n: int = 900, seed: int = 11) -> SplatCloud:
    """Blocky humanoid: torso plus head, base resting on z = 0."""
    rng = np.random.default_rng(seed)
    torso_h = 0.70 * height
    head_h = 0.22 * height
    torso_size = (0.42 * height, 0.34 * height, torso_h)
    head_size = (0.26 * height, 0.26 * height, head_h)
    n_torso = int(n * 0.72)
    n_head = n - n_torso
    torso = _box_surface(rng, n_torso, torso_size, (0.0, 0.0, torso_h / 2.0))
    head = _box_surface(rng, n_head, head_size, (0.0, 0.0, torso_h + 0.06 * height + head_h / 2.0))
    means = np.concatenate([torso, head])

    body_rgb = np.tile([0.16, 0.18, 0.22], (n_torso, 1))
    band = (torso[:, 2] > 0.55 * torso_h) & (torso[:, 0] > 0.0)
    body_rgb[band] = [0.10, 0.45, 0.62]
    head_rgb = np.tile([0.55, 0.55, 0.58], (n_head, 1))
    visor = head[:, 0] > 0.4 * head_size[0]
    head_rgb[visor] = [0.08, 0.08, 0.12]
    rgb = np.concatenate([body_rgb, head_rgb])

    spacing = np.sqrt((2 * (torso_size[0] * torso_size[2])) / n) * 1.4
    scales = np.full((n, 3), 0.62 * spacing) * rng.uniform(0.8, 1.2, (n, 3))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    opacities = np.full(n, 0.95)
    sh = np.zeros((n, 4, 3))
    sh[:, 0, :] = _dc_from_rgb(rgb)
    sh[:, 1:, :] = rng.normal(0.0, 0.015, (n, 3, 3))
    return SplatCloud(means, scales, rotations, opacities, sh)


def demo_scene_spec(assets_path: str) -> SceneSpec:
    return SceneSpec(
        image=_scene.ImageSpec(width=960, height=540),
        field=_scene.FieldSpec(enabled=True, style=FieldStyle()),
        min_separation=0.6,
        placements=(
            PlacementSpec(
                asset="ball", count=(1, 3),
                x=Range(-3.0, 3.0), y=Range(-2.0, 2.0), z=Range(BALL_RADIUS, BALL_RADIUS),
            ),
            PlacementSpec(
                asset="robot", count=(0, 2),
                x=Range(-3.0, 3.0), y=Range(-2.0, 2.0),
                scale=Range(0.9, 1.1),
            ),
        ),
        assets_path=assets_path,
    )


def write_demo_assets(out_dir: str | Path) -> dict[str, Path]:
    """Create ball/robot assets, a manifest, and a scene spec under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ball_path = out_dir / "ball.ply"
    robot_path = out_dir / "robot.ply"
    save_ply(make_ball_cloud(), ball_path)
    save_ply(make_robot_cloud(), robot_path)
    manifest_path = out_dir / "assets.json"
    write_json(
        manifest_path,
        {
            "classes": ["ball", "robot"],
            "assets": {
                "ball": {"path": "ball.ply", "class": "ball"},
                "robot": {"path": "robot.ply", "class": "robot"},
            },
        },
    )
    spec_path = out_dir / "scene.yaml"
    save_scene_spec(demo_scene_spec("assets.json"), spec_path)
    return {
        "ball": ball_path, "robot": robot_path,
        "manifest": manifest_path, "spec": spec_path,
    }
