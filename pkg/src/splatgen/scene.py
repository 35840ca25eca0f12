"""Scene specification, per-frame randomization, and instance resolution.

A scene spec is a YAML file that fully determines a dataset except for the
master seed: camera model and rig ranges, ground-plane styling, backdrop
mode, exposure range, and per-asset placement ranges. Frame sampling is a
pure function of (spec, master seed, frame index), which is what makes
generation reproducible and parallelizable.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .camera import CameraPose, Intrinsics, intrinsics_from_fov, pose_from_yaw_pitch
from .errors import AssetLookupError, ConfigError, SamplingError
from .rasterizer import (
    FieldStyle,
    field_backdrop,
    flat_backdrop,
    gradient_backdrop,
)
from .rotation import quat_from_yaw
from .splats import Bounds, SimilarityTransform, SplatCloud, load_ply, transform_cloud

SPEC_VERSION = 1

_MASK64 = (1 << 64) - 1

# Instance placement gives up after this many rejection-sampling attempts.
MAX_PLACEMENT_ATTEMPTS = 100


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def seed_for_frame(master_seed: int, frame_index: int) -> int:
    """Stable 64-bit stream seed for one frame."""
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ (frame_index & _MASK64))


def frame_rng(master_seed: int, frame_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_for_frame(master_seed, frame_index)))


@dataclass(frozen=True)
class Range:
    """Closed interval sampled uniformly; lo == hi pins the value."""

    lo: float
    hi: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def to_value(self):
        return self.lo if self.lo == self.hi else [self.lo, self.hi]


def _parse_range(value, name: str, minimum: float | None = None) -> Range:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        lo = hi = float(value)
    elif isinstance(value, (list, tuple)) and len(value) == 2:
        lo, hi = float(value[0]), float(value[1])
    else:
        raise ConfigError(f"{name}: expected a number or [lo, hi], got {value!r}")
    if lo > hi:
        raise ConfigError(f"{name}: lo {lo} exceeds hi {hi}")
    if minimum is not None and lo < minimum:
        raise ConfigError(f"{name}: values below {minimum} are not allowed")
    return Range(lo, hi)


def _parse_rgb(value, name: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{name}: expected [r, g, b], got {value!r}")
    rgb = tuple(float(v) for v in value)
    if any(v < 0.0 or v > 1.0 for v in rgb):
        raise ConfigError(f"{name}: channels must lie in [0, 1]")
    return rgb


def _check_keys(mapping: dict, allowed: set[str], context: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {context}")


@dataclass(frozen=True)
class ImageSpec:
    width: int = 1280
    height: int = 720

    @classmethod
    def from_dict(cls, data: dict) -> "ImageSpec":
        _check_keys(data, {"width", "height"}, "image")
        out = cls(int(data.get("width", 1280)), int(data.get("height", 720)))
        if out.width <= 0 or out.height <= 0:
            raise ConfigError(f"image: size must be positive, got {out.width}x{out.height}")
        return out

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height}


@dataclass(frozen=True)
class CameraSpec:
    hfov_deg: float = 110.0
    vfov_deg: float = 70.0
    near: float = 0.05
    far: float = 100.0

    @classmethod
    def from_dict(cls, data: dict) -> "CameraSpec":
        _check_keys(data, {"hfov_deg", "vfov_deg", "near", "far"}, "camera")
        return cls(
            float(data.get("hfov_deg", 110.0)), float(data.get("vfov_deg", 70.0)),
            float(data.get("near", 0.05)), float(data.get("far", 100.0)),
        )

    def to_dict(self) -> dict:
        return {"hfov_deg": self.hfov_deg, "vfov_deg": self.vfov_deg,
                "near": self.near, "far": self.far}

    def intrinsics(self, image: ImageSpec) -> Intrinsics:
        return intrinsics_from_fov(
            image.width, image.height, self.hfov_deg, self.vfov_deg, self.near, self.far
        )


@dataclass(frozen=True)
class RigSpec:
    """Where the camera may stand and how it may aim."""

    x: Range = Range(-4.0, -2.5)
    y: Range = Range(-1.5, 1.5)
    height: Range = Range(0.45, 1.1)
    yaw_deg: Range = Range(-25.0, 25.0)
    pitch_deg: Range = Range(4.0, 22.0)

    @classmethod
    def from_dict(cls, data: dict) -> "RigSpec":
        _check_keys(data, {"x", "y", "height", "yaw_deg", "pitch_deg"}, "rig")
        base = cls()
        return cls(
            x=_parse_range(data["x"], "rig.x") if "x" in data else base.x,
            y=_parse_range(data["y"], "rig.y") if "y" in data else base.y,
            height=_parse_range(data["height"], "rig.height") if "height" in data else base.height,
            yaw_deg=_parse_range(data["yaw_deg"], "rig.yaw_deg") if "yaw_deg" in data else base.yaw_deg,
            pitch_deg=_parse_range(data["pitch_deg"], "rig.pitch_deg")
            if "pitch_deg" in data else base.pitch_deg,
        )

    def to_dict(self) -> dict:
        return {"x": self.x.to_value(), "y": self.y.to_value(),
                "height": self.height.to_value(), "yaw_deg": self.yaw_deg.to_value(),
                "pitch_deg": self.pitch_deg.to_value()}


@dataclass(frozen=True)
class FieldSpec:
    enabled: bool = True
    style: FieldStyle = FieldStyle()

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSpec":
        allowed = {"enabled", "half_length", "half_width", "line_width", "circle_radius",
                   "stripe_period", "grass_color", "grass_color_alt", "line_color"}
        _check_keys(data, allowed, "field")
        default = FieldStyle()
        style = FieldStyle(
            half_length=float(data.get("half_length", default.half_length)),
            half_width=float(data.get("half_width", default.half_width)),
            line_width=float(data.get("line_width", default.line_width)),
            circle_radius=float(data.get("circle_radius", default.circle_radius)),
            stripe_period=float(data.get("stripe_period", default.stripe_period)),
            grass_color=_parse_rgb(data["grass_color"], "field.grass_color")
            if "grass_color" in data else default.grass_color,
            grass_color_alt=_parse_rgb(data["grass_color_alt"], "field.grass_color_alt")
            if "grass_color_alt" in data else default.grass_color_alt,
            line_color=_parse_rgb(data["line_color"], "field.line_color")
            if "line_color" in data else default.line_color,
        )
        if style.half_length <= 0 or style.half_width <= 0:
            raise ConfigError("field: half_length and half_width must be positive")
        return cls(enabled=bool(data.get("enabled", True)), style=style)

    def to_dict(self) -> dict:
        s = self.style
        return {"enabled": self.enabled, "half_length": s.half_length,
                "half_width": s.half_width, "line_width": s.line_width,
                "circle_radius": s.circle_radius, "stripe_period": s.stripe_period,
                "grass_color": list(s.grass_color), "grass_color_alt": list(s.grass_color_alt),
                "line_color": list(s.line_color)}


def _parse_rgb_range(value, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Either a fixed [r, g, b] or {low: [...], high: [...]}."""
    if isinstance(value, dict):
        _check_keys(value, {"low", "high"}, name)
        low = np.array(_parse_rgb(value.get("low", [0, 0, 0]), f"{name}.low"))
        high = np.array(_parse_rgb(value.get("high", [1, 1, 1]), f"{name}.high"))
        if (low > high).any():
            raise ConfigError(f"{name}: low exceeds high")
        return low, high
    rgb = np.array(_parse_rgb(value, name))
    return rgb, rgb


def _rgb_range_to_value(low: np.ndarray, high: np.ndarray):
    if np.array_equal(low, high):
        return [float(v) for v in low]
    return {"low": [float(v) for v in low], "high": [float(v) for v in high]}


@dataclass(frozen=True)
class BackgroundSpec:
    """Backdrop behind the field: flat color, vertical gradient, or plates."""

    mode: str = "gradient"
    color_low: np.ndarray = dc_field(default_factory=lambda: np.array([0.45, 0.50, 0.55]))
    color_high: np.ndarray = dc_field(default_factory=lambda: np.array([0.55, 0.60, 0.65]))
    top_low: np.ndarray = dc_field(default_factory=lambda: np.array([0.25, 0.33, 0.50]))
    top_high: np.ndarray = dc_field(default_factory=lambda: np.array([0.40, 0.48, 0.65]))
    bottom_low: np.ndarray = dc_field(default_factory=lambda: np.array([0.55, 0.60, 0.70]))
    bottom_high: np.ndarray = dc_field(default_factory=lambda: np.array([0.70, 0.75, 0.85]))
    plates: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path) -> "BackgroundSpec":
        _check_keys(data, {"mode", "color", "top", "bottom", "plates"}, "background")
        mode = data.get("mode", "gradient")
        if mode not in ("color", "gradient", "plates"):
            raise ConfigError(f"background.mode: unknown mode {mode!r}")
        kwargs: dict = {"mode": mode}
        if "color" in data:
            kwargs["color_low"], kwargs["color_high"] = _parse_rgb_range(
                data["color"], "background.color"
            )
        if "top" in data:
            kwargs["top_low"], kwargs["top_high"] = _parse_rgb_range(data["top"], "background.top")
        if "bottom" in data:
            kwargs["bottom_low"], kwargs["bottom_high"] = _parse_rgb_range(
                data["bottom"], "background.bottom"
            )
        if mode == "plates":
            plates = data.get("plates", [])
            if not isinstance(plates, list) or not plates:
                raise ConfigError("background.plates: a non-empty list of images is required")
            kwargs["plates"] = tuple(str((base_dir / p).resolve()) for p in plates)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode}
        if self.mode == "color":
            out["color"] = _rgb_range_to_value(self.color_low, self.color_high)
        elif self.mode == "gradient":
            out["top"] = _rgb_range_to_value(self.top_low, self.top_high)
            out["bottom"] = _rgb_range_to_value(self.bottom_low, self.bottom_high)
        else:
            out["plates"] = list(self.plates)
        return out


@dataclass(frozen=True)
class PlacementSpec:
    """Randomization ranges for instances of one asset."""

    asset: str
    count: tuple[int, int] = (1, 1)
    x: Range = Range(-3.5, 3.5)
    y: Range = Range(-2.5, 2.5)
    z: Range = Range(0.0, 0.0)
    yaw_deg: Range = Range(0.0, 360.0)
    scale: Range = Range(1.0, 1.0)

    @classmethod
    def from_dict(cls, data: dict, index: int) -> "PlacementSpec":
        context = f"placements[{index}]"
        _check_keys(data, {"asset", "count", "x", "y", "z", "yaw_deg", "scale"}, context)
        if "asset" not in data:
            raise ConfigError(f"{context}: missing required key 'asset'")
        count_raw = data.get("count", 1)
        if isinstance(count_raw, int):
            count = (count_raw, count_raw)
        elif isinstance(count_raw, (list, tuple)) and len(count_raw) == 2:
            count = (int(count_raw[0]), int(count_raw[1]))
        else:
            raise ConfigError(f"{context}.count: expected int or [lo, hi]")
        if count[0] < 0 or count[0] > count[1]:
            raise ConfigError(f"{context}.count: need 0 <= lo <= hi, got {count}")
        base = cls(asset="")
        return cls(
            asset=str(data["asset"]),
            count=count,
            x=_parse_range(data["x"], f"{context}.x") if "x" in data else base.x,
            y=_parse_range(data["y"], f"{context}.y") if "y" in data else base.y,
            z=_parse_range(data["z"], f"{context}.z") if "z" in data else base.z,
            yaw_deg=_parse_range(data["yaw_deg"], f"{context}.yaw_deg")
            if "yaw_deg" in data else base.yaw_deg,
            scale=_parse_range(data["scale"], f"{context}.scale", minimum=1e-6)
            if "scale" in data else base.scale,
        )

    def to_dict(self) -> dict:
        return {
            "asset": self.asset,
            "count": self.count[0] if self.count[0] == self.count[1] else list(self.count),
            "x": self.x.to_value(), "y": self.y.to_value(), "z": self.z.to_value(),
            "yaw_deg": self.yaw_deg.to_value(), "scale": self.scale.to_value(),
        }


@dataclass(frozen=True)
class AnnotationSpec:
    mode: str = "mask"
    mask_threshold: float = 0.05
    min_pixel_area: float = 25.0
    min_visibility: float = 0.1

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationSpec":
        _check_keys(
            data, {"mode", "mask_threshold", "min_pixel_area", "min_visibility"}, "annotation"
        )
        mode = data.get("mode", "mask")
        if mode not in ("corners", "mask"):
            raise ConfigError(f"annotation.mode: unknown mode {mode!r}")
        return cls(
            mode=mode,
            mask_threshold=float(data.get("mask_threshold", 0.05)),
            min_pixel_area=float(data.get("min_pixel_area", 25.0)),
            min_visibility=float(data.get("min_visibility", 0.1)),
        )

    def to_dict(self) -> dict:
        return {"mode": self.mode, "mask_threshold": self.mask_threshold,
                "min_pixel_area": self.min_pixel_area, "min_visibility": self.min_visibility}


@dataclass(frozen=True)
class RenderingSpec:
    sh_rotation: str = "exact"
    gamma: float = 2.2

    @classmethod
    def from_dict(cls, data: dict) -> "RenderingSpec":
        _check_keys(data, {"sh_rotation", "gamma"}, "rendering")
        sh_rotation = data.get("sh_rotation", "exact")
        if sh_rotation not in ("exact", "dc_only"):
            raise ConfigError(f"rendering.sh_rotation: unknown mode {sh_rotation!r}")
        gamma = float(data.get("gamma", 2.2))
        if gamma <= 0:
            raise ConfigError("rendering.gamma must be positive")
        return cls(sh_rotation=sh_rotation, gamma=gamma)

    def to_dict(self) -> dict:
        return {"sh_rotation": self.sh_rotation, "gamma": self.gamma}


DEFAULT_SPLIT = {"train": 0.8, "val": 0.1, "test": 0.1}


def _parse_split(data: dict) -> dict[str, float]:
    if not isinstance(data, dict) or not data:
        raise ConfigError("split: expected a mapping of split name to fraction")
    out = {}
    for name, frac in data.items():
        frac = float(frac)
        if frac < 0:
            raise ConfigError(f"split.{name}: fraction must be non-negative")
        out[str(name)] = frac
    total = sum(out.values())
    if abs(total - 1.0) > 1e-6:
        raise ConfigError(f"split: fractions must sum to 1, got {total}")
    return out


@dataclass(frozen=True)
class SceneSpec:
    """Fully resolved scene configuration."""

    image: ImageSpec = ImageSpec()
    camera: CameraSpec = CameraSpec()
    rig: RigSpec = RigSpec()
    field: FieldSpec = FieldSpec()
    background: BackgroundSpec = BackgroundSpec()
    exposure: Range = Range(0.6, 1.4)
    min_separation: float = 0.0
    placements: tuple[PlacementSpec, ...] = ()
    annotation: AnnotationSpec = AnnotationSpec()
    rendering: RenderingSpec = RenderingSpec()
    split: dict[str, float] = dc_field(default_factory=lambda: dict(DEFAULT_SPLIT))
    assets_path: str | None = None

    def intrinsics(self) -> Intrinsics:
        return self.camera.intrinsics(self.image)

    def to_dict(self) -> dict:
        return {
            "spec_version": SPEC_VERSION,
            "assets": self.assets_path,
            "image": self.image.to_dict(),
            "camera": self.camera.to_dict(),
            "rig": self.rig.to_dict(),
            "field": self.field.to_dict(),
            "background": self.background.to_dict(),
            "exposure": self.exposure.to_value(),
            "min_separation": self.min_separation,
            "placements": [p.to_dict() for p in self.placements],
            "annotation": self.annotation.to_dict(),
            "rendering": self.rendering.to_dict(),
            "split": dict(self.split),
        }


_TOP_KEYS = {"spec_version", "assets", "image", "camera", "rig", "field", "background",
             "exposure", "min_separation", "placements", "annotation", "rendering", "split"}


def parse_scene_spec(data: dict, base_dir: str | Path = ".") -> SceneSpec:
    """Validate a raw mapping into a SceneSpec; unknown keys are rejected."""
    base_dir = Path(base_dir)
    _check_keys(data, _TOP_KEYS, "scene spec")
    version = data.get("spec_version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise ConfigError(f"spec_version {version} is not supported (expected {SPEC_VERSION})")
    placements_raw = data.get("placements", [])
    if not isinstance(placements_raw, list):
        raise ConfigError("placements: expected a list")
    assets_path = data.get("assets")
    if assets_path is not None:
        assets_path = str((base_dir / assets_path).resolve())
    min_separation = float(data.get("min_separation", 0.0))
    if min_separation < 0:
        raise ConfigError("min_separation must be non-negative")
    return SceneSpec(
        image=ImageSpec.from_dict(data.get("image", {})),
        camera=CameraSpec.from_dict(data.get("camera", {})),
        rig=RigSpec.from_dict(data.get("rig", {})),
        field=FieldSpec.from_dict(data.get("field", {})),
        background=BackgroundSpec.from_dict(data.get("background", {}), base_dir),
        exposure=_parse_range(data.get("exposure", [0.6, 1.4]), "exposure", minimum=0.0),
        min_separation=min_separation,
        placements=tuple(
            PlacementSpec.from_dict(p, i) for i, p in enumerate(placements_raw)
        ),
        annotation=AnnotationSpec.from_dict(data.get("annotation", {})),
        rendering=RenderingSpec.from_dict(data.get("rendering", {})),
        split=_parse_split(data.get("split", dict(DEFAULT_SPLIT))),
        assets_path=assets_path,
    )


def load_scene_spec(path: str | Path) -> SceneSpec:
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: spec must be a YAML mapping")
    return parse_scene_spec(data, base_dir=path.parent)


def save_scene_spec(spec: SceneSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False)


@dataclass(frozen=True)
class AssetEntry:
    asset_id: str
    path: str
    class_name: str
    class_id: int


class AssetLibrary:
    """Loaded asset manifest; clouds are parsed lazily and cached."""

    def __init__(self, classes: list[str], entries: dict[str, AssetEntry]):
        self.classes = list(classes)
        self.entries = dict(entries)
        self._cache: dict[str, SplatCloud] = {}

    def entry(self, asset_id: str) -> AssetEntry:
        if asset_id not in self.entries:
            raise AssetLookupError(f"unknown asset id {asset_id!r}")
        return self.entries[asset_id]

    def load(self, asset_id: str) -> SplatCloud:
        if asset_id not in self._cache:
            self._cache[asset_id] = load_ply(self.entry(asset_id).path)
        return self._cache[asset_id]


def load_asset_manifest(path: str | Path) -> AssetLibrary:
    """Read an asset manifest: class list plus asset id -> file and class."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    _check_keys(data, {"classes", "assets"}, "asset manifest")
    classes = data.get("classes")
    assets = data.get("assets")
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ConfigError(f"{path}: 'classes' must be a list of names")
    if len(set(classes)) != len(classes):
        raise ConfigError(f"{path}: duplicate class names")
    if not isinstance(assets, dict) or not assets:
        raise ConfigError(f"{path}: 'assets' must be a non-empty mapping")
    entries = {}
    for asset_id, item in assets.items():
        _check_keys(item, {"path", "class"}, f"asset {asset_id!r}")
        if "path" not in item or "class" not in item:
            raise ConfigError(f"asset {asset_id!r}: 'path' and 'class' are required")
        if item["class"] not in classes:
            raise ConfigError(f"asset {asset_id!r}: class {item['class']!r} not in class list")
        entries[asset_id] = AssetEntry(
            asset_id=asset_id,
            path=str((path.parent / item["path"]).resolve()),
            class_name=item["class"],
            class_id=classes.index(item["class"]),
        )
    return AssetLibrary(classes, entries)


def validate_spec(spec: SceneSpec, library: AssetLibrary | None) -> list[str]:
    """Cross-checks that need both spec and assets; returns problem strings."""
    problems = []
    if not spec.placements:
        problems.append("spec places no assets; frames will be empty")
    if library is None:
        if spec.assets_path is None:
            problems.append("spec has no asset manifest and none was supplied")
        return problems
    for placement in spec.placements:
        if placement.asset not in library.entries:
            problems.append(f"placement references unknown asset {placement.asset!r}")
            continue
        entry = library.entries[placement.asset]
        if not Path(entry.path).is_file():
            problems.append(f"asset {placement.asset!r}: file not found: {entry.path}")
    return problems


@dataclass(frozen=True)
class BackgroundChoice:
    """Backdrop parameters fixed for one frame."""

    mode: str
    color: tuple[float, float, float] | None = None
    top: tuple[float, float, float] | None = None
    bottom: tuple[float, float, float] | None = None
    plate: str | None = None


@dataclass(frozen=True)
class InstancePose:
    instance_id: int
    asset_id: str
    position: np.ndarray  # (3,)
    yaw_deg: float
    scale: float


@dataclass
class FrameScene:
    """Everything sampled for one frame; rendering is deterministic from here."""

    frame_index: int
    seed: int
    pose: CameraPose
    exposure: float
    background: BackgroundChoice
    instances: list[InstancePose]
    warnings: list[str] = dc_field(default_factory=list)


def _sample_rgb(rng: np.random.Generator, low: np.ndarray, high: np.ndarray):
    return tuple(float(v) for v in rng.uniform(low, high))


def sample_frame(spec: SceneSpec, master_seed: int, frame_index: int) -> FrameScene:
    """Draw one frame's randomization.

    The draw order is fixed and part of the reproducibility contract:
    exposure, background, camera (x, y, height, yaw, pitch), then per
    placement entry its count followed by per-instance position attempts
    (x, y pairs until accepted), z, yaw, scale.

    Instances that cannot be placed without violating min_separation after
    MAX_PLACEMENT_ATTEMPTS tries are dropped with a warning; if drops push
    an entry below its minimum count the frame fails with SamplingError.
    """
    rng = frame_rng(master_seed, frame_index)
    exposure = spec.exposure.sample(rng)

    bg = spec.background
    if bg.mode == "color":
        background = BackgroundChoice(
            mode="color", color=_sample_rgb(rng, bg.color_low, bg.color_high)
        )
    elif bg.mode == "gradient":
        background = BackgroundChoice(
            mode="gradient",
            top=_sample_rgb(rng, bg.top_low, bg.top_high),
            bottom=_sample_rgb(rng, bg.bottom_low, bg.bottom_high),
        )
    else:
        background = BackgroundChoice(
            mode="plates", plate=bg.plates[int(rng.integers(len(bg.plates)))]
        )

    cam_x = spec.rig.x.sample(rng)
    cam_y = spec.rig.y.sample(rng)
    cam_z = spec.rig.height.sample(rng)
    cam_yaw = spec.rig.yaw_deg.sample(rng)
    cam_pitch = spec.rig.pitch_deg.sample(rng)
    pose = pose_from_yaw_pitch((cam_x, cam_y, cam_z), cam_yaw, cam_pitch)

    instances: list[InstancePose] = []
    warnings: list[str] = []
    accepted_xy: list[tuple[float, float]] = []
    next_id = 0
    for placement in spec.placements:
        lo, hi = placement.count
        n = int(rng.integers(lo, hi + 1))
        placed = 0
        for _ in range(n):
            xy = None
            for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
                x = placement.x.sample(rng)
                y = placement.y.sample(rng)
                if spec.min_separation > 0.0 and any(
                    (x - ax) ** 2 + (y - ay) ** 2 < spec.min_separation**2
                    for ax, ay in accepted_xy
                ):
                    continue
                xy = (x, y)
                break
            if xy is None:
                warnings.append(
                    f"frame {frame_index}: dropped one {placement.asset!r} instance "
                    f"after {MAX_PLACEMENT_ATTEMPTS} placement attempts"
                )
                continue
            z = placement.z.sample(rng)
            yaw = placement.yaw_deg.sample(rng)
            scale = placement.scale.sample(rng)
            instances.append(
                InstancePose(
                    instance_id=next_id,
                    asset_id=placement.asset,
                    position=np.array([xy[0], xy[1], z]),
                    yaw_deg=yaw,
                    scale=scale,
                )
            )
            accepted_xy.append(xy)
            next_id += 1
            placed += 1
        if placed < lo:
            raise SamplingError(
                f"frame {frame_index}: only {placed} of at least {lo} "
                f"{placement.asset!r} instances fit with min_separation="
                f"{spec.min_separation}"
            )

    return FrameScene(
        frame_index=frame_index,
        seed=seed_for_frame(master_seed, frame_index),
        pose=pose,
        exposure=exposure,
        background=background,
        instances=instances,
        warnings=warnings,
    )


@dataclass(frozen=True)
class ResolvedInstance:
    """A placed instance with its world-space cloud."""

    instance_id: int
    asset_id: str
    class_id: int
    class_name: str
    cloud: SplatCloud
    transform: SimilarityTransform
    base_bounds: Bounds


def resolve_frame(
    frame: FrameScene, library: AssetLibrary, sh_rotation: str = "exact"
) -> list[ResolvedInstance]:
    """Instantiate every sampled pose as a world-space cloud."""
    resolved = []
    for pose in frame.instances:
        entry = library.entry(pose.asset_id)
        base = library.load(pose.asset_id)
        transform = SimilarityTransform(
            rotation=quat_from_yaw(np.radians(pose.yaw_deg)),
            translation=np.asarray(pose.position, dtype=np.float64),
            scale=float(pose.scale),
        )
        resolved.append(
            ResolvedInstance(
                instance_id=pose.instance_id,
                asset_id=pose.asset_id,
                class_id=entry.class_id,
                class_name=entry.class_name,
                cloud=transform_cloud(base, transform, sh_rotation=sh_rotation),
                transform=transform,
                base_bounds=base.bounds,
            )
        )
    return resolved


@functools.lru_cache(maxsize=8)
def _load_plate(path: str, width: int, height: int) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((width, height), Image.BILINEAR)
    return np.power(np.asarray(rgb, dtype=np.float64) / 255.0, 2.2)


def build_backdrop(spec: SceneSpec, frame: FrameScene, intr: Intrinsics) -> np.ndarray:
    """Compose the frame's backdrop image (sky/plate plus ground plane)."""
    choice = frame.background
    if choice.mode == "color":
        base = flat_backdrop(intr, choice.color)
    elif choice.mode == "gradient":
        base = gradient_backdrop(intr, choice.top, choice.bottom)
    elif choice.mode == "plates":
        base = _load_plate(choice.plate, intr.width, intr.height).copy()
    else:
        raise ConfigError(f"unknown background mode {choice.mode!r}")
    if spec.field.enabled:
        base = field_backdrop(intr, frame.pose, spec.field.style, base)
    return base


def split_dataset(n_frames: int, fractions: dict[str, float], seed: int) -> list[str]:
    """Assign each frame index to a split.

    Counts follow largest-remainder rounding of the requested fractions
    (ties broken by declaration order), and membership is a seeded
    permutation, so the assignment is deterministic and exact.
    """
    if n_frames < 0:
        raise ConfigError("n_frames must be non-negative")
    names = list(fractions)
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-6:
        raise ConfigError(f"split fractions must sum to 1, got {total}")
    ideal = [n_frames * fractions[name] / total for name in names]
    counts = [int(np.floor(v)) for v in ideal]
    leftover = n_frames - sum(counts)
    by_remainder = sorted(
        range(len(names)), key=lambda i: (-(ideal[i] - counts[i]), i)
    )
    for i in range(leftover):
        counts[by_remainder[i % len(names)]] += 1

    rng = np.random.Generator(np.random.PCG64(_splitmix64(seed ^ 0x5B1CE5)))
    perm = rng.permutation(n_frames)
    assignment = [""] * n_frames
    at = 0
    for name, count in zip(names, counts):
        for idx in perm[at : at + count]:
            assignment[int(idx)] = name
        at += count
    return assignment
