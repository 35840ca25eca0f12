"""Automatic bounding-box annotation from rendered instance weights.

Two box sources are supported. Corner boxes project the eight corners of
the asset's three-sigma bounding box through the instance pose and camera;
they are cheap and slightly loose. Mask boxes tightly bound the pixels
where the instance's composited weight clears a threshold; they are
pixel-accurate and respect occlusion.

Visibility is measured as the ratio of composited (occluded) weight to the
weight the instance would receive rendered alone, so fully hidden
instances score zero and get filtered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import CameraPose, Intrinsics, project_points, world_to_camera
from .errors import AssetLookupError
from .rasterizer import RasterConfig, RenderTarget, render_alpha
from .scene import AnnotationSpec, ResolvedInstance
from .splats import Bounds, SimilarityTransform


@dataclass(frozen=True)
class Annotation:
    """One labeled instance. Box coordinates are pixels, [x_min, y_min, x_max, y_max)."""

    class_id: int
    class_name: str
    instance_id: int
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    visibility: float
    pixel_area: float
    truncated: bool

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


def bbox_from_corners(
    bounds: Bounds,
    transform: SimilarityTransform,
    pose: CameraPose,
    intr: Intrinsics,
) -> tuple[tuple[float, float, float, float], bool] | None:
    """Project an object-frame bounding box to a screen rectangle.

    Corners behind the near plane are discarded (and mark the box
    truncated); the rest are projected and the rectangle is clipped to the
    viewport. Returns None when nothing usable remains.
    """
    corners_world = transform.apply(bounds.corners())
    corners_cam = world_to_camera(pose, corners_world)
    in_front = corners_cam[:, 2] > intr.near
    if not in_front.any():
        return None
    pixels, _ = project_points(intr, corners_cam[in_front])
    x_min = float(pixels[:, 0].min())
    x_max = float(pixels[:, 0].max())
    y_min = float(pixels[:, 1].min())
    y_max = float(pixels[:, 1].max())
    clipped_x_min = max(x_min, 0.0)
    clipped_y_min = max(y_min, 0.0)
    clipped_x_max = min(x_max, float(intr.width))
    clipped_y_max = min(y_max, float(intr.height))
    if clipped_x_min >= clipped_x_max or clipped_y_min >= clipped_y_max:
        return None
    truncated = bool(
        (~in_front).any()
        or clipped_x_min != x_min or clipped_y_min != y_min
        or clipped_x_max != x_max or clipped_y_max != y_max
    )
    return (clipped_x_min, clipped_y_min, clipped_x_max, clipped_y_max), truncated


def bbox_from_mask(
    weight: np.ndarray, threshold: float
) -> tuple[float, float, float, float] | None:
    """Tight box around pixels whose weight reaches the threshold.

    The box spans whole pixels: a single qualifying pixel at (r, c) yields
    (c, r, c + 1, r + 1). Returns None for an empty mask.
    """
    mask = np.asarray(weight) >= threshold
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return (float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def visibility_ratio(visible_weight_sum: float, amodal_weight_sum: float) -> float:
    """Fraction of the instance's solo weight that survives occlusion."""
    if amodal_weight_sum <= 0.0:
        return 0.0
    return float(visible_weight_sum / amodal_weight_sum)


def annotate_frame(
    resolved: Sequence[ResolvedInstance],
    pose: CameraPose,
    intr: Intrinsics,
    render_target: RenderTarget,
    cfg: AnnotationSpec | None = None,
    raster_cfg: RasterConfig | None = None,
) -> list[Annotation]:
    """Produce filtered annotations for every visible instance.

    Args:
        resolved: world-space instances, as rendered.
        pose: camera pose used for the render.
        intr: camera intrinsics used for the render.
        render_target: output of the full composite; must contain an
            instance weight plane for every resolved instance.
        cfg: box mode, mask threshold, and filters; defaults when None.
        raster_cfg: blend constants for the amodal re-renders.

    Returns:
        Annotations ordered by instance id. Instances whose box vanishes,
        whose visible mask is smaller than min_pixel_area, or whose
        visibility falls below min_visibility are dropped.
    """
    cfg = cfg or AnnotationSpec()
    out: list[Annotation] = []
    for inst in resolved:
        if inst.instance_id not in render_target.instance_weight:
            raise AssetLookupError(
                f"render target has no weight plane for instance {inst.instance_id}"
            )
        visible = render_target.instance_weight[inst.instance_id]
        amodal = render_alpha([(inst.instance_id, inst.cloud)], pose, intr, raster_cfg)
        visibility = visibility_ratio(float(visible.sum()), float(amodal.sum()))
        mask = visible >= cfg.mask_threshold
        pixel_area = float(mask.sum())

        if cfg.mode == "mask":
            box = bbox_from_mask(visible, cfg.mask_threshold)
            if box is None:
                continue
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            truncated = bool(
                rows[0] == 0 or cols[0] == 0
                or rows[-1] == intr.height - 1 or cols[-1] == intr.width - 1
            )
        else:
            projected = bbox_from_corners(inst.base_bounds, inst.transform, pose, intr)
            if projected is None:
                continue
            box, truncated = projected

        if pixel_area < cfg.min_pixel_area:
            continue
        if visibility < cfg.min_visibility:
            continue
        out.append(
            Annotation(
                class_id=inst.class_id,
                class_name=inst.class_name,
                instance_id=inst.instance_id,
                x_min=box[0], y_min=box[1], x_max=box[2], y_max=box[3],
                visibility=visibility,
                pixel_area=pixel_area,
                truncated=truncated,
            )
        )
    return out


_PALETTE = (
    (235, 64, 52), (52, 143, 235), (52, 199, 89), (245, 187, 28),
    (171, 84, 235), (255, 128, 64), (64, 224, 208), (220, 80, 160),
)


def draw_boxes(
    image: np.ndarray,
    annotations: Sequence[Annotation],
    class_names: Sequence[str] | None = None,
    thickness: int = 2,
) -> np.ndarray:
    """Burn annotation rectangles (and labels, when PIL has a font) into a copy."""
    out = np.array(image, copy=True)
    h, w = out.shape[:2]
    for ann in annotations:
        color = np.array(_PALETTE[ann.class_id % len(_PALETTE)], dtype=out.dtype)
        x0 = int(np.clip(np.floor(ann.x_min), 0, w - 1))
        y0 = int(np.clip(np.floor(ann.y_min), 0, h - 1))
        x1 = int(np.clip(np.ceil(ann.x_max), 1, w))
        y1 = int(np.clip(np.ceil(ann.y_max), 1, h))
        t = thickness
        out[y0 : min(y0 + t, h), x0:x1] = color
        out[max(y1 - t, 0) : y1, x0:x1] = color
        out[y0:y1, x0 : min(x0 + t, w)] = color
        out[y0:y1, max(x1 - t, 0) : x1] = color
    if class_names:
        try:
            from PIL import Image, ImageDraw
        except ImportError:
            return out
        pil = Image.fromarray(out)
        draw = ImageDraw.Draw(pil)
        for ann in annotations:
            label = f"{class_names[ann.class_id]} v={ann.visibility:.2f}"
            color = _PALETTE[ann.class_id % len(_PALETTE)]
            draw.text((ann.x_min + 3, max(ann.y_min - 12, 0)), label, fill=color)
        out = np.asarray(pil)
    return out
