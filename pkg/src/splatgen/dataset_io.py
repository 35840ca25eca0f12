"""Dataset serialization: YOLO label files, COCO export, PNG images, layout.

The on-disk layout pairs every image with a label file of the same stem:

    <root>/images/<split>/frame_000042.png
    <root>/labels/<split>/frame_000042.txt
    <root>/coco/<split>.json
    <root>/manifest.json

YOLO label lines are ``class cx cy w h`` in normalized image coordinates
with six decimal places; prediction files may append a sixth confidence
column. Empty label files are valid and mean "no objects".
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import LabelParseError

IMAGES_DIR = "images"
LABELS_DIR = "labels"
COCO_DIR = "coco"
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class LabelBox:
    """One parsed label line, denormalized to pixel corners."""

    class_id: int
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float = 1.0

    @property
    def box(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def frame_stem(index: int) -> str:
    return f"frame_{index:06d}"


def image_relpath(split: str, index: int) -> str:
    return f"{IMAGES_DIR}/{split}/{frame_stem(index)}.png"


def label_relpath(split: str, index: int) -> str:
    return f"{LABELS_DIR}/{split}/{frame_stem(index)}.txt"


def write_yolo_labels(
    boxes: Sequence, width: int, height: int, with_confidence: bool = False
) -> str:
    """Serialize boxes to YOLO text.

    Accepts anything with class_id and pixel-space x_min/y_min/x_max/y_max
    attributes (plus confidence when requested). Output coordinates are
    center/size normalized by the image dimensions, six decimal places,
    one newline-terminated line per box.
    """
    lines = []
    for b in boxes:
        cx = (b.x_min + b.x_max) / 2.0 / width
        cy = (b.y_min + b.y_max) / 2.0 / height
        bw = (b.x_max - b.x_min) / width
        bh = (b.y_max - b.y_min) / height
        line = f"{b.class_id} {cx:.6f} {cy:.6f} {bw:.6f} {bh:.6f}"
        if with_confidence:
            line += f" {b.confidence:.6f}"
        lines.append(line + "\n")
    return "".join(lines)


def read_yolo_labels(text: str, width: int = 1, height: int = 1) -> list[LabelBox]:
    """Parse YOLO label text back into pixel-space boxes.

    Five columns are ground truth; a sixth is taken as confidence. Malformed
    lines raise LabelParseError naming the line number. Passing width and
    height of 1 keeps coordinates normalized, which is enough for
    evaluation because IoU is invariant to per-axis scaling.
    """
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise LabelParseError(
                f"line {lineno}: expected 5 or 6 columns, got {len(parts)}"
            )
        try:
            class_id = int(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise LabelParseError(f"line {lineno}: non-numeric field: {exc}") from exc
        if class_id < 0:
            raise LabelParseError(f"line {lineno}: negative class id {class_id}")
        cx, cy, bw, bh = values[:4]
        for name, v in zip(("cx", "cy", "w", "h"), values[:4]):
            if not 0.0 <= v <= 1.0:
                raise LabelParseError(f"line {lineno}: {name}={v} outside [0, 1]")
        confidence = 1.0
        if len(values) == 5:
            confidence = values[4]
            if not 0.0 <= confidence <= 1.0:
                raise LabelParseError(
                    f"line {lineno}: confidence={confidence} outside [0, 1]"
                )
        out.append(
            LabelBox(
                class_id=class_id,
                x_min=(cx - bw / 2.0) * width,
                y_min=(cy - bh / 2.0) * height,
                x_max=(cx + bw / 2.0) * width,
                y_max=(cy + bh / 2.0) * height,
                confidence=confidence,
            )
        )
    return out


def coco_dict(
    frames: Sequence[tuple[int, str, int, int, Sequence]],
    class_names: Sequence[str],
) -> dict:
    """Build a COCO-style dict.

    Args:
        frames: (frame_index, file_name, width, height, annotations)
            tuples; annotations expose class_id and pixel box attributes.
        class_names: index-aligned category names; COCO ids are 1-based.
    """
    images = []
    annotations = []
    ann_id = 1
    for frame_index, file_name, width, height, anns in frames:
        images.append(
            {"id": frame_index, "file_name": file_name, "width": width, "height": height}
        )
        for a in anns:
            w = a.x_max - a.x_min
            h = a.y_max - a.y_min
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": frame_index,
                    "category_id": a.class_id + 1,
                    "bbox": [round(a.x_min, 3), round(a.y_min, 3), round(w, 3), round(h, 3)],
                    "area": round(w * h, 3),
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    return {
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": i + 1, "name": name} for i, name in enumerate(class_names)
        ],
    }


def png_bytes(pixels: np.ndarray) -> bytes:
    """Deterministic PNG encoding of an (H, W, 3) uint8 array."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def save_png(path: str | Path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(png_bytes(pixels))


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
