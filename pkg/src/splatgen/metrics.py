"""Detector evaluation: IoU, greedy matching, PR curves, AP, mAP, F1.

Matching follows the standard protocol: detections are visited in
descending confidence (ties keep input order) and each may consume the
best-IoU unmatched ground truth of the same class in the same image,
provided the IoU clears the threshold. Average precision integrates the
interpolated precision envelope, either sampled at the 101 canonical
recall points or over all recall breakpoints. mAP averages AP over the
classes that have ground truth; classes without any are excluded and
reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EvaluationError

MAP_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
DEFAULT_CONFIDENCE = 0.25


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]
    confidence: float


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection over union of two [x_min, y_min, x_max, y_max] boxes."""
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, 4) x (M, 4) -> (N, M) IoU table."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ix = np.clip(
        np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]),
        0.0, None,
    )
    iy = np.clip(
        np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]),
        0.0, None,
    )
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def match_detections(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruth],
    iou_threshold: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy one-to-one matching.

    Returns (order, tp): ``order`` lists detection indices in descending
    confidence with ties in input order, and ``tp[k]`` says whether
    ``detections[order[k]]`` matched a ground truth.
    """
    n = len(detections)
    confidences = np.array([d.confidence for d in detections], dtype=np.float64)
    order = np.argsort(-confidences, kind="stable")
    tp = np.zeros(n, dtype=bool)
    consumed = np.zeros(len(ground_truths), dtype=bool)

    gt_index: dict[tuple[str, int], list[int]] = {}
    for j, gt in enumerate(ground_truths):
        gt_index.setdefault((gt.image_id, gt.class_id), []).append(j)

    for k in range(n):
        det = detections[int(order[k])]
        candidates = gt_index.get((det.image_id, det.class_id), ())
        best_j = -1
        best_iou = 0.0
        for j in candidates:
            if consumed[j]:
                continue
            value = iou(det.box, ground_truths[j].box)
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            tp[k] = True
            consumed[best_j] = True
    return order, tp


def pr_curve(tp: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative precision/recall along the ranked detection list.

    With no ground truth the recall is defined as zero everywhere; with no
    detections both arrays are empty.
    """
    tp = np.asarray(tp, dtype=np.float64)
    acc_tp = np.cumsum(tp)
    rank = np.arange(1, tp.shape[0] + 1, dtype=np.float64)
    precision = acc_tp / rank
    recall = acc_tp / n_gt if n_gt > 0 else np.zeros_like(acc_tp)
    return precision, recall


def average_precision(
    precision: np.ndarray, recall: np.ndarray, mode: str = "101point"
) -> float:
    """Area under the interpolated PR envelope.

    "101point" samples the envelope at recall 0.00, 0.01, ..., 1.00 and
    averages; "all_points" integrates exactly over recall breakpoints.
    """
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    if precision.shape[0] == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if mode == "101point":
        samples = np.arange(101) / 100.0
        idx = np.searchsorted(recall, samples, side="left")
        values = np.where(idx < recall.shape[0], envelope[np.minimum(idx, recall.shape[0] - 1)], 0.0)
        return float(values.mean())
    if mode == "all_points":
        prev = np.concatenate([[0.0], recall[:-1]])
        return float(np.sum((recall - prev) * envelope))
    raise EvaluationError(f"unknown AP mode {mode!r}")


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; zero when both rates are zero."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class ClassReport:
    class_id: int
    class_name: str
    n_gt: int
    n_det: int
    ap_by_threshold: dict[float, float]
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @property
    def ap50(self) -> float:
        return self.ap_by_threshold[MAP_THRESHOLDS[0]]

    @property
    def ap_mean(self) -> float:
        return float(np.mean(list(self.ap_by_threshold.values())))


@dataclass
class MetricsReport:
    thresholds: tuple[float, ...]
    conf_threshold: float
    ap_mode: str
    classes: list[ClassReport]
    excluded: list[tuple[int, int]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def map50(self) -> float:
        return float(np.mean([c.ap50 for c in self.classes]))

    @property
    def map50_95(self) -> float:
        return float(np.mean([c.ap_mean for c in self.classes]))

    @property
    def precision(self) -> float:
        return float(np.mean([c.precision for c in self.classes]))

    @property
    def recall(self) -> float:
        return float(np.mean([c.recall for c in self.classes]))

    @property
    def f1(self) -> float:
        return float(np.mean([c.f1 for c in self.classes]))

    def to_dict(self) -> dict:
        return {
            "config": {
                "iou_thresholds": list(self.thresholds),
                "confidence_threshold": self.conf_threshold,
                "ap_mode": self.ap_mode,
            },
            "aggregate": {
                "map50": self.map50,
                "map50_95": self.map50_95,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
            },
            "classes": [
                {
                    "class_id": c.class_id,
                    "class_name": c.class_name,
                    "n_gt": c.n_gt,
                    "n_det": c.n_det,
                    "ap50": c.ap50,
                    "map50_95": c.ap_mean,
                    "ap_by_threshold": {f"{t:.2f}": v for t, v in c.ap_by_threshold.items()},
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                }
                for c in self.classes
            ],
            "excluded_classes": [
                {"class_id": cid, "n_det": n} for cid, n in self.excluded
            ],
            "warnings": list(self.warnings),
        }

    def format_table(self) -> str:
        header = (
            f"{'class':<14}{'n_gt':>7}{'mAP50':>9}{'mAP50-95':>11}"
            f"{'Precision':>11}{'Recall':>9}{'F1-score':>10}"
        )
        rows = [header, "-" * len(header)]
        for c in self.classes:
            rows.append(
                f"{c.class_name:<14}{c.n_gt:>7}{c.ap50:>9.3f}{c.ap_mean:>11.3f}"
                f"{c.precision:>11.3f}{c.recall:>9.3f}{c.f1:>10.3f}"
            )
        if len(self.classes) > 1:
            rows.append(
                f"{'all':<14}{sum(c.n_gt for c in self.classes):>7}{self.map50:>9.3f}"
                f"{self.map50_95:>11.3f}{self.precision:>11.3f}{self.recall:>9.3f}"
                f"{self.f1:>10.3f}"
            )
        return "\n".join(rows)


def evaluate_detections(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruth],
    thresholds: Sequence[float] = MAP_THRESHOLDS,
    conf_threshold: float = DEFAULT_CONFIDENCE,
    ap_mode: str = "101point",
    class_names: Sequence[str] | None = None,
) -> MetricsReport:
    """Full evaluation of a detection set against ground truth.

    AP is computed per class per IoU threshold from all detections;
    precision/recall/F1 are computed at the operating confidence threshold
    with matching at IoU 0.5. Classes without ground truth are excluded
    from every aggregate.
    """
    if not ground_truths:
        raise EvaluationError("no ground-truth annotations to evaluate against")
    thresholds = tuple(thresholds)
    if not thresholds:
        raise EvaluationError("at least one IoU threshold is required")

    gt_classes = sorted({gt.class_id for gt in ground_truths})
    det_classes = {d.class_id for d in detections}
    excluded = [
        (cid, sum(1 for d in detections if d.class_id == cid))
        for cid in sorted(det_classes - set(gt_classes))
    ]
    warnings = [
        f"class {cid}: {n} detections but no ground truth; excluded from aggregates"
        for cid, n in excluded
    ]

    reports = []
    for cid in gt_classes:
        class_dets = [d for d in detections if d.class_id == cid]
        class_gts = [g for g in ground_truths if g.class_id == cid]
        ap_by_threshold = {}
        for t in thresholds:
            _, tp = match_detections(class_dets, class_gts, t)
            precision, recall = pr_curve(tp, len(class_gts))
            ap_by_threshold[t] = average_precision(precision, recall, ap_mode)

        operating = [d for d in class_dets if d.confidence >= conf_threshold]
        _, op_tp = match_detections(operating, class_gts, 0.5)
        tp_count = int(op_tp.sum())
        fp_count = len(operating) - tp_count
        fn_count = len(class_gts) - tp_count
        p = tp_count / (tp_count + fp_count) if operating else 0.0
        r = tp_count / len(class_gts)
        name = (
            class_names[cid]
            if class_names is not None and cid < len(class_names)
            else str(cid)
        )
        reports.append(
            ClassReport(
                class_id=cid, class_name=name,
                n_gt=len(class_gts), n_det=len(class_dets),
                ap_by_threshold=ap_by_threshold,
                tp=tp_count, fp=fp_count, fn=fn_count,
                precision=p, recall=r, f1=f1_score(p, r),
            )
        )
    return MetricsReport(
        thresholds=thresholds,
        conf_threshold=conf_threshold,
        ap_mode=ap_mode,
        classes=reports,
        excluded=excluded,
        warnings=warnings,
    )
