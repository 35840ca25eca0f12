"""Command-line interface.

Subcommands:
    generate       render a randomized dataset from a scene spec
    evaluate       score detector predictions against dataset labels
    inspect        render one frame with its annotations burned in
    validate-spec  check a spec (and its assets) without rendering
    demo           write synthetic assets plus a ready-to-run spec

Exit codes: 0 success, 1 user error (bad arguments, invalid spec or
files), 2 internal error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import logging
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import annotate_frame, draw_boxes
from .dataset_io import (
    coco_dict,
    frame_stem,
    image_relpath,
    label_relpath,
    read_yolo_labels,
    save_png,
    write_json,
    write_yolo_labels,
)
from .errors import SplatgenError
from .metrics import (
    DEFAULT_CONFIDENCE,
    Detection,
    GroundTruth,
    MAP_THRESHOLDS,
    evaluate_detections,
)
from .rasterizer import encode_image, render
from .scene import (
    AnnotationSpec,
    build_backdrop,
    load_asset_manifest,
    load_scene_spec,
    resolve_frame,
    sample_frame,
    split_dataset,
    validate_spec,
)
from .demo import write_demo_assets

log = logging.getLogger("splatgen")


class _Parser(argparse.ArgumentParser):
    # Usage problems are user errors: exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _default_threads() -> int:
    env = os.environ.get("SPLATGEN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _random_seed() -> int:
    return int(np.random.SeedSequence().entropy) & ((1 << 63) - 1)


def _load_spec_and_library(spec_path: str, assets_override: str | None):
    spec = load_scene_spec(spec_path)
    assets_path = assets_override or spec.assets_path
    library = load_asset_manifest(assets_path) if assets_path else None
    return spec, library


def _render_one_frame(spec, library, intr, master_seed, frame_index, annotation_cfg):
    frame = sample_frame(spec, master_seed, frame_index)
    resolved = resolve_frame(frame, library, spec.rendering.sh_rotation)
    backdrop = build_backdrop(spec, frame, intr)
    target = render(
        [(inst.instance_id, inst.cloud) for inst in resolved],
        frame.pose,
        intr,
        backdrop=backdrop,
        exposure=frame.exposure,
    )
    annotations = annotate_frame(resolved, frame.pose, intr, target, annotation_cfg)
    image = encode_image(target.color, spec.rendering.gamma)
    return frame, annotations, image


def cmd_generate(args) -> int:
    spec, library = _load_spec_and_library(args.spec, args.assets)
    if library is None:
        raise SplatgenError("no asset manifest: set 'assets' in the spec or pass --assets")
    problems = validate_spec(spec, library)
    if problems:
        for p in problems:
            log.error("spec problem: %s", p)
        raise SplatgenError(f"spec validation failed with {len(problems)} problem(s)")

    master_seed = args.seed if args.seed is not None else _random_seed()
    annotation_cfg = spec.annotation
    if args.mode:
        annotation_cfg = AnnotationSpec(
            mode=args.mode,
            mask_threshold=spec.annotation.mask_threshold,
            min_pixel_area=spec.annotation.min_pixel_area,
            min_visibility=spec.annotation.min_visibility,
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    intr = spec.intrinsics()

    n = args.frames
    assignment = split_dataset(n, spec.split, seed=master_seed)
    used_splits = sorted(set(assignment))
    for split in used_splits:
        (out_dir / "images" / split).mkdir(parents=True, exist_ok=True)
        (out_dir / "labels" / split).mkdir(parents=True, exist_ok=True)
    (out_dir / "coco").mkdir(exist_ok=True)

    # Parse every referenced asset up front: deterministic, and keeps the
    # per-frame workers free of cache races.
    for placement in spec.placements:
        library.load(placement.asset)

    log.info(
        "generate spec=%s out=%s frames=%d seed=%d threads=%d mode=%s",
        args.spec, args.out, n, master_seed, args.threads, annotation_cfg.mode,
    )

    results: dict[int, tuple] = {}
    t0 = time.perf_counter()

    def work(i: int):
        frame, annotations, image = _render_one_frame(
            spec, library, intr, master_seed, i, annotation_cfg
        )
        split = assignment[i]
        save_png(out_dir / image_relpath(split, i), image)
        (out_dir / label_relpath(split, i)).write_text(
            write_yolo_labels(annotations, intr.width, intr.height)
        )
        return i, frame, annotations

    if args.threads <= 1:
        for i in range(n):
            results[i] = work(i)[1:]
            log.info("frame=%d split=%s labels=%d", i, assignment[i], len(results[i][1]))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.threads) as pool:
            for i, frame, annotations in pool.map(work, range(n)):
                results[i] = (frame, annotations)
                log.info("frame=%d split=%s labels=%d", i, assignment[i], len(annotations))
    elapsed = time.perf_counter() - t0

    class_names = library.classes
    ann_counts = {name: 0 for name in class_names}
    inst_counts = {name: 0 for name in class_names}
    warnings = []
    for i in range(n):
        frame, annotations = results[i]
        warnings.extend(frame.warnings)
        for pose in frame.instances:
            inst_counts[library.entry(pose.asset_id).class_name] += 1
        for a in annotations:
            ann_counts[a.class_name] += 1

    for split in used_splits:
        frames = [
            (
                i,
                f"{frame_stem(i)}.png",
                intr.width,
                intr.height,
                results[i][1],
            )
            for i in range(n)
            if assignment[i] == split
        ]
        write_json(out_dir / "coco" / f"{split}.json", coco_dict(frames, class_names))

    # The manifest stays free of timestamps and timing so identical runs
    # produce identical trees; throughput goes to the log instead.
    manifest = {
        "tool": "splatgen",
        "version": __version__,
        "master_seed": master_seed,
        "frames": n,
        "image": {"width": intr.width, "height": intr.height},
        "classes": class_names,
        "splits": {
            split: [i for i in range(n) if assignment[i] == split] for split in used_splits
        },
        "instances_per_class": inst_counts,
        "annotations_per_class": ann_counts,
        "annotation_mode": annotation_cfg.mode,
        "spec": spec.to_dict(),
        "sampling_warnings": warnings,
    }
    write_json(out_dir / "manifest.json", manifest)
    log.info(
        "done frames=%d seconds=%.2f img_per_s=%.3f labels=%d",
        n, elapsed, n / elapsed if elapsed > 0 else float("inf"),
        sum(ann_counts.values()),
    )
    return 0


def _read_label_file(path: Path):
    return read_yolo_labels(path.read_text())


def cmd_evaluate(args) -> int:
    if args.labels:
        gt_dir = Path(args.labels)
        class_names = None
    else:
        root = Path(args.dataset)
        gt_dir = root / "labels" / args.split
        class_names = None
        manifest_path = root / "manifest.json"
        if manifest_path.is_file():
            import json

            class_names = json.loads(manifest_path.read_text()).get("classes")
    if not gt_dir.is_dir():
        raise SplatgenError(f"label directory not found: {gt_dir}")
    pred_dir = Path(args.predictions)
    if not pred_dir.is_dir():
        raise SplatgenError(f"prediction directory not found: {pred_dir}")

    gts = []
    dets = []
    gt_files = sorted(gt_dir.glob("*.txt"))
    if not gt_files:
        raise SplatgenError(f"no label files under {gt_dir}")
    for path in gt_files:
        image_id = path.stem
        for b in _read_label_file(path):
            gts.append(GroundTruth(image_id=image_id, class_id=b.class_id, box=b.box))
        pred_path = pred_dir / path.name
        if pred_path.is_file():
            for b in _read_label_file(pred_path):
                dets.append(
                    Detection(
                        image_id=image_id, class_id=b.class_id,
                        box=b.box, confidence=b.confidence,
                    )
                )
    known = {p.name for p in gt_files}
    extras = sorted(p.name for p in pred_dir.glob("*.txt") if p.name not in known)
    report = evaluate_detections(
        dets, gts,
        thresholds=MAP_THRESHOLDS,
        conf_threshold=args.conf,
        ap_mode=args.ap_mode,
        class_names=class_names,
    )
    for name in extras:
        report.warnings.append(f"prediction file {name} has no matching label file; ignored")

    print(report.format_table())
    for w in report.warnings:
        log.warning("%s", w)
    log.info(
        "evaluate images=%d gt=%d det=%d map50=%.4f map50_95=%.4f",
        len(gt_files), len(gts), len(dets), report.map50, report.map50_95,
    )
    if args.report:
        write_json(Path(args.report), report.to_dict())
        log.info("report written to %s", args.report)
    return 0


def cmd_inspect(args) -> int:
    spec, library = _load_spec_and_library(args.spec, args.assets)
    if library is None:
        raise SplatgenError("no asset manifest: set 'assets' in the spec or pass --assets")
    annotation_cfg = spec.annotation
    if args.mode:
        annotation_cfg = AnnotationSpec(
            mode=args.mode,
            mask_threshold=spec.annotation.mask_threshold,
            min_pixel_area=spec.annotation.min_pixel_area,
            min_visibility=spec.annotation.min_visibility,
        )
    intr = spec.intrinsics()
    frame, annotations, image = _render_one_frame(
        spec, library, intr, args.seed, args.frame, annotation_cfg
    )
    boxed = draw_boxes(image, annotations, library.classes)
    save_png(args.out, boxed)
    log.info(
        "inspect frame=%d seed=%d instances=%d labels=%d out=%s",
        args.frame, args.seed, len(frame.instances), len(annotations), args.out,
    )
    for a in annotations:
        log.info(
            "label class=%s box=%.1f,%.1f,%.1f,%.1f visibility=%.3f truncated=%s",
            a.class_name, a.x_min, a.y_min, a.x_max, a.y_max, a.visibility, a.truncated,
        )
    return 0


def cmd_validate_spec(args) -> int:
    spec, library = _load_spec_and_library(args.spec, args.assets)
    problems = validate_spec(spec, library)
    if problems:
        for p in problems:
            print(f"problem: {p}")
        return 1
    print("spec ok")
    return 0


def cmd_demo(args) -> int:
    paths = write_demo_assets(args.out)
    print(f"demo assets written to {args.out}")
    print(f"next: splatgen generate --spec {paths['spec']} --out {args.out}/dataset "
          f"--frames 20 --seed 1234")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"splatgen {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    parser.add_argument(
        "-q", "--quiet", action="store_true", help="warnings and errors only"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a randomized dataset")
    p.add_argument("--spec", required=True, help="scene spec YAML")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--frames", type=int, required=True, help="number of frames")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: random)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads (default: SPLATGEN_THREADS or up to 4)")
    p.add_argument("--assets", default=None, help="asset manifest override")
    p.add_argument("--mode", choices=("corners", "mask"), default=None,
                   help="annotation mode override")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score predictions against labels")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--dataset", help="generated dataset root")
    target.add_argument("--labels", help="explicit ground-truth label directory")
    p.add_argument("--split", default="test", help="dataset split (default: test)")
    p.add_argument("--predictions", required=True, help="detector output directory")
    p.add_argument("--conf", type=float, default=DEFAULT_CONFIDENCE,
                   help="operating confidence threshold")
    p.add_argument("--ap-mode", choices=("101point", "all_points"), default="101point")
    p.add_argument("--report", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="render one frame with boxes drawn")
    p.add_argument("--spec", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--assets", default=None)
    p.add_argument("--mode", choices=("corners", "mask"), default=None)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("validate-spec", help="check a spec without rendering")
    p.add_argument("--spec", required=True)
    p.add_argument("--assets", default=None)
    p.set_defaults(func=cmd_validate_spec)

    p = sub.add_parser("demo", help="write synthetic assets and a sample spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", force=True)
    try:
        return args.func(args)
    except (SplatgenError, FileNotFoundError, NotADirectoryError, PermissionError) as exc:
        log.error("%s", exc)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
