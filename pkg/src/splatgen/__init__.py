"""Batch renderer for 3D Gaussian splat assets.

Renders splat assets into randomized scenes, writes pixel-accurate
object-detection labels (YOLO and COCO), and scores detector outputs.
"""

__version__ = "0.1.0"

from .annotate import Annotation, annotate_frame, bbox_from_corners, bbox_from_mask
from .camera import (
    CameraPose,
    Intrinsics,
    intrinsics_from_fov,
    pose_from_yaw_pitch,
    project_gaussian,
    project_gaussians,
    world_to_camera,
)
from .errors import (
    AssetDataError,
    AssetFormatError,
    AssetLookupError,
    ConfigError,
    EvaluationError,
    LabelParseError,
    SamplingError,
    SplatgenError,
)
from .metrics import (
    Detection,
    GroundTruth,
    MetricsReport,
    average_precision,
    evaluate_detections,
    f1_score,
    iou,
    match_detections,
    pr_curve,
)
from .rasterizer import (
    RasterConfig,
    RenderTarget,
    Splat2D,
    encode_image,
    render,
    render_alpha,
)
from .scene import (
    AssetLibrary,
    FrameScene,
    SceneSpec,
    load_asset_manifest,
    load_scene_spec,
    resolve_frame,
    sample_frame,
    seed_for_frame,
    split_dataset,
)
from .splats import (
    Gaussian,
    SimilarityTransform,
    SplatCloud,
    activate_parameters,
    covariance_3d,
    evaluate_sh,
    load_ply,
    save_ply,
    transform_cloud,
)

__all__ = [name for name in dir() if not name.startswith("_")]
