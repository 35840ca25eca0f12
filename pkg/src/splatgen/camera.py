"""Pinhole camera model: intrinsics from field of view, posing, projection.

Conventions: world is z-up; the camera frame is +x right, +y down,
+z forward (optical axis). A pose stores the world-from-camera rotation, so
camera-space points are obtained with the transpose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rotation import matrix_to_quat, quat_normalize, quat_to_matrix

log = logging.getLogger(__name__)

DEFAULT_NEAR = 0.05
DEFAULT_FAR = 100.0

# Screen-space low-pass: variance added to every projected covariance so a
# splat can never fall below roughly one pixel in footprint.
LOWPASS_VARIANCE = 0.3


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR


@dataclass(frozen=True)
class CameraPose:
    """World-from-camera rigid transform."""

    position: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) unit quaternion (w, x, y, z)

    @property
    def matrix(self) -> np.ndarray:
        """World-from-camera rotation matrix; columns are right/down/forward."""
        return quat_to_matrix(quat_normalize(self.rotation))


def intrinsics_from_fov(
    width: int,
    height: int,
    hfov_deg: float,
    vfov_deg: float,
    near: float = DEFAULT_NEAR,
    far: float = DEFAULT_FAR,
) -> Intrinsics:
    """Build intrinsics from horizontal and vertical FOV.

    Both angles are honored exactly; for a rectilinear camera the diagonal
    FOV is then fixed, so the achieved value is logged for comparison with
    sensor datasheets rather than taken as an input.
    """
    if width <= 0 or height <= 0:
        raise ConfigError(f"image size must be positive, got {width}x{height}")
    if not 0 < hfov_deg < 180 or not 0 < vfov_deg < 180:
        raise ConfigError(f"FOV must lie in (0, 180) degrees, got {hfov_deg}/{vfov_deg}")
    if not 0 < near < far:
        raise ConfigError(f"need 0 < near < far, got near={near} far={far}")
    tan_h = np.tan(np.radians(hfov_deg) / 2.0)
    tan_v = np.tan(np.radians(vfov_deg) / 2.0)
    fx = (width / 2.0) / tan_h
    fy = (height / 2.0) / tan_v
    dfov = np.degrees(2.0 * np.arctan(np.hypot(tan_h, tan_v)))
    log.info(
        "intrinsics width=%d height=%d fx=%.3f fy=%.3f hfov_deg=%.2f vfov_deg=%.2f dfov_deg=%.2f",
        width, height, fx, fy, hfov_deg, vfov_deg, dfov,
    )
    return Intrinsics(
        width=int(width), height=int(height),
        fx=float(fx), fy=float(fy),
        cx=width / 2.0, cy=height / 2.0,
        near=float(near), far=float(far),
    )


def pose_from_yaw_pitch(position, yaw_deg: float, pitch_deg: float) -> CameraPose:
    """Pose at a position looking along yaw (about world z), pitched down.

    Zero yaw faces world +x; positive pitch tilts the view toward the
    ground. Roll is always zero: the image x axis stays horizontal.
    """
    yaw = np.radians(yaw_deg)
    pitch = np.radians(pitch_deg)
    forward = np.array(
        [np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), -np.sin(pitch)]
    )
    right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
    down = np.cross(forward, right)
    r = np.stack([right, down, forward], axis=-1)
    return CameraPose(
        position=np.asarray(position, dtype=np.float64), rotation=matrix_to_quat(r)
    )


def world_to_camera(pose: CameraPose, points: np.ndarray) -> np.ndarray:
    """Map world points (..., 3) into the camera frame."""
    p = np.asarray(points, dtype=np.float64) - np.asarray(pose.position, dtype=np.float64)
    return p @ pose.matrix


def camera_to_world(pose: CameraPose, points: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ pose.matrix.T + pose.position


def project_points(intr: Intrinsics, points_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Perspective projection of camera-space points.

    Returns (pixels (..., 2), depth (...,)). Points at or behind z=0 give
    non-finite pixels; callers cull by depth first.
    """
    p = np.asarray(points_cam, dtype=np.float64)
    z = p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * p[..., 0] / z + intr.cx
        v = intr.fy * p[..., 1] / z + intr.cy
    return np.stack([u, v], axis=-1), z


def project_gaussians(
    intr: Intrinsics,
    means_cam: np.ndarray,
    covs_cam: np.ndarray,
    lowpass: float = LOWPASS_VARIANCE,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """EWA projection of camera-space Gaussians to screen space.

    Uses the local affine approximation: cov2d = J cov3d J^T with J the
    perspective Jacobian at the mean, then adds ``lowpass`` to both screen
    variances.

    Args:
        intr: camera intrinsics.
        means_cam: (N, 3) camera-space means.
        covs_cam: (N, 3, 3) camera-space covariances.
        lowpass: screen-space variance floor, in pixels squared.

    Returns:
        (means2d (N, 2), covs2d (N, 2, 2), depths (N,), valid (N,) bool).
        Entries outside (near, far) are marked invalid and left undefined.
    """
    m = np.asarray(means_cam, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(covs_cam, dtype=np.float64).reshape(-1, 3, 3)
    z = m[:, 2]
    valid = (z > intr.near) & (z < intr.far)
    zs = np.where(valid, z, 1.0)

    j = np.zeros((m.shape[0], 2, 3), dtype=np.float64)
    j[:, 0, 0] = intr.fx / zs
    j[:, 0, 2] = -intr.fx * m[:, 0] / (zs * zs)
    j[:, 1, 1] = intr.fy / zs
    j[:, 1, 2] = -intr.fy * m[:, 1] / (zs * zs)

    cov2d = j @ c @ np.swapaxes(j, -1, -2)
    cov2d[:, 0, 0] += lowpass
    cov2d[:, 1, 1] += lowpass

    means2d = np.stack(
        [intr.fx * m[:, 0] / zs + intr.cx, intr.fy * m[:, 1] / zs + intr.cy], axis=-1
    )
    return means2d, cov2d, z, valid


def project_gaussian(
    intr: Intrinsics,
    mean_cam: np.ndarray,
    cov_cam: np.ndarray,
    lowpass: float = LOWPASS_VARIANCE,
) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Single-splat convenience wrapper; None when depth-culled."""
    means2d, covs2d, depths, valid = project_gaussians(
        intr, mean_cam[None], cov_cam[None], lowpass
    )
    if not valid[0]:
        return None
    return means2d[0], covs2d[0], float(depths[0])


def pixel_rays(intr: Intrinsics, pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through every pixel center.

    Returns (origin (3,), directions (H, W, 3)); directions are not
    normalized (z component is 1 in the camera frame).
    """
    u = np.arange(intr.width, dtype=np.float64) + 0.5
    v = np.arange(intr.height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1
    )
    dirs_world = dirs_cam @ pose.matrix.T
    return np.asarray(pose.position, dtype=np.float64), dirs_world
