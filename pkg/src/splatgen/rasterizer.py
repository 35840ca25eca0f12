"""Tile-based alpha compositing of projected Gaussians.

The renderer projects every splat to screen space, bins splats into fixed
tiles, sorts each tile front to back by depth, and composites with
premultiplied alpha. Per-pixel weights are tracked per instance so
annotation can measure visibility afterwards.

Blending follows the standard splatting recipe: per pixel, each splat
contributes ``w = T * a`` with ``a = min(opacity * g, ceiling)``, where
``g`` is the Gaussian falloff at the pixel center; contributions below a
floor are skipped; transmittance updates to ``T * (1 - a)`` after the
contribution, and the pixel stops accepting splats once T falls under a
termination threshold.

A splat's binned footprint covers both its three-sigma box and the region
where its contribution can still reach the skip floor, so truncating to
binned tiles never removes a contribution the blend would have kept. That
makes the tiled result equal to an exhaustive per-pixel loop over all
splats, which the test suite exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera import CameraPose, Intrinsics, pixel_rays, project_gaussians, world_to_camera
from .splats import SplatCloud, covariance_3d, evaluate_sh

TILE_SIZE = 16
ALPHA_FLOOR = 1.0 / 255.0
ALPHA_CEILING = 0.99
TRANSMITTANCE_FLOOR = 1e-4


@dataclass(frozen=True)
class RasterConfig:
    tile_size: int = TILE_SIZE
    alpha_floor: float = ALPHA_FLOOR
    alpha_ceiling: float = ALPHA_CEILING
    transmittance_floor: float = TRANSMITTANCE_FLOOR
    chunk: int = 512


@dataclass(frozen=True)
class Splat2D:
    """One projected splat, ready for compositing."""

    mean: np.ndarray    # (2,) pixel coordinates
    cov: np.ndarray     # (2, 2) screen-space covariance (low-pass included)
    depth: float
    color: np.ndarray   # (3,) linear RGB
    alpha: float        # activated opacity in (0, 1)
    instance_id: int


@dataclass
class RenderTarget:
    """Compositing output. Color is linear; alpha excludes the background."""

    width: int
    height: int
    color: np.ndarray                        # (H, W, 3)
    alpha: np.ndarray                        # (H, W)
    transmittance: np.ndarray                # (H, W)
    instance_weight: dict[int, np.ndarray] = field(default_factory=dict)


class ScreenSplats:
    """Structure-of-arrays form of a projected scene."""

    def __init__(self, means, covs, depths, colors, alphas, instance_idx):
        self.means = np.asarray(means, dtype=np.float64).reshape(-1, 2)
        n = self.means.shape[0]
        self.covs = np.asarray(covs, dtype=np.float64).reshape(n, 2, 2)
        self.depths = np.asarray(depths, dtype=np.float64).reshape(n)
        self.colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)
        self.alphas = np.asarray(alphas, dtype=np.float64).reshape(n)
        self.instance_idx = np.asarray(instance_idx, dtype=np.int64).reshape(n)
        self.conics, self.conic_valid = conics_from_covs(self.covs)

    def __len__(self) -> int:
        return self.means.shape[0]

    @classmethod
    def from_list(cls, splats: Sequence[Splat2D]) -> "ScreenSplats":
        if not splats:
            return cls(
                np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0),
                np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64),
            )
        return cls(
            [s.mean for s in splats], [s.cov for s in splats], [s.depth for s in splats],
            [s.color for s in splats], [s.alpha for s in splats],
            [s.instance_id for s in splats],
        )


def conics_from_covs(covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Invert 2x2 covariances into conic coefficients (a, b, c).

    The falloff exponent is then q = a dx^2 + 2 b dx dy + c dy^2. Splats
    with a non-positive determinant are flagged invalid and skipped.
    """
    covs = np.asarray(covs, dtype=np.float64).reshape(-1, 2, 2)
    a, b, c = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    det = a * c - b * b
    valid = det > 0
    det_safe = np.where(valid, det, 1.0)
    conics = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=-1)
    return conics, valid


def splat_extents(covs: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Axis-aligned half-extents (N, 2) of each splat's usable footprint.

    Covers max(3 sigma, the radius where opacity * falloff reaches the skip
    floor), per screen axis.
    """
    covs = np.asarray(covs, dtype=np.float64).reshape(-1, 2, 2)
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    sigma = np.sqrt(np.stack([covs[:, 0, 0], covs[:, 1, 1]], axis=-1).clip(min=0.0))
    q_floor = 2.0 * np.log(np.maximum(alphas / ALPHA_FLOOR, 1.0))
    k = np.maximum(3.0, np.sqrt(q_floor))
    return k[:, None] * sigma


def sort_by_depth(depths: np.ndarray) -> np.ndarray:
    """Front-to-back order; equal depths keep input order."""
    return np.argsort(np.asarray(depths), kind="stable")


def bin_splats(
    means: np.ndarray,
    extents: np.ndarray,
    depths: np.ndarray,
    width: int,
    height: int,
    tile_size: int = TILE_SIZE,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Assign splats to the tiles their footprints touch.

    Returns (tile_ids, order, starts, ends): ``order`` lists splat indices
    grouped by tile, front to back within each tile with ties kept in input
    order; ``tile_ids[i]`` with ``starts[i]:ends[i]`` delimits group i.
    """
    n = means.shape[0]
    nx = (width + tile_size - 1) // tile_size
    ny = (height + tile_size - 1) // tile_size
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, empty

    lo = np.floor((means - extents) / tile_size).astype(np.int64)
    hi = np.floor((means + extents) / tile_size).astype(np.int64)
    lo_x = np.clip(lo[:, 0], 0, nx - 1)
    hi_x = np.clip(hi[:, 0], 0, nx - 1)
    lo_y = np.clip(lo[:, 1], 0, ny - 1)
    hi_y = np.clip(hi[:, 1], 0, ny - 1)
    outside = (hi[:, 0] < 0) | (lo[:, 0] >= nx) | (hi[:, 1] < 0) | (lo[:, 1] >= ny)
    wx = np.where(outside, 0, hi_x - lo_x + 1)
    wy = np.where(outside, 0, hi_y - lo_y + 1)
    counts = wx * wy
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty, empty

    rep = np.repeat(np.arange(n), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total) - offsets[rep]
    tx = lo_x[rep] + local % np.maximum(wx[rep], 1)
    ty = lo_y[rep] + local // np.maximum(wx[rep], 1)
    tile = ty * nx + tx

    order = np.lexsort((rep, depths[rep], tile))
    tile_sorted = tile[order]
    splat_sorted = rep[order]
    boundaries = np.flatnonzero(np.diff(tile_sorted)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [total]])
    return tile_sorted[starts], splat_sorted, starts, ends


def blend_pixels(
    screen: ScreenSplats,
    order: np.ndarray,
    px: np.ndarray,
    py: np.ndarray,
    n_instances: int,
    cfg: RasterConfig,
    with_color: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Composite ordered splats over a set of pixel centers.

    Args:
        screen: projected splats.
        order: splat indices, front to back.
        px, py: (K,) pixel-center coordinates.
        n_instances: number of instance weight rows to accumulate.
        cfg: blend constants.
        with_color: skip the color accumulation when False.

    Returns:
        (color (K, 3), alpha (K,), transmittance (K,), weights (I, K)).
    """
    k = px.shape[0]
    color = np.zeros((k, 3))
    alpha = np.zeros(k)
    trans = np.ones(k)
    weights = np.zeros((n_instances, k))

    for s0 in range(0, len(order), cfg.chunk):
        if np.all(trans < cfg.transmittance_floor):
            break
        idx = order[s0 : s0 + cfg.chunk]
        dx = px[None, :] - screen.means[idx, 0][:, None]
        dy = py[None, :] - screen.means[idx, 1][:, None]
        con = screen.conics[idx]
        q = (
            con[:, 0, None] * dx * dx
            + 2.0 * con[:, 1, None] * dx * dy
            + con[:, 2, None] * dy * dy
        )
        g = np.exp(-0.5 * q)
        a = np.minimum(screen.alphas[idx, None] * g, cfg.alpha_ceiling)
        a[~screen.conic_valid[idx], :] = 0.0
        a[a < cfg.alpha_floor] = 0.0

        cum = np.cumprod(1.0 - a, axis=0)
        t_before = trans[None, :] * np.vstack([np.ones((1, k)), cum[:-1]])
        live = t_before >= cfg.transmittance_floor
        w = np.where(live, t_before * a, 0.0)

        if with_color:
            color += np.einsum("sk,sc->kc", w, screen.colors[idx])
        alpha += w.sum(axis=0)
        np.add.at(weights, screen.instance_idx[idx], w)

        # Transmittance freezes at the stop point, so carry the value after
        # the last splat that was still processed.
        t_after = t_before * (1.0 - a)
        n_live = live.sum(axis=0)
        trans = np.where(n_live > 0, t_after[np.maximum(n_live - 1, 0), np.arange(k)], trans)

    return color, alpha, trans, weights


def composite(
    screen: ScreenSplats,
    width: int,
    height: int,
    n_instances: int,
    cfg: RasterConfig | None = None,
    with_color: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Tiled compositing pass over the full image.

    Returns (color (H, W, 3), alpha (H, W), transmittance (H, W),
    weights (I, H, W)).
    """
    cfg = cfg or RasterConfig()
    color = np.zeros((height, width, 3))
    alpha = np.zeros((height, width))
    trans = np.ones((height, width))
    weights = np.zeros((n_instances, height, width))
    if len(screen) == 0:
        return color, alpha, trans, weights

    extents = splat_extents(screen.covs, screen.alphas)
    tile_ids, order, starts, ends = bin_splats(
        screen.means, extents, screen.depths, width, height, cfg.tile_size
    )
    nx = (width + cfg.tile_size - 1) // cfg.tile_size
    for i in range(tile_ids.shape[0]):
        t = int(tile_ids[i])
        ty, tx = divmod(t, nx)
        x0 = tx * cfg.tile_size
        y0 = ty * cfg.tile_size
        x1 = min(x0 + cfg.tile_size, width)
        y1 = min(y0 + cfg.tile_size, height)
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        px = gx.ravel()
        py = gy.ravel()
        c, a, tr, w = blend_pixels(
            screen, order[starts[i] : ends[i]], px, py, n_instances, cfg, with_color
        )
        shape = (y1 - y0, x1 - x0)
        color[y0:y1, x0:x1] = c.reshape(shape + (3,))
        alpha[y0:y1, x0:x1] = a.reshape(shape)
        trans[y0:y1, x0:x1] = tr.reshape(shape)
        weights[:, y0:y1, x0:x1] = w.reshape((n_instances,) + shape)
    return color, alpha, trans, weights


def project_scene(
    instances: Sequence[tuple[int, SplatCloud]],
    pose: CameraPose,
    intr: Intrinsics,
    with_color: bool = True,
) -> ScreenSplats:
    """Flatten instance clouds into one depth-cullable screen-space set.

    Instance index in the output refers to position in ``instances``; SH
    colors are evaluated along the world-space view direction per splat.
    """
    parts: list[tuple[np.ndarray, ...]] = []
    for slot, (_, cloud) in enumerate(instances):
        if len(cloud) == 0:
            continue
        means_cam = world_to_camera(pose, cloud.means)
        covs = covariance_3d(cloud.scales, cloud.rotations)
        r = pose.matrix
        covs_cam = np.einsum("ij,njk,lk->nil", r.T, covs, r.T)
        means2d, covs2d, depths, valid = project_gaussians(intr, means_cam, covs_cam)
        if not valid.any():
            continue
        if with_color:
            dirs = cloud.means - np.asarray(pose.position)
            colors = evaluate_sh(cloud.sh, dirs)
        else:
            colors = np.zeros((len(cloud), 3))
        sel = np.flatnonzero(valid)
        parts.append((
            means2d[sel], covs2d[sel], depths[sel], colors[sel],
            cloud.opacities[sel], np.full(sel.shape[0], slot, dtype=np.int64),
        ))
    if not parts:
        return ScreenSplats.from_list([])
    return ScreenSplats(*[np.concatenate(cols) for cols in zip(*parts)])


def render(
    instances: Sequence[tuple[int, SplatCloud]],
    pose: CameraPose,
    intr: Intrinsics,
    cfg: RasterConfig | None = None,
    backdrop: np.ndarray | None = None,
    exposure: float = 1.0,
) -> RenderTarget:
    """Render instanced clouds over an optional backdrop image.

    Args:
        instances: (instance_id, world-space cloud) pairs.
        pose: camera pose.
        intr: camera intrinsics.
        cfg: blend constants; defaults used when None.
        backdrop: (H, W, 3) linear background, or None for black. The
            backdrop receives the leftover transmittance and never adds to
            alpha or instance weights.
        exposure: linear gain applied to the composited color.

    Returns:
        RenderTarget with linear color in [0, 1].
    """
    cfg = cfg or RasterConfig()
    screen = project_scene(instances, pose, intr)
    color, alpha, trans, weights = composite(
        screen, intr.width, intr.height, len(instances), cfg
    )
    if backdrop is not None:
        color = color + trans[..., None] * backdrop
    color = np.clip(color * float(exposure), 0.0, 1.0)
    return RenderTarget(
        width=intr.width,
        height=intr.height,
        color=color,
        alpha=alpha,
        transmittance=trans,
        instance_weight={inst_id: weights[slot] for slot, (inst_id, _) in enumerate(instances)},
    )


def render_alpha(
    instances: Sequence[tuple[int, SplatCloud]],
    pose: CameraPose,
    intr: Intrinsics,
    cfg: RasterConfig | None = None,
) -> np.ndarray:
    """Alpha plane only; used for amodal (occluder-free) masks."""
    cfg = cfg or RasterConfig()
    screen = project_scene(instances, pose, intr, with_color=False)
    _, alpha, _, _ = composite(
        screen, intr.width, intr.height, len(instances), cfg, with_color=False
    )
    return alpha


@dataclass(frozen=True)
class FieldStyle:
    """Analytic ground-plane styling: a striped pitch with white markings."""

    half_length: float = 4.5        # +/- x extent, meters
    half_width: float = 3.0         # +/- y extent
    line_width: float = 0.05
    circle_radius: float = 0.75
    stripe_period: float = 1.5
    grass_color: tuple[float, float, float] = (0.050, 0.280, 0.060)
    grass_color_alt: tuple[float, float, float] = (0.044, 0.250, 0.054)
    line_color: tuple[float, float, float] = (0.80, 0.80, 0.80)


def flat_backdrop(intr: Intrinsics, color) -> np.ndarray:
    out = np.empty((intr.height, intr.width, 3))
    out[:] = np.asarray(color, dtype=np.float64)
    return out


def gradient_backdrop(intr: Intrinsics, top, bottom) -> np.ndarray:
    t = np.linspace(0.0, 1.0, intr.height)[:, None, None]
    row = (1.0 - t) * np.asarray(top, dtype=np.float64) + t * np.asarray(bottom, dtype=np.float64)
    return np.broadcast_to(row, (intr.height, intr.width, 3)).copy()


def field_backdrop(
    intr: Intrinsics, pose: CameraPose, style: FieldStyle, base: np.ndarray
) -> np.ndarray:
    """Overlay the z=0 ground plane onto a base backdrop.

    Each pixel ray is intersected with the plane analytically; markings
    (boundary, halfway line, center circle) are evaluated in field
    coordinates, so they stay crisp at any resolution.
    """
    origin, dirs = pixel_rays(intr, pose)
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[2] / dz
    hit = (dz < 0) & (t > 0) & np.isfinite(t)
    hx = origin[0] + t * dirs[..., 0]
    hy = origin[1] + t * dirs[..., 1]
    on_field = hit & (np.abs(hx) <= style.half_length) & (np.abs(hy) <= style.half_width)

    stripe = (np.floor(hx / style.stripe_period).astype(np.int64) % 2) == 0
    grass = np.where(
        stripe[..., None],
        np.asarray(style.grass_color),
        np.asarray(style.grass_color_alt),
    )
    half_line = style.line_width / 2.0
    boundary = (np.abs(hx) >= style.half_length - style.line_width) | (
        np.abs(hy) >= style.half_width - style.line_width
    )
    halfway = np.abs(hx) <= half_line
    circle = np.abs(np.hypot(hx, hy) - style.circle_radius) <= half_line
    marked = boundary | halfway | circle
    shaded = np.where(marked[..., None], np.asarray(style.line_color), grass)

    out = np.array(base, dtype=np.float64, copy=True)
    out[on_field] = shaded[on_field]
    return out


def encode_image(color_linear: np.ndarray, gamma: float = 2.2) -> np.ndarray:
    """Linear [0, 1] -> 8-bit with gamma encoding."""
    c = np.clip(np.asarray(color_linear, dtype=np.float64), 0.0, 1.0)
    return np.round(255.0 * np.power(c, 1.0 / gamma)).astype(np.uint8)


def decode_image(pixels: np.ndarray, gamma: float = 2.2) -> np.ndarray:
    """8-bit -> linear [0, 1]; inverse of encode_image up to quantization."""
    return np.power(np.asarray(pixels, dtype=np.float64) / 255.0, gamma)
