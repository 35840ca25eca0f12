"""Gaussian splat asset model: PLY I/O, activations, covariances, spherical harmonics.

A splat asset is a cloud of anisotropic 3D Gaussians. On disk the standard
PLY layout stores raw (pre-activation) parameters: log scales, logit
opacity, an unnormalized quaternion, and spherical-harmonic color
coefficients split into ``f_dc_*`` (band 0) and ``f_rest_*`` (higher bands,
channel-major). In memory we keep activated parameters only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssetDataError, AssetFormatError
from .rotation import is_identity_quat, quat_multiply, quat_normalize, quat_to_matrix

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

# Opacity is clamped after the sigmoid so the logit stays finite on save.
OPACITY_FLOOR = 1e-7

_REST_COUNT_TO_DEGREE = {0: 0, 9: 1, 24: 2, 45: 3}

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


def sh_channel_count(degree: int) -> int:
    """Number of coefficients per color channel for a given max band."""
    return (degree + 1) ** 2


@dataclass(frozen=True)
class Gaussian:
    """A single splat, as a read-only view into a cloud."""

    mean: np.ndarray       # (3,) world/object position
    scale: np.ndarray      # (3,) per-axis standard deviations
    rotation: np.ndarray   # (4,) unit quaternion (w, x, y, z)
    opacity: float         # in (0, 1)
    sh: np.ndarray         # (C, 3) coefficients, row 0 is the DC band


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def corners(self) -> np.ndarray:
        lo, hi = self.lower, self.upper
        return np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])],
            dtype=np.float64,
        )


class SplatCloud:
    """Structure-of-arrays container for activated splat parameters.

    Arrays are owned by the cloud and must not be mutated after
    construction; transforms return new clouds.
    """

    def __init__(
        self,
        means: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        sh: np.ndarray,
        validate: bool = True,
    ):
        self.means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
        n = self.means.shape[0]
        self.scales = np.asarray(scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.asarray(opacities, dtype=np.float64).reshape(n)
        self.sh = np.asarray(sh, dtype=np.float64).reshape(n, -1, 3)
        if self.sh.shape[1] not in (1, 4, 9, 16):
            raise AssetDataError(f"unsupported SH coefficient count {self.sh.shape[1]}")
        self.sh_degree = int(np.sqrt(self.sh.shape[1])) - 1
        self._bounds: Bounds | None = None
        if validate:
            self._validate()

    def _validate(self) -> None:
        for name, arr in (
            ("mean", self.means), ("scale", self.scales),
            ("rotation", self.rotations), ("opacity", self.opacities), ("sh", self.sh),
        ):
            bad = ~np.isfinite(arr)
            if bad.any():
                idx = int(np.argwhere(bad)[0][0])
                raise AssetDataError(f"non-finite {name} value at splat {idx}")
        if len(self) and (np.linalg.norm(self.rotations, axis=1) == 0.0).any():
            idx = int(np.argmax(np.linalg.norm(self.rotations, axis=1) == 0.0))
            raise AssetDataError(f"zero quaternion at splat {idx}")
        if (self.scales <= 0.0).any():
            idx = int(np.argwhere(self.scales <= 0.0)[0][0])
            raise AssetDataError(f"non-positive scale at splat {idx}")
        if ((self.opacities <= 0.0) | (self.opacities >= 1.0)).any():
            idx = int(np.argmax((self.opacities <= 0.0) | (self.opacities >= 1.0)))
            raise AssetDataError(f"opacity outside (0, 1) at splat {idx}")

    def __len__(self) -> int:
        return self.means.shape[0]

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(
            mean=self.means[i], scale=self.scales[i], rotation=self.rotations[i],
            opacity=float(self.opacities[i]), sh=self.sh[i],
        )

    @property
    def bounds(self) -> Bounds:
        if self._bounds is None:
            self._bounds = object_bounds(self)
        return self._bounds


@dataclass(frozen=True)
class SimilarityTransform:
    """Rigid pose plus uniform scale: p -> scale * R(rotation) @ p + translation."""

    rotation: np.ndarray     # (4,) unit quaternion
    translation: np.ndarray  # (3,)
    scale: float = 1.0

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(
            rotation=np.array([1.0, 0.0, 0.0, 0.0]),
            translation=np.zeros(3),
            scale=1.0,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        r = quat_to_matrix(quat_normalize(self.rotation))
        return self.scale * np.asarray(points, dtype=np.float64) @ r.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        q = quat_normalize(self.rotation)
        q_inv = q * np.array([1.0, -1.0, -1.0, -1.0])
        r_inv = quat_to_matrix(q_inv)
        s_inv = 1.0 / self.scale
        return SimilarityTransform(
            rotation=q_inv,
            translation=-s_inv * (r_inv @ np.asarray(self.translation, dtype=np.float64)),
            scale=s_inv,
        )


def activate_parameters(
    raw_opacity: np.ndarray, raw_scales: np.ndarray, raw_quat: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map stored raw parameters to usable ones.

    Opacity goes through a sigmoid and is clamped away from exactly 0 and 1,
    scales through exp, and the quaternion is normalized.
    """
    x = np.asarray(raw_opacity, dtype=np.float64)
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    opacity = np.clip(sig, OPACITY_FLOOR, 1.0 - OPACITY_FLOOR)
    scales = np.exp(np.asarray(raw_scales, dtype=np.float64))
    quat = quat_normalize(raw_quat)
    return opacity, scales, quat


def deactivate_parameters(
    opacity: np.ndarray, scales: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of activate_parameters for the invertible parts."""
    p = np.clip(np.asarray(opacity, dtype=np.float64), OPACITY_FLOOR, 1.0 - OPACITY_FLOOR)
    return np.log(p / (1.0 - p)), np.log(np.asarray(scales, dtype=np.float64))


def covariance_3d(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Covariance R S S^T R^T from per-axis scales and a unit quaternion.

    Accepts (3,)/(4,) for one splat or (N,3)/(N,4) batches.
    """
    r = quat_to_matrix(quat_normalize(rotations))
    m = r * np.asarray(scales, dtype=np.float64)[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values for unit directions; (..., 3) -> (..., C)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    cols = [np.full(x.shape, SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        cols += [
            SH_C2[0] * xy,
            SH_C2[1] * yz,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * xz,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * xy * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(cols, axis=-1)


def evaluate_sh(sh: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """Color from SH coefficients along view directions.

    Args:
        sh: (C, 3) or (N, C, 3) coefficients; C determines the degree.
        view_dirs: (3,) or (N, 3) directions from camera to splat; need not
            be normalized.

    Returns:
        RGB in [0, 1], shape (3,) or (N, 3). The 3DGS convention adds a 0.5
        offset to the reconstructed signal before clamping.
    """
    sh = np.asarray(sh, dtype=np.float64)
    degree = int(np.sqrt(sh.shape[-2])) - 1
    d = np.asarray(view_dirs, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    d = np.where(norm > 0, d / np.where(norm == 0, 1.0, norm), np.array([0.0, 0.0, 1.0]))
    basis = sh_basis(d, degree)
    rgb = np.einsum("...c,...ck->...k", basis, sh) + 0.5
    return np.clip(rgb, 0.0, 1.0)


_SH_SAMPLE_DIRS: np.ndarray | None = None


def _sh_sample_dirs() -> np.ndarray:
    # Fixed Fibonacci-sphere directions; enough rows to overdetermine band 3.
    global _SH_SAMPLE_DIRS
    if _SH_SAMPLE_DIRS is None:
        m = 64
        i = np.arange(m) + 0.5
        polar = np.arccos(1.0 - 2.0 * i / m)
        azimuth = np.pi * (1.0 + np.sqrt(5.0)) * i
        _SH_SAMPLE_DIRS = np.stack(
            [np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth), np.cos(polar)],
            axis=-1,
        )
    return _SH_SAMPLE_DIRS


def rotate_sh(sh: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Rotate SH coefficients so the represented function follows the object.

    The per-band transfer matrix is solved numerically from sampled
    directions: each band is closed under rotation, so fitting
    basis(v) @ D = basis(R^T v) on enough directions recovers it.

    Args:
        sh: (N, C, 3) coefficients.
        rotation: (3, 3) rotation matrix applied to the object.
    """
    sh = np.asarray(sh, dtype=np.float64)
    degree = int(np.sqrt(sh.shape[-2])) - 1
    if degree == 0:
        return sh.copy()
    dirs = _sh_sample_dirs()
    basis_world = sh_basis(dirs, degree)
    basis_object = sh_basis(dirs @ np.asarray(rotation, dtype=np.float64), degree)
    out = sh.copy()
    for band in range(1, degree + 1):
        lo, hi = band * band, (band + 1) * (band + 1)
        a = basis_world[:, lo:hi]
        b = basis_object[:, lo:hi]
        d, *_ = np.linalg.lstsq(a, b, rcond=None)
        out[:, lo:hi, :] = np.einsum("km,nmc->nkc", d, sh[:, lo:hi, :])
    return out


def transform_cloud(
    cloud: SplatCloud, transform: SimilarityTransform, sh_rotation: str = "exact"
) -> SplatCloud:
    """Apply a similarity transform to a whole cloud.

    Args:
        cloud: source cloud; not modified.
        transform: rigid pose plus uniform scale.
        sh_rotation: "exact" rotates every SH band; "dc_only" drops the
            view-dependent bands and keeps band 0.

    Returns:
        A new cloud. An identity transform with "exact" returns arrays that
        compare bit-for-bit equal to the input.
    """
    if sh_rotation not in ("exact", "dc_only"):
        raise ValueError(f"unknown sh_rotation mode {sh_rotation!r}")
    q = quat_normalize(transform.rotation)
    r = quat_to_matrix(q)
    means = transform.scale * cloud.means @ r.T + np.asarray(transform.translation, dtype=np.float64)
    scales = transform.scale * cloud.scales
    rotations = quat_normalize(quat_multiply(q, cloud.rotations))
    if sh_rotation == "dc_only":
        sh = cloud.sh[:, :1, :].copy()
    elif cloud.sh_degree == 0 or is_identity_quat(q):
        sh = cloud.sh.copy()
    else:
        sh = rotate_sh(cloud.sh, r)
    return SplatCloud(means, scales, rotations, cloud.opacities.copy(), sh, validate=False)


def object_bounds(cloud: SplatCloud) -> Bounds:
    """Means AABB grown by three standard deviations per splat."""
    if len(cloud) == 0:
        raise AssetDataError("bounds of an empty cloud are undefined")
    margin = 3.0 * cloud.scales.max(axis=1, keepdims=True)
    return Bounds(
        lower=(cloud.means - margin).min(axis=0),
        upper=(cloud.means + margin).max(axis=0),
    )


def _parse_ply_header(stream: io.BufferedReader) -> tuple[str, list[tuple[str, str]], int]:
    line = stream.readline()
    if line.strip() != b"ply":
        raise AssetFormatError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        raw = stream.readline()
        if not raw:
            raise AssetFormatError("unterminated PLY header")
        line_s = raw.decode("ascii", errors="replace").strip()
        if not line_s or line_s.startswith("comment") or line_s.startswith("obj_info"):
            continue
        if line_s == "end_header":
            break
        parts = line_s.split()
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise AssetFormatError("property before any element in PLY header")
            if parts[1] == "list":
                raise AssetFormatError("list properties are not supported")
            elements[-1][2].append((parts[2], parts[1]))
        else:
            raise AssetFormatError(f"unrecognized PLY header line: {line_s!r}")
    if fmt is None:
        raise AssetFormatError("PLY header missing format line")
    if fmt == "binary_big_endian":
        raise AssetFormatError("big-endian PLY files are not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise AssetFormatError(f"unsupported PLY format {fmt!r}")
    if not elements or elements[0][0] != "vertex":
        raise AssetFormatError("first PLY element must be 'vertex'")
    _, count, props = elements[0]
    return fmt, props, count


def load_ply(path: str | Path) -> SplatCloud:
    """Read a splat asset from a 3DGS-convention PLY file.

    Both binary little-endian and ascii files are accepted. Raw parameters
    are activated on load. The SH degree is inferred from the number of
    ``f_rest_*`` properties.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, props, count = _parse_ply_header(fh)
        names = [name for name, _ in props]
        if fmt == "ascii":
            values = []
            for _ in range(count):
                line = fh.readline()
                if not line:
                    raise AssetFormatError(f"{path.name}: vertex data truncated")
                values.append([float(tok) for tok in line.split()])
            table = {name: np.array([row[i] for row in values]) for i, name in enumerate(names)}
        else:
            dtype = np.dtype([(name, _PLY_DTYPES.get(kind, "")) for name, kind in props])
            payload = fh.read(dtype.itemsize * count)
            if len(payload) < dtype.itemsize * count:
                raise AssetFormatError(
                    f"{path.name}: vertex data truncated "
                    f"(expected {dtype.itemsize * count} bytes, got {len(payload)})"
                )
            rec = np.frombuffer(payload, dtype=dtype, count=count)
            table = {name: rec[name].astype(np.float64) for name in names}

    for required in ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                     "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"):
        if required not in table:
            raise AssetFormatError(f"{path.name}: missing required property {required!r}")
    if count == 0:
        raise AssetFormatError(f"{path.name}: no vertices")

    rest_names = sorted(
        (n for n in names if n.startswith("f_rest_")), key=lambda n: int(n[len("f_rest_"):])
    )
    if len(rest_names) not in _REST_COUNT_TO_DEGREE:
        raise AssetFormatError(
            f"{path.name}: {len(rest_names)} f_rest properties do not match any SH degree"
        )
    degree = _REST_COUNT_TO_DEGREE[len(rest_names)]

    means = np.stack([table["x"], table["y"], table["z"]], axis=-1)
    raw_scales = np.stack([table[f"scale_{i}"] for i in range(3)], axis=-1)
    raw_quat = np.stack([table[f"rot_{i}"] for i in range(4)], axis=-1)
    for name, arr in (("position", means), ("scale", raw_scales),
                      ("rotation", raw_quat), ("opacity", table["opacity"])):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad)[0][0])
            raise AssetDataError(f"{path.name}: non-finite {name} at vertex {idx}")

    n_channel = sh_channel_count(degree) - 1
    sh = np.zeros((count, sh_channel_count(degree), 3), dtype=np.float64)
    sh[:, 0, 0] = table["f_dc_0"]
    sh[:, 0, 1] = table["f_dc_1"]
    sh[:, 0, 2] = table["f_dc_2"]
    # f_rest is channel-major: all red coefficients, then green, then blue.
    for j, name in enumerate(rest_names):
        channel, coeff = divmod(j, n_channel)
        sh[:, 1 + coeff, channel] = table[name]

    opacity, scales, quat = activate_parameters(table["opacity"], raw_scales, raw_quat)
    return SplatCloud(means, scales, quat, opacity, sh)


def save_ply(cloud: SplatCloud, path: str | Path, binary: bool = True) -> None:
    """Write a cloud back to PLY, inverting the load-time activations."""
    path = Path(path)
    raw_opacity, raw_scales = deactivate_parameters(cloud.opacities, cloud.scales)
    n_channel = sh_channel_count(cloud.sh_degree) - 1
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(3 * n_channel)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]

    columns = [cloud.means[:, 0], cloud.means[:, 1], cloud.means[:, 2],
               cloud.sh[:, 0, 0], cloud.sh[:, 0, 1], cloud.sh[:, 0, 2]]
    for channel in range(3):
        for coeff in range(n_channel):
            columns.append(cloud.sh[:, 1 + coeff, channel])
    columns += [raw_opacity, raw_scales[:, 0], raw_scales[:, 1], raw_scales[:, 2],
                cloud.rotations[:, 0], cloud.rotations[:, 1],
                cloud.rotations[:, 2], cloud.rotations[:, 3]]

    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {len(cloud)}")
    header += [f"property float {name}" for name in names]
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        data = np.stack(columns, axis=-1).astype(np.float32)
        if binary:
            fh.write(data.tobytes())
        else:
            for row in data:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
