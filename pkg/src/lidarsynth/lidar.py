"""The virtual LiDAR: scan-pattern grid, ray directions, labeled point-cloud
assembly, and file export/import.

Per-ray angles follow the sensor convention: zenith is positive below the
sensor's horizontal plane, azimuth positive toward the sensor's left. A ray
at angles (zenith t, azimuth p) travels along
``normalize(forward - (tan p / cos t) * right - tan t * up)``, which keeps
the camera-pixel mapping in :mod:`lidarsynth.camera` exact by construction.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .geom import Pose
from .scene import Scene

__all__ = [
    "LidarConfig",
    "RayAngles",
    "LabeledPoint",
    "PointCloud",
    "Provenance",
    "generate_ray_grid",
    "angles_to_direction",
    "scan",
    "range_image",
    "export_cloud",
    "read_kitti_bin",
    "read_labels",
    "load_cloud_files",
]

_GRID_EPS = 1e-9  # guards floor() against 25.999999... artifacts


@dataclass(frozen=True)
class LidarConfig:
    """Scan-pattern parameters. Angles in degrees, range in meters.

    The defaults emulate a 64-beam, forward-facing 90 degree unit:
    64 rows x 512 columns.
    """

    vertical_fov: float = 26.0  # total vertical FOV
    vertical_res: float = 0.41
    horizontal_fov: float = 90.0  # total horizontal FOV
    horizontal_res: float = 0.176
    pitch: float = 0.0  # positive tilts the whole fan downward
    max_range: float = 80.0
    frequency: float = 10.0  # Hz; used for drive-path pose spacing
    noise_sigma: float = 0.0  # optional Gaussian range jitter, off by default

    def __post_init__(self):
        if not 0 < self.vertical_res <= self.vertical_fov:
            raise ValueError("need 0 < vertical_res <= vertical_fov")
        if not 0 < self.horizontal_res <= self.horizontal_fov:
            raise ValueError("need 0 < horizontal_res <= horizontal_fov")
        if not 0 < self.horizontal_fov <= 360.0:
            raise ValueError("horizontal_fov must be in (0, 360]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def n_rows(self) -> int:
        return int(np.floor(self.vertical_fov / self.vertical_res + _GRID_EPS)) + 1

    @property
    def n_cols(self) -> int:
        return (
            int(np.floor(self.horizontal_fov / self.horizontal_res + _GRID_EPS)) + 1
        )

    @property
    def half_vertical_fov(self) -> float:
        """Half the vertical FOV, degrees."""
        return self.vertical_fov / 2.0


@dataclass(frozen=True)
class RayAngles:
    """One grid ray: zenith/azimuth in radians plus its (row, col) index."""

    zenith: float
    azimuth: float
    row: int
    col: int


@dataclass(frozen=True)
class Provenance:
    scene_id: str
    cell: Optional[tuple] = None


@dataclass(frozen=True)
class LabeledPoint:
    xyz: np.ndarray  # sensor frame
    range: float
    row: int
    col: int
    class_id: int
    instance_id: int


@dataclass
class PointCloud:
    """Struct-of-arrays point cloud in the sensor frame."""

    xyz: np.ndarray  # (N, 3) float64
    ranges: np.ndarray  # (N,)
    rows: np.ndarray  # (N,) int32
    cols: np.ndarray  # (N,) int32
    class_id: np.ndarray  # (N,) int32
    instance_id: np.ndarray  # (N,) int32
    config: LidarConfig
    pose: Pose
    provenance: Optional[Provenance] = None

    def __len__(self) -> int:
        return len(self.ranges)

    def point(self, i: int) -> LabeledPoint:
        return LabeledPoint(
            self.xyz[i],
            float(self.ranges[i]),
            int(self.rows[i]),
            int(self.cols[i]),
            int(self.class_id[i]),
            int(self.instance_id[i]),
        )


def _grid_1d(config: LidarConfig):
    """(zenith_rows, azimuth_cols) in radians, endpoints inclusive."""
    t0 = config.pitch - config.vertical_fov / 2.0
    thetas = np.deg2rad(t0 + config.vertical_res * np.arange(config.n_rows))
    p0 = -config.horizontal_fov / 2.0
    phis = np.deg2rad(p0 + config.horizontal_res * np.arange(config.n_cols))
    return thetas, phis


def _grid_arrays(config: LidarConfig):
    """Flat row-major (zenith, azimuth, row, col) arrays for every ray."""
    thetas, phis = _grid_1d(config)
    t = np.repeat(thetas, config.n_cols)
    p = np.tile(phis, config.n_rows)
    rows = np.repeat(np.arange(config.n_rows, dtype=np.int32), config.n_cols)
    cols = np.tile(np.arange(config.n_cols, dtype=np.int32), config.n_rows)
    return t, p, rows, cols


def generate_ray_grid(config: LidarConfig) -> list:
    """All scan rays in row-major order.

    Rows r = 0..floor(fov/res) at zenith pitch - fov/2 + r*res; columns
    likewise across the horizontal FOV, both endpoints included.
    """
    t, p, rows, cols = _grid_arrays(config)
    return [
        RayAngles(float(ti), float(pi), int(ri), int(ci))
        for ti, pi, ri, ci in zip(t, p, rows, cols)
    ]


def _directions_sensor(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Unit ray directions in the sensor frame for radian angle arrays."""
    if np.any(np.abs(thetas) >= np.pi / 2) or np.any(np.abs(phis) >= np.pi / 2):
        raise ValueError("ray angles must satisfy |zenith|, |azimuth| < 90 deg")
    d = np.stack(
        [
            np.ones_like(thetas),
            -np.tan(phis) / np.cos(thetas),
            -np.tan(thetas),
        ],
        axis=-1,
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def angles_to_direction(
    zenith: float, azimuth: float, pose: Optional[Pose] = None
) -> np.ndarray:
    """World-frame unit direction of the ray at (zenith, azimuth) radians."""
    d = _directions_sensor(np.atleast_1d(float(zenith)), np.atleast_1d(float(azimuth)))
    if pose is not None:
        d = pose.rotate(d)
    return d[0]


def scan(
    scene: Scene,
    config: LidarConfig,
    pose: Optional[Pose] = None,
    provenance: Optional[Provenance] = None,
    noise_seed: int = 0,
) -> PointCloud:
    """Cast the full ray grid against a scene.

    Misses and returns beyond max_range produce no point. Point coordinates
    are stored in the sensor frame; labels come from the hit object.
    """
    pose = pose if pose is not None else Pose.identity()
    pose.validate()
    thetas, phis, rows, cols = _grid_arrays(config)
    d_sensor = _directions_sensor(thetas, phis)
    d_world = pose.rotate(d_sensor)
    origins = np.broadcast_to(pose.position, d_world.shape)
    t, obj, _tri = scene.accel.first_hit_batch(origins, d_world, config.max_range)

    if config.noise_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        jitter = rng.normal(0.0, config.noise_sigma, size=len(t))
        hit = np.isfinite(t)
        t = np.where(hit, np.clip(t + jitter, 1e-5, config.max_range), t)

    mask = np.isfinite(t)
    t_hit = t[mask]
    xyz = d_sensor[mask] * t_hit[:, None]
    obj_hit = obj[mask]
    return PointCloud(
        xyz=xyz,
        ranges=t_hit,
        rows=rows[mask],
        cols=cols[mask],
        class_id=scene.object_class[obj_hit].astype(np.int32),
        instance_id=scene.object_instance[obj_hit].astype(np.int32),
        config=config,
        pose=pose,
        provenance=provenance,
    )


def range_image(cloud: PointCloud, config: LidarConfig):
    """Dense (rows x cols) grid of (range, class_id); misses are range 0.

    The cloud must have been produced by the same scan configuration.
    """
    if cloud.config != config:
        raise ValueError("point cloud was produced by a different scan config")
    ranges = np.zeros((config.n_rows, config.n_cols), dtype=np.float64)
    classes = np.zeros((config.n_rows, config.n_cols), dtype=np.int32)
    ranges[cloud.rows, cloud.cols] = cloud.ranges
    classes[cloud.rows, cloud.cols] = cloud.class_id
    return ranges, classes


# ---------------------------------------------------------------------------
# Export / import
#
# All on-disk coordinates use the common sensor convention x forward,
# y LEFT, z up; internal arrays keep y right, so y is negated both ways.


def _kitti_xyz(cloud: PointCloud) -> np.ndarray:
    out = cloud.xyz.copy()
    out[:, 1] = -out[:, 1]
    return out


def _check_label_width(cloud: PointCloud) -> None:
    for name, arr in (("class_id", cloud.class_id), ("instance_id", cloud.instance_id)):
        if len(arr) and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise ValueError(f"{name} does not fit in 16 bits")


def export_cloud(
    cloud: PointCloud, fmt: str, path, label_path=None
) -> list:
    """Write a cloud as ``kitti_bin`` (plus a label companion), ``ply``, or
    ``csv``. Returns the written paths."""
    path = Path(path)
    try:
        if fmt == "kitti_bin":
            return _write_kitti(cloud, path, label_path)
        if fmt == "ply":
            return _write_ply(cloud, path)
        if fmt == "csv":
            return _write_csv(cloud, path)
    except OSError as exc:
        raise OSError(f"while writing {path}: {exc}") from exc
    raise ValueError(f"unknown export format {fmt!r}")


def _write_kitti(cloud: PointCloud, path: Path, label_path) -> list:
    _check_label_width(cloud)
    label_path = Path(label_path) if label_path else path.with_suffix(".label")
    xyz = _kitti_xyz(cloud)
    rec = np.zeros((len(cloud), 4), dtype="<f4")
    rec[:, :3] = xyz.astype("<f4")
    path.write_bytes(rec.tobytes())
    words = (
        cloud.class_id.astype(np.uint32)
        | (cloud.instance_id.astype(np.uint32) << np.uint32(16))
    ).astype("<u4")
    label_path.write_bytes(words.tobytes())
    return [path, label_path]


def _point_rows(cloud: PointCloud):
    xyz = _kitti_xyz(cloud)
    for i in range(len(cloud)):
        yield (
            f"{xyz[i, 0]:.9g}",
            f"{xyz[i, 1]:.9g}",
            f"{xyz[i, 2]:.9g}",
            f"{cloud.ranges[i]:.9g}",
            str(int(cloud.class_id[i])),
            str(int(cloud.instance_id[i])),
        )


def _write_ply(cloud: PointCloud, path: Path) -> list:
    header = (
        "ply\n"
        "format ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property float range\n"
        "property ushort class\n"
        "property ushort instance\n"
        "end_header\n"
    )
    _check_label_width(cloud)
    body = "".join(" ".join(row) + "\n" for row in _point_rows(cloud))
    path.write_text(header + body)
    return [path]


def _write_csv(cloud: PointCloud, path: Path) -> list:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "z", "range", "class_id", "instance_id"])
    for row in _point_rows(cloud):
        writer.writerow(row)
    path.write_text(buf.getvalue())
    return [path]


def read_kitti_bin(path):
    """Read a binary cloud back into the internal sensor convention.

    Returns (xyz, intensity); xyz is float64 holding the file's float32
    values with y negated back to y-right.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % 16:
        raise ValueError(f"{path}: size {len(raw)} is not a multiple of 16")
    rec = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    xyz = rec[:, :3].copy()
    xyz[:, 1] = -xyz[:, 1]
    return xyz, rec[:, 3].copy()


def read_labels(path):
    """Read a label companion file: (class_id, instance_id) int32 arrays."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % 4:
        raise ValueError(f"{path}: size {len(raw)} is not a multiple of 4")
    words = np.frombuffer(raw, dtype="<u4")
    return (
        (words & np.uint32(0xFFFF)).astype(np.int32),
        (words >> np.uint32(16)).astype(np.int32),
    )


def load_cloud_files(bin_path, label_path):
    """(xyz, class_id, instance_id) from a bin/label pair, with the point
    counts cross-checked."""
    xyz, _ = read_kitti_bin(bin_path)
    cls, inst = read_labels(label_path)
    if len(xyz) != len(cls):
        raise ValueError(
            f"point count mismatch: {bin_path} has {len(xyz)}, "
            f"{label_path} has {len(cls)}"
        )
    return xyz, cls, inst
