"""Camera model, scanner-to-pixel calibration, a ray-cast renderer with
semantic ground truth, and point-on-image overlay checks.

Calibration geometry: the camera shares its center with the scanner, so a
ray at (zenith t, azimuth p) meets the near clipping plane at

    P' = F_c + f*x_c - (f/cos t)*tan(p)*y_c - f*tan(t)*z_c

and its pixel follows by similar triangles,

    i = (R_m/m) * (f*tan(g)*(m/n) - (f/cos t)*tan(p))
    j = (R_n/n) * (f*tan(g) + f*tan(t))

with g the half vertical FOV and (m, n) the near-plane width/height. The
near-plane distance f cancels, so ``calibrate_pixel`` uses the reduced form.
Pixel coordinates are real-valued, measured from the top-left image corner;
rasterization rounds half-up.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .geom import Pose
from .lidar import LidarConfig, PointCloud, Provenance, _grid_1d
from .scene import CLASS_NAMES, Scene

__all__ = [
    "CameraConfig",
    "CalibrationResult",
    "RenderedImage",
    "calibrate_pixel",
    "laser_endpoints",
    "default_far_coefficient",
    "project_point",
    "project_points",
    "contains_lidar_fov",
    "render",
    "overlay_points",
    "write_ppm",
    "read_ppm",
    "write_pgm16",
    "read_pgm16",
    "write_palette",
]

ORTHO_TOL = 1e-9
FOG_DISTANCE = 60.0  # m, fog extinction length
RAIN_DARKEN = 0.7
RENDER_RANGE = 1e4  # m, far limit for camera rays

# Display colors for label viewers and overlays, uint8 RGB per class.
CLASS_DISPLAY_COLORS = {0: (110, 110, 110), 1: (40, 90, 230)}
OVERLAY_MARK = np.array([40, 90, 230], dtype=np.uint8)


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera sharing the scanner center.

    ``axes`` columns are forward/right/up unit vectors in world coordinates;
    ``half_vertical_fov`` is radians; resolution is (width, height) pixels.
    """

    position: np.ndarray
    axes: np.ndarray
    half_vertical_fov: float
    near_distance: float = 0.15
    width: int = 1024
    height: int = 512

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        a = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "axes", a)
        err = float(np.abs(a.T @ a - np.eye(3)).max())
        if err > ORTHO_TOL:
            raise ValueError(f"camera axes are not orthonormal (error {err:.3e})")
        if not 0.0 < self.half_vertical_fov < np.pi / 2:
            raise ValueError("half_vertical_fov must be in (0, pi/2)")
        if self.near_distance <= 0:
            raise ValueError("near_distance must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")

    @classmethod
    def from_pose(cls, pose: Pose, half_vertical_fov: float, **kw) -> "CameraConfig":
        return cls(pose.position, pose.rotation, half_vertical_fov, **kw)

    @property
    def forward(self) -> np.ndarray:
        return self.axes[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.axes[:, 1]

    @property
    def up(self) -> np.ndarray:
        return self.axes[:, 2]

    @property
    def near_height(self) -> float:
        return 2.0 * self.near_distance * np.tan(self.half_vertical_fov)

    @property
    def near_width(self) -> float:
        return self.near_height * self.width / self.height

    @property
    def near_center(self) -> np.ndarray:
        return self.position + self.near_distance * self.forward

    @property
    def half_horizontal_fov(self) -> float:
        return float(
            np.arctan(np.tan(self.half_vertical_fov) * self.width / self.height)
        )


@dataclass(frozen=True)
class CalibrationResult:
    """Pixel plus the 3D anchors of one calibrated ray."""

    i: float
    j: float
    near_point: np.ndarray  # on the near plane
    far_point: np.ndarray
    far_coefficient: float


def _check_angles(zenith, azimuth):
    if np.any(np.abs(zenith) >= np.pi / 2) or np.any(np.abs(azimuth) >= np.pi / 2):
        raise ValueError("angles must satisfy |zenith|, |azimuth| < 90 deg")


def calibrate_pixel(zenith, azimuth, cam: CameraConfig):
    """Pixel (i, j) of the scan ray at (zenith, azimuth) radians.

    i runs from the left edge, j from the top. The result does not depend
    on the near-plane distance. Out-of-frustum rays simply produce
    out-of-bounds coordinates. Accepts scalars or arrays.
    """
    zenith = np.asarray(zenith, dtype=np.float64)
    azimuth = np.asarray(azimuth, dtype=np.float64)
    _check_angles(zenith, azimuth)
    scale = cam.height / (2.0 * np.tan(cam.half_vertical_fov))
    i = cam.width / 2.0 - scale * np.tan(azimuth) / np.cos(zenith)
    j = cam.height / 2.0 + scale * np.tan(zenith)
    if i.ndim == 0:
        return float(i), float(j)
    return i, j


def laser_endpoints(zenith, azimuth, cam: CameraConfig, k: float):
    """Near-plane point P' of a scan ray and the far point F_c + k*(P'-F_c).

    The caller picks k large enough that the far point exceeds the scanner
    range (k >= max_range / near_distance).
    """
    zenith = np.asarray(zenith, dtype=np.float64)
    azimuth = np.asarray(azimuth, dtype=np.float64)
    _check_angles(zenith, azimuth)
    if k <= 0:
        raise ValueError("far coefficient k must be positive")
    f = cam.near_distance
    a = (f / np.cos(zenith)) * np.tan(azimuth)
    b = f * np.tan(zenith)
    p_near = (
        cam.position
        + f * cam.forward
        - a[..., None] * cam.right
        - b[..., None] * cam.up
    )
    p_far = cam.position + k * (p_near - cam.position)
    if zenith.ndim == 0:
        return p_near.reshape(3), p_far.reshape(3)
    return p_near, p_far


def default_far_coefficient(cam: CameraConfig, max_range: float) -> float:
    """A comfortably large far-point coefficient: 10x the scanner range."""
    return 10.0 * max_range / cam.near_distance


def calibrate_ray(zenith, azimuth, cam: CameraConfig, k: float) -> CalibrationResult:
    """Full calibration record for one ray."""
    i, j = calibrate_pixel(zenith, azimuth, cam)
    p_near, p_far = laser_endpoints(zenith, azimuth, cam, k)
    return CalibrationResult(i, j, p_near, p_far, k)


def project_points(points: np.ndarray, cam: CameraConfig):
    """Perspective projection of world points: (i, j, valid) arrays.

    The independent check for calibrate_pixel: project through camera
    coordinates (u forward, v right, w up); points at or behind the center
    (u <= 0) are invalid.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3) - cam.position
    u = pts @ cam.forward
    v = pts @ cam.right
    w = pts @ cam.up
    valid = u > 0.0
    safe_u = np.where(valid, u, 1.0)
    f = cam.near_distance
    m, n = cam.near_width, cam.near_height
    i = (cam.width / m) * (m / 2.0 + f * v / safe_u)
    j = (cam.height / n) * (n / 2.0 - f * w / safe_u)
    return i, j, valid


def project_point(point: np.ndarray, cam: CameraConfig):
    """(i, j) pixel of one world point, or None if not in front of the
    camera."""
    i, j, valid = project_points(np.asarray(point)[None, :], cam)
    if not valid[0]:
        return None
    return float(i[0]), float(j[0])


def contains_lidar_fov(cam: CameraConfig, config: LidarConfig) -> bool:
    """True when the camera frustum covers the whole scan fan."""
    half_v = np.deg2rad(config.half_vertical_fov + abs(config.pitch))
    half_h = np.deg2rad(config.horizontal_fov / 2.0)
    return (
        cam.half_vertical_fov >= half_v and cam.half_horizontal_fov >= half_h
    )


# ---------------------------------------------------------------------------
# Rendering


@dataclass
class RenderedImage:
    """Color plus per-pixel semantic/instance ground truth."""

    color: np.ndarray  # (H, W, 3) uint8
    semantic: np.ndarray  # (H, W) int32
    instance: np.ndarray  # (H, W) int32
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        if not (
            self.color.shape[:2] == self.semantic.shape == self.instance.shape
        ):
            raise ValueError("image buffers must share dimensions")


def _sun_direction(time_of_day: float):
    """Unit vector toward the sun plus its daylight factor in [0, 1]."""
    elev = np.deg2rad(75.0) * np.sin(np.pi * (time_of_day - 6.0) / 12.0)
    azim = np.deg2rad(15.0) * (time_of_day - 12.0)
    s = np.array(
        [
            np.cos(elev) * np.cos(azim),
            np.cos(elev) * np.sin(azim),
            np.sin(elev),
        ]
    )
    return s, float(np.clip(np.sin(elev), 0.0, 1.0))


def render(
    scene: Scene, cam: CameraConfig, provenance: Optional[Provenance] = None
) -> RenderedImage:
    """One primary ray per pixel center; flat Lambert shading lit by a sun
    position derived from the scene's time of day.

    Weather and time touch only the color buffer: fog blends toward gray
    with factor 1 - exp(-d / 60 m), rain darkens by 0.7. Semantic and
    instance buffers depend on geometry alone; background pixels are 0.
    """
    w_px, h_px = cam.width, cam.height
    ix = (np.arange(w_px) + 0.5) / w_px - 0.5
    iy = 0.5 - (np.arange(h_px) + 0.5) / h_px
    off_y, off_z = np.meshgrid(ix * cam.near_width, iy * cam.near_height)
    pix = (
        cam.near_center[None, None, :]
        + off_y[..., None] * cam.right[None, None, :]
        + off_z[..., None] * cam.up[None, None, :]
    )
    dirs = pix - cam.position
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    dirs = dirs.reshape(-1, 3)
    origins = np.broadcast_to(cam.position, dirs.shape)
    t, obj, tri = scene.accel.first_hit_batch(origins, dirs, RENDER_RANGE)

    hit = np.isfinite(t)
    semantic = np.zeros(len(t), dtype=np.int32)
    instance = np.zeros(len(t), dtype=np.int32)
    semantic[hit] = scene.object_class[obj[hit]]
    instance[hit] = scene.object_instance[obj[hit]]

    sun, daylight = _sun_direction(scene.time_of_day)
    sky = np.array([0.55, 0.72, 0.90]) * (0.15 + 0.85 * daylight)
    color = np.empty((len(t), 3), dtype=np.float64)
    color[:] = sky
    if hit.any():
        verts = scene.tri_verts[tri[hit]]
        normals = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        lambert = np.abs(normals @ sun)  # faces are unoriented
        shade = 0.25 + 0.75 * lambert * daylight
        color[hit] = scene.object_color[obj[hit]] * shade[:, None]

    if scene.weather == "fog":
        blend = np.ones(len(t))
        blend[hit] = 1.0 - np.exp(-t[hit] / FOG_DISTANCE)
        color = color * (1.0 - blend[:, None]) + 0.5 * blend[:, None]
    elif scene.weather == "rain":
        color = color * RAIN_DARKEN

    rgb = np.floor(np.clip(color, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return RenderedImage(
        color=rgb.reshape(h_px, w_px, 3),
        semantic=semantic.reshape(h_px, w_px),
        instance=instance.reshape(h_px, w_px),
        provenance=provenance,
    )


def overlay_points(
    image: RenderedImage,
    cloud: PointCloud,
    class_filter: Iterable[int],
    cam: CameraConfig,
):
    """Mark calibrated pixel positions of the filtered points on the color
    image and measure label agreement.

    Returns (overlay color array, consistency score): the score is the
    fraction of filtered points whose half-up-rounded pixel lands on a
    semantic pixel of the point's own class; trivially 1.0 with no points.
    """
    if (
        image.provenance is not None
        and cloud.provenance is not None
        and image.provenance != cloud.provenance
    ):
        raise ValueError(
            f"image is from {image.provenance.scene_id!r} but cloud is from "
            f"{cloud.provenance.scene_id!r}"
        )
    wanted = np.isin(cloud.class_id, np.asarray(list(class_filter), dtype=np.int64))
    overlay = image.color.copy()
    if not wanted.any():
        return overlay, 1.0

    thetas, phis = _grid_1d(cloud.config)
    i, j = calibrate_pixel(thetas[cloud.rows[wanted]], phis[cloud.cols[wanted]], cam)
    px = np.floor(i + 0.5).astype(np.int64)
    py = np.floor(j + 0.5).astype(np.int64)
    inb = (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
    classes = cloud.class_id[wanted]
    consistent = np.zeros(len(px), dtype=bool)
    consistent[inb] = image.semantic[py[inb], px[inb]] == classes[inb]
    overlay[py[inb], px[inb]] = OVERLAY_MARK
    return overlay, float(consistent.mean())


# ---------------------------------------------------------------------------
# Image files


def write_ppm(path, color: np.ndarray) -> Path:
    """Binary PPM (P6, 8-bit) from an (H, W, 3) uint8 array."""
    path = Path(path)
    arr = np.ascontiguousarray(color, dtype=np.uint8)
    h, w, _ = arr.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + arr.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    magic, rest = raw.split(b"\n", 1)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    dims, rest = rest.split(b"\n", 1)
    maxval, rest = rest.split(b"\n", 1)
    w, h = (int(v) for v in dims.split())
    if int(maxval) != 255:
        raise ValueError(f"{path}: expected 8-bit PPM")
    return np.frombuffer(rest, dtype=np.uint8, count=h * w * 3).reshape(h, w, 3)


def write_pgm16(path, values: np.ndarray) -> Path:
    """16-bit binary PGM (P5, big-endian samples) from an (H, W) array."""
    path = Path(path)
    arr = np.asarray(values)
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise ValueError("values do not fit in 16 bits")
    h, w = arr.shape
    path.write_bytes(
        f"P5\n{w} {h}\n65535\n".encode() + arr.astype(">u2").tobytes()
    )
    return path


def read_pgm16(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    magic, rest = raw.split(b"\n", 1)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    dims, rest = rest.split(b"\n", 1)
    maxval, rest = rest.split(b"\n", 1)
    w, h = (int(v) for v in dims.split())
    if int(maxval) != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM")
    return (
        np.frombuffer(rest, dtype=">u2", count=h * w)
        .reshape(h, w)
        .astype(np.int32)
    )


def write_palette(path) -> Path:
    """Sidecar text palette: one `class_id name r g b` line per class."""
    path = Path(path)
    lines = [
        f"{cid} {CLASS_NAMES[cid]} {r} {g} {b}"
        for cid, (r, g, b) in sorted(CLASS_DISPLAY_COLORS.items())
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
