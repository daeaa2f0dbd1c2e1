"""Core 3D geometry: rays, triangles, rigid poses, and accelerated first-hit
queries.

Conventions used across the package:

* the world frame is X forward, Y right, Z up;
* free vectors and points are plain ``(3,)`` float64 numpy arrays;
* distances are meters, angles radians unless a function says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from ._kernels import DET_EPS, SELF_HIT_EPS, TIE_EPS

__all__ = [
    "vec3",
    "unit",
    "Ray",
    "Triangle",
    "Hit",
    "Pose",
    "AccelIndex",
    "build_accel",
    "first_hit",
    "first_hit_brute",
    "triangle_areas",
    "SELF_HIT_EPS",
    "TIE_EPS",
]

DEGENERATE_AREA = 1e-12
UNIT_TOL = 1e-9
_LEAF_SIZE = 8


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize a vector; raises on zero length."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


def triangle_areas(verts: np.ndarray) -> np.ndarray:
    """Areas of an (N, 3, 3) triangle array."""
    e1 = verts[:, 1] - verts[:, 0]
    e2 = verts[:, 2] - verts[:, 0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


@dataclass(frozen=True)
class Ray:
    """A ray with a finite reach. ``direction`` must be unit length."""

    origin: np.ndarray
    direction: np.ndarray
    max_range: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(
            self, "direction", np.asarray(self.direction, dtype=np.float64)
        )
        if self.max_range <= 0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"ray direction must be unit length, |d|={n!r}")


@dataclass(frozen=True)
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    object_index: int = 0

    def __post_init__(self):
        for name in ("v0", "v1", "v2"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.float64)
            )

    @property
    def area(self) -> float:
        e1 = self.v1 - self.v0
        e2 = self.v2 - self.v0
        return 0.5 * float(np.linalg.norm(np.cross(e1, e2)))


@dataclass(frozen=True)
class Hit:
    """First intersection of a ray with scene geometry."""

    point: np.ndarray
    distance: float
    object_index: int
    class_id: int
    instance_id: int
    triangle_index: int = -1


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping sensor coordinates into the world frame.

    ``rotation`` columns are the sensor's forward/right/up axes expressed in
    world coordinates.
    """

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "position", p)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, position=(0.0, 0.0, 0.0)) -> "Pose":
        """Pose rotated about world Z; yaw 0 faces +X, positive yaw turns
        the forward axis toward +Y."""
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.asarray(position, dtype=np.float64))

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def up(self) -> np.ndarray:
        return self.rotation[:, 2]

    def validate(self, tol: float = UNIT_TOL) -> None:
        err = float(np.abs(self.rotation.T @ self.rotation - np.eye(3)).max())
        if err > tol:
            raise ValueError(f"pose rotation is not orthonormal (error {err:.3e})")

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.position

    def rotate(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T

    def inverse_points(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.position) @ self.rotation


def ray_triangle_intersect(ray: Ray, tri: Triangle):
    """Smallest t in (SELF_HIT_EPS, max_range] where the ray meets the
    triangle, or None.

    Edges count as inside; both faces intersect; a degenerate triangle is a
    miss, never an error.
    """
    e1 = tri.v1 - tri.v0
    e2 = tri.v2 - tri.v0
    d = ray.direction
    p = np.cross(d, e2)
    det = float(e1 @ p)
    if abs(det) < DET_EPS:
        return None
    inv = 1.0 / det
    tvec = ray.origin - tri.v0
    u = float(tvec @ p) * inv
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(tvec, e1)
    v = float(d @ q) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ q) * inv
    if t <= SELF_HIT_EPS or t > ray.max_range:
        return None
    return t, ray.origin + t * d


class AccelIndex:
    """AABB-tree index over a triangle soup for first-hit queries.

    Immutable once built; safe to share across workers. Queries return the
    minimum-distance hit, with sub-TIE_EPS distance ties resolved toward the
    lowest (object_index, input triangle index) pair.
    """

    def __init__(
        self,
        verts: np.ndarray,
        object_index: np.ndarray,
        object_labels: Optional[np.ndarray] = None,
    ):
        verts = np.ascontiguousarray(verts, dtype=np.float64).reshape(-1, 3, 3)
        object_index = np.asarray(object_index, dtype=np.int32).reshape(-1)
        if verts.shape[0] != object_index.shape[0]:
            raise ValueError("verts and object_index lengths differ")
        keep = triangle_areas(verts) > DEGENERATE_AREA if len(verts) else np.zeros(0, bool)
        orig = np.nonzero(keep)[0].astype(np.int32)
        verts = verts[keep]
        self.n_input = int(object_index.shape[0])
        self.object_index = object_index
        if object_labels is None:
            k = int(object_index.max()) + 1 if len(object_index) else 1
            object_labels = np.zeros((k, 2), dtype=np.int32)
        self.object_labels = np.asarray(object_labels, dtype=np.int32).reshape(-1, 2)
        if len(verts) and int(object_index[orig].max()) >= len(self.object_labels):
            raise ValueError("object_index exceeds the label table")

        order = self._build(verts)
        self._v0 = np.ascontiguousarray(verts[order, 0])
        self._e1 = np.ascontiguousarray(verts[order, 1] - verts[order, 0])
        self._e2 = np.ascontiguousarray(verts[order, 2] - verts[order, 0])
        self._obj = np.ascontiguousarray(object_index[orig][order])
        self._orig = np.ascontiguousarray(orig[order])

    def _build(self, verts: np.ndarray) -> np.ndarray:
        n = verts.shape[0]
        if n:
            tb_min = verts.min(axis=1)
            tb_max = verts.max(axis=1)
            centroids = verts.mean(axis=1)
        order = np.arange(n, dtype=np.int64)
        bmin, bmax = [], []
        left, right, start, count = [], [], [], []

        def node(lo, hi):
            nid = len(bmin)
            if hi > lo:
                idx = order[lo:hi]
                bmin.append(tb_min[idx].min(axis=0))
                bmax.append(tb_max[idx].max(axis=0))
            else:
                bmin.append(np.zeros(3))
                bmax.append(np.full(3, -1.0))  # inverted box: never hit
            left.append(-1)
            right.append(-1)
            start.append(lo)
            count.append(hi - lo)
            return nid

        # Median split on the longest centroid axis, stable so construction
        # is deterministic for a fixed input order.
        stack = [(0, n, node(0, n))]
        while stack:
            lo, hi, nid = stack.pop()
            if hi - lo <= _LEAF_SIZE:
                continue
            idx = order[lo:hi]
            c = centroids[idx]
            ext = c.max(axis=0) - c.min(axis=0)
            axis = int(np.argmax(ext))
            if ext[axis] <= 0.0:
                continue
            key = np.argsort(c[:, axis], kind="stable")
            order[lo:hi] = idx[key]
            mid = lo + (hi - lo) // 2
            lid = node(lo, mid)
            rid = node(mid, hi)
            left[nid] = lid
            right[nid] = rid
            count[nid] = 0
            stack.append((lo, mid, lid))
            stack.append((mid, hi, rid))

        self._node_bmin = np.ascontiguousarray(bmin, dtype=np.float64)
        self._node_bmax = np.ascontiguousarray(bmax, dtype=np.float64)
        self._node_left = np.asarray(left, dtype=np.int32)
        self._node_right = np.asarray(right, dtype=np.int32)
        self._node_start = np.asarray(start, dtype=np.int32)
        self._node_count = np.asarray(count, dtype=np.int32)
        return order

    def __len__(self) -> int:
        return len(self._v0)

    def first_hit_batch(self, origins: np.ndarray, dirs: np.ndarray, max_range):
        """Vector query: (t, object_index, triangle_index) per ray.

        Misses have t = +inf and indices -1. ``max_range`` may be scalar or
        per-ray.
        """
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = origins.shape[0]
        ranges = np.broadcast_to(
            np.asarray(max_range, dtype=np.float64), (n,)
        ).copy()
        if len(self._v0) == 0:
            return (
                np.full(n, np.inf),
                np.full(n, -1, dtype=np.int32),
                np.full(n, -1, dtype=np.int32),
            )
        t = np.empty(n, dtype=np.float64)
        obj = np.empty(n, dtype=np.int32)
        tri = np.empty(n, dtype=np.int32)
        _kernels.bvh_first_hit(
            origins,
            dirs,
            ranges,
            self._node_bmin,
            self._node_bmax,
            self._node_left,
            self._node_right,
            self._node_start,
            self._node_count,
            self._v0,
            self._e1,
            self._e2,
            self._obj,
            self._orig,
            t,
            obj,
            tri,
        )
        return t, obj, tri

    def first_hit(self, ray: Ray) -> Optional[Hit]:
        t, obj, tri = self.first_hit_batch(
            ray.origin[None, :], ray.direction[None, :], ray.max_range
        )
        if not np.isfinite(t[0]):
            return None
        o = int(obj[0])
        cls, inst = (int(x) for x in self.object_labels[o])
        return Hit(
            point=ray.origin + float(t[0]) * ray.direction,
            distance=float(t[0]),
            object_index=o,
            class_id=cls,
            instance_id=inst,
            triangle_index=int(tri[0]),
        )


def build_accel(
    triangles: Sequence[Triangle] | np.ndarray,
    object_index: Optional[np.ndarray] = None,
    object_labels: Optional[np.ndarray] = None,
) -> AccelIndex:
    """Build an AccelIndex from Triangle objects or a raw (N, 3, 3) array."""
    if isinstance(triangles, np.ndarray):
        verts = triangles
        if object_index is None:
            object_index = np.zeros(len(verts), dtype=np.int32)
    else:
        tris = list(triangles)
        verts = np.array(
            [[t.v0, t.v1, t.v2] for t in tris], dtype=np.float64
        ).reshape(-1, 3, 3)
        object_index = np.array(
            [t.object_index for t in tris], dtype=np.int32
        ).reshape(-1)
    return AccelIndex(verts, object_index, object_labels)


def first_hit(index: AccelIndex, ray: Ray) -> Optional[Hit]:
    """Nearest hit of ``ray`` against the indexed triangles, or None."""
    return index.first_hit(ray)


def first_hit_brute(
    verts: np.ndarray,
    object_index: np.ndarray,
    origins: np.ndarray,
    dirs: np.ndarray,
    max_range: float,
):
    """First hit by testing every triangle per ray; the reference for the
    accelerated path. Returns (t, object_index, triangle_index) arrays with
    the same miss/tie conventions as AccelIndex.first_hit_batch.
    """
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3, 3)
    object_index = np.asarray(object_index, dtype=np.int64).reshape(-1)
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n_rays = origins.shape[0]
    n_tri = verts.shape[0]
    t_out = np.full(n_rays, np.inf)
    obj_out = np.full(n_rays, -1, dtype=np.int32)
    tri_out = np.full(n_rays, -1, dtype=np.int32)
    if n_tri == 0:
        return t_out, obj_out, tri_out

    v0 = verts[:, 0]
    e1 = verts[:, 1] - verts[:, 0]
    e2 = verts[:, 2] - verts[:, 0]
    orig = np.arange(n_tri, dtype=np.int64)
    # Key for the deterministic tie-break: lowest object, then input index.
    tie_key = object_index * n_tri + orig

    chunk = max(1, int(2_000_000 // max(n_tri, 1)))
    for lo in range(0, n_rays, chunk):
        hi = min(lo + chunk, n_rays)
        d0 = dirs[lo:hi, 0:1]
        d1 = dirs[lo:hi, 1:2]
        d2 = dirs[lo:hi, 2:3]
        # p = d x e2, one (R, N) array per component
        p0 = d1 * e2[:, 2] - d2 * e2[:, 1]
        p1 = d2 * e2[:, 0] - d0 * e2[:, 2]
        p2 = d0 * e2[:, 1] - d1 * e2[:, 0]
        det = p0 * e1[:, 0] + p1 * e1[:, 1] + p2 * e1[:, 2]
        inv = 1.0 / np.where(np.abs(det) < DET_EPS, 1.0, det)
        t0 = origins[lo:hi, 0:1] - v0[:, 0]
        t1 = origins[lo:hi, 1:2] - v0[:, 1]
        t2 = origins[lo:hi, 2:3] - v0[:, 2]
        u = (t0 * p0 + t1 * p1 + t2 * p2) * inv
        q0 = t1 * e1[:, 2] - t2 * e1[:, 1]
        q1 = t2 * e1[:, 0] - t0 * e1[:, 2]
        q2 = t0 * e1[:, 1] - t1 * e1[:, 0]
        v = (d0 * q0 + d1 * q1 + d2 * q2) * inv
        t = (q0 * e2[:, 0] + q1 * e2[:, 1] + q2 * e2[:, 2]) * inv
        valid = (
            (np.abs(det) >= DET_EPS)
            & (u >= 0.0)
            & (u <= 1.0)
            & (v >= 0.0)
            & (u + v <= 1.0)
            & (t > SELF_HIT_EPS)
            & (t <= max_range)
        )
        t = np.where(valid, t, np.inf)
        tmin = t.min(axis=1)
        hit_rows = np.isfinite(tmin)
        tie = t <= (tmin[:, None] + TIE_EPS)
        keyed = np.where(tie, tie_key[None, :], np.iinfo(np.int64).max)
        pick = keyed.argmin(axis=1)
        rows = np.nonzero(hit_rows)[0]
        t_out[lo + rows] = t[rows, pick[rows]]
        obj_out[lo + rows] = object_index[pick[rows]]
        tri_out[lo + rows] = pick[rows]
    return t_out, obj_out, tri_out
