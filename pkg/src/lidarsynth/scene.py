"""Scene construction: parametric car assets, seeded background presets, a
JSON scene/sweep file format, modification-space sweeps, and the drive-path
scan scheduler.

Placement offsets follow the sensor-relative convention used throughout the
package: ``x`` is the left-right offset (positive to the right of the
sensor), ``y`` the forward-backward offset (positive ahead). They map to the
world frame as ``world = (y, x, 0)``. Angles are radians in code and degrees
in scene files.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geom import AccelIndex, Pose

__all__ = [
    "CLASS_BACKGROUND",
    "CLASS_CAR",
    "CLASS_NAMES",
    "WEATHERS",
    "Asset",
    "SceneObject",
    "Scene",
    "Background",
    "SweepSpec",
    "EgoPath",
    "SceneFormatError",
    "box_triangles",
    "builtin_assets",
    "builtin_backgrounds",
    "background_preset",
    "asset_by_name",
    "make_scene",
    "place_car",
    "load_scene",
    "load_sweep",
    "standard_sweep_spec",
    "instantiate_sweep",
    "ego_scan_poses",
]

CLASS_BACKGROUND = 0
CLASS_CAR = 1
CLASS_NAMES = {CLASS_BACKGROUND: "background", CLASS_CAR: "car"}

WEATHERS = ("clear", "rain", "fog")

N_BACKGROUND_PRESETS = 16
_BACKGROUND_SEED_BASE = 0x5CE7E
GROUND_HALF_EXTENT = 60.0

# Obstacle-free driving corridor in front of the sensor, so swept cars are
# never boxed in by generated geometry: world X in [-2, 28], |Y| <= 8.
_CORRIDOR_X = (-2.0, 28.0)
_CORRIDOR_HALF_Y = 8.0

FOOTPRINT_TOL = 1e-6


class SceneFormatError(ValueError):
    """A scene or sweep file failed to parse or violated the schema."""


def box_triangles(center, size) -> np.ndarray:
    """12 triangles of an axis-aligned box, as a (12, 3, 3) array."""
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(size, dtype=np.float64) / 2.0
    corners = np.array(
        [
            [sx, sy, sz]
            for sx in (-h[0], h[0])
            for sy in (-h[1], h[1])
            for sz in (-h[2], h[2])
        ]
    ) + c
    # Corner order: index bit 2 = +x, bit 1 = +y, bit 0 = +z.
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, cq, d in quads:
        tris.append([corners[a], corners[b], corners[cq]])
        tris.append([corners[a], corners[cq], corners[d]])
    return np.asarray(tris)


@dataclass(frozen=True)
class Asset:
    """A labeled mesh in its local frame, length along +X and base at z=0."""

    name: str
    triangles: np.ndarray  # (N, 3, 3)
    class_id: int
    base_color: tuple
    footprint: tuple  # (length, width, height)

    def __post_init__(self):
        tris = np.asarray(self.triangles, dtype=np.float64).reshape(-1, 3, 3)
        tris.setflags(write=False)
        object.__setattr__(self, "triangles", tris)
        lo = tris.reshape(-1, 3).min(axis=0)
        hi = tris.reshape(-1, 3).max(axis=0)
        dims = hi - lo
        if np.max(np.abs(dims - np.asarray(self.footprint))) > FOOTPRINT_TOL:
            raise ValueError(
                f"asset {self.name!r}: footprint {self.footprint} does not "
                f"match triangle bounds {tuple(dims)}"
            )


def _car_asset(name, length, width, height, body_frac, cabin_len_frac, color):
    """Two-box car: full-footprint body plus an inset, slightly rear cabin."""
    body_h = body_frac * height
    body = box_triangles((0.0, 0.0, body_h / 2.0), (length, width, body_h))
    cab_l = cabin_len_frac * length
    cab_w = 0.82 * width
    cabin = box_triangles(
        (-0.08 * length, 0.0, body_h + (height - body_h) / 2.0),
        (cab_l, cab_w, height - body_h),
    )
    return Asset(
        name=name,
        triangles=np.concatenate([body, cabin]),
        class_id=CLASS_CAR,
        base_color=color,
        footprint=(length, width, height),
    )


@lru_cache(maxsize=None)
def builtin_assets() -> tuple:
    """The built-in car models (distinct footprints, deterministic meshes)."""
    return (
        _car_asset("compact", 4.0, 1.7, 1.4, 0.52, 0.46, (0.70, 0.16, 0.14)),
        _car_asset("sedan", 4.5, 1.8, 1.5, 0.50, 0.48, (0.18, 0.30, 0.66)),
        _car_asset("suv", 4.8, 1.9, 1.8, 0.58, 0.52, (0.24, 0.26, 0.28)),
    )


def asset_by_name(name: str) -> Asset:
    for a in builtin_assets():
        if a.name == name:
            return a
    raise SceneFormatError(
        f"unknown asset {name!r}; available: "
        + ", ".join(a.name for a in builtin_assets())
    )


@dataclass(frozen=True)
class Background:
    """World-frame background geometry. All of it is class 0, instance 0;
    the material table only varies the render color."""

    preset_id: int
    triangles: np.ndarray  # (N, 3, 3)
    material: np.ndarray  # (N,) index into colors
    colors: np.ndarray  # (M, 3)
    extent: float  # half-size of the ground square

    def __post_init__(self):
        self.triangles.setflags(write=False)
        self.material.setflags(write=False)
        self.colors.setflags(write=False)


def _in_corridor(cx, cy, half_lx, half_ly):
    return (
        cx + half_lx > _CORRIDOR_X[0]
        and cx - half_lx < _CORRIDOR_X[1]
        and abs(cy) - half_ly < _CORRIDOR_HALF_Y
    )


def _flat_background(preset_id: int, extent: float) -> Background:
    e = float(extent)
    ground = np.asarray(
        [
            [[-e, -e, 0.0], [e, -e, 0.0], [e, e, 0.0]],
            [[-e, -e, 0.0], [e, e, 0.0], [-e, e, 0.0]],
        ]
    )
    return Background(
        preset_id=preset_id,
        triangles=ground,
        material=np.zeros(2, dtype=np.int32),
        colors=np.asarray([[0.35, 0.37, 0.35]]),
        extent=e,
    )


def background_preset(preset_id: int) -> Background:
    """Deterministic background: ground plane plus seeded buildings, poles,
    and optional roadside walls, all kept out of the driving corridor."""
    if not 0 <= preset_id < N_BACKGROUND_PRESETS:
        raise SceneFormatError(
            f"unknown background preset {preset_id}; "
            f"valid range 0..{N_BACKGROUND_PRESETS - 1}"
        )
    rng = np.random.default_rng(_BACKGROUND_SEED_BASE + preset_id)
    e = GROUND_HALF_EXTENT
    base = _flat_background(preset_id, e)
    tris = [base.triangles]
    mats = [np.zeros(2, dtype=np.int32)]
    colors = [
        rng.uniform(0.30, 0.42, size=3),  # ground
        rng.uniform(0.45, 0.70, size=3),  # buildings
        rng.uniform(0.25, 0.40, size=3),  # poles
        rng.uniform(0.50, 0.65, size=3),  # walls
    ]

    def place(n, size_fn, mat, min_center_dist):
        for _ in range(n):
            for _attempt in range(200):
                sx, sy, sz = size_fn()
                cx = rng.uniform(-e + sx / 2, e - sx / 2)
                cy = rng.uniform(-e + sy / 2, e - sy / 2)
                if _in_corridor(cx, cy, sx / 2, sy / 2):
                    continue
                if np.hypot(cx, cy) < min_center_dist:
                    continue
                tris.append(box_triangles((cx, cy, sz / 2), (sx, sy, sz)))
                mats.append(np.full(12, mat, dtype=np.int32))
                break

    n_buildings = int(rng.integers(5, 11))
    place(
        n_buildings,
        lambda: (
            rng.uniform(4.0, 16.0),
            rng.uniform(4.0, 16.0),
            rng.uniform(3.5, 10.0),
        ),
        mat=1,
        min_center_dist=12.0,
    )
    n_poles = int(rng.integers(3, 9))
    place(
        n_poles,
        lambda: (0.25, 0.25, rng.uniform(3.0, 6.0)),
        mat=2,
        min_center_dist=10.0,
    )
    if rng.random() < 0.5:
        side = 1.0 if rng.random() < 0.5 else -1.0
        wall_y = side * rng.uniform(10.0, 14.0)
        wall_len = rng.uniform(18.0, 40.0)
        wall_cx = rng.uniform(4.0, 18.0)
        tris.append(
            box_triangles(
                (wall_cx, wall_y, rng.uniform(2.4, 3.4) / 2),
                (wall_len, 0.3, rng.uniform(2.4, 3.4)),
            )
        )
        mats.append(np.full(12, 3, dtype=np.int32))

    return Background(
        preset_id=preset_id,
        triangles=np.concatenate(tris),
        material=np.concatenate(mats),
        colors=np.asarray(colors),
        extent=e,
    )


def builtin_backgrounds() -> list:
    return [background_preset(i) for i in range(N_BACKGROUND_PRESETS)]


@dataclass(frozen=True)
class SceneObject:
    asset: Asset
    position: np.ndarray  # world frame (3,)
    yaw: float
    color: tuple
    instance_id: int

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        if self.instance_id <= 0:
            raise ValueError("instance_id must be positive (0 is background)")

    def world_triangles(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return self.asset.triangles @ r.T + self.position

    def world_bounds(self) -> tuple:
        w = self.world_triangles().reshape(-1, 3)
        return w.min(axis=0), w.max(axis=0)


class Scene:
    """An immutable labeled world: background plus placed objects, flattened
    into triangle arrays with a per-triangle object table index.

    Table entry layout: one entry per background material (all class 0,
    instance 0), then one entry per object in placement order.
    """

    def __init__(
        self,
        background: Background,
        objects: Sequence[SceneObject] = (),
        weather: str = "clear",
        time_of_day: float = 12.0,
    ):
        if weather not in WEATHERS:
            raise ValueError(f"weather must be one of {WEATHERS}, got {weather!r}")
        if not 0.0 <= time_of_day < 24.0:
            raise ValueError(f"time_of_day must be in [0, 24), got {time_of_day}")
        ids = [o.instance_id for o in objects]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate instance_id {dup}")
        self.background = background
        self.objects = tuple(objects)
        self.weather = weather
        self.time_of_day = float(time_of_day)

        n_mat = len(background.colors)
        cls = list(np.zeros(n_mat, dtype=np.int64))
        inst = list(np.zeros(n_mat, dtype=np.int64))
        col = [np.asarray(c, dtype=np.float64) for c in background.colors]
        tri_chunks = [background.triangles]
        obj_chunks = [background.material.astype(np.int32)]
        for k, o in enumerate(self.objects):
            tri = o.world_triangles()
            tri_chunks.append(tri)
            obj_chunks.append(np.full(len(tri), n_mat + k, dtype=np.int32))
            cls.append(o.asset.class_id)
            inst.append(o.instance_id)
            col.append(np.asarray(o.color, dtype=np.float64))
        self.tri_verts = np.ascontiguousarray(np.concatenate(tri_chunks))
        self.tri_object = np.concatenate(obj_chunks)
        self.object_class = np.asarray(cls, dtype=np.int32)
        self.object_instance = np.asarray(inst, dtype=np.int32)
        self.object_color = np.asarray(col, dtype=np.float64)
        for a in (
            self.tri_verts,
            self.tri_object,
            self.object_class,
            self.object_instance,
            self.object_color,
        ):
            a.setflags(write=False)
        self._accel = None

    @property
    def background_id(self) -> int:
        return self.background.preset_id

    @property
    def extent(self) -> float:
        return self.background.extent

    @property
    def n_triangles(self) -> int:
        return len(self.tri_verts)

    @property
    def accel(self) -> AccelIndex:
        if self._accel is None:
            labels = np.stack([self.object_class, self.object_instance], axis=1)
            self._accel = AccelIndex(self.tri_verts, self.tri_object, labels)
        return self._accel

    def next_instance_id(self) -> int:
        return max((o.instance_id for o in self.objects), default=0) + 1


def make_scene(
    background, objects=(), weather: str = "clear", time_of_day: float = 12.0
) -> Scene:
    """Build a Scene from a Background (or preset id) and placed objects."""
    if isinstance(background, int):
        background = background_preset(background)
    return Scene(background, objects, weather, time_of_day)


def flat_scene(extent: float = GROUND_HALF_EXTENT, **kw) -> Scene:
    """Ground-plane-only scene, handy for analytic checks."""
    return Scene(_flat_background(-1, extent), **kw)


def place_car(
    scene: Scene,
    model,
    x: float,
    y: float,
    yaw: float,
    color: Optional[tuple] = None,
) -> Scene:
    """Return a new Scene with a car added at offset (x right, y forward).

    The input scene is unchanged. Placement outside the background extent is
    an error; overlapping existing geometry only warns.
    """
    asset = asset_by_name(model) if isinstance(model, str) else model
    world = np.array([y, x, 0.0])
    e = scene.extent
    if abs(world[0]) > e or abs(world[1]) > e:
        raise ValueError(
            f"placement (x={x}, y={y}) is outside the background extent {e} m"
        )
    obj = SceneObject(
        asset=asset,
        position=world,
        yaw=float(yaw),
        color=tuple(color) if color is not None else asset.base_color,
        instance_id=scene.next_instance_id(),
    )
    _warn_on_overlap(scene, obj)
    return Scene(
        scene.background,
        scene.objects + (obj,),
        scene.weather,
        scene.time_of_day,
    )


def _warn_on_overlap(scene: Scene, obj: SceneObject) -> None:
    lo, hi = obj.world_bounds()
    tris = scene.tri_verts
    if not len(tris):
        return
    t_lo = tris.min(axis=1)
    t_hi = tris.max(axis=1)
    raised = t_hi[:, 2] > 0.05  # ignore the ground sheet itself
    overlap = (
        raised
        & np.all(t_lo <= hi[None, :], axis=1)
        & np.all(t_hi >= lo[None, :], axis=1)
    )
    if overlap.any():
        warnings.warn(
            f"car instance {obj.instance_id} at {tuple(obj.position[:2])} "
            "overlaps existing geometry",
            RuntimeWarning,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# Scene files


def _reject_unknown(d: dict, allowed, where: str):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise SceneFormatError(f"{where}: unknown key(s) {unknown}")


def _load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneFormatError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise SceneFormatError(f"{path}: top level must be an object")
    return data


def _color_from_file(value, where: str):
    if value is None:
        return None
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise SceneFormatError(f"{where}: color must be [r, g, b]")
    if not all(0.0 <= v <= 1.0 for v in value):
        raise SceneFormatError(f"{where}: color channels must be in [0, 1]")
    return tuple(float(v) for v in value)


def _background_from_file(value, where: str) -> Background:
    if isinstance(value, bool) or not isinstance(value, (int, dict)):
        raise SceneFormatError(
            f"{where}: background must be a preset id or an inline object"
        )
    if isinstance(value, int):
        return background_preset(value)
    _reject_unknown(value, {"ground_extent"}, where)
    extent = value.get("ground_extent", GROUND_HALF_EXTENT)
    if not isinstance(extent, (int, float)) or extent <= 0:
        raise SceneFormatError(f"{where}: ground_extent must be positive")
    return _flat_background(-1, float(extent))


def load_scene(path) -> Scene:
    """Load a scene file (JSON; lengths in meters, angles in degrees).

    Schema: ``background`` (preset id or ``{"ground_extent": m}``),
    ``objects`` ([{asset, x, y, yaw, color?, instance_id?}]), ``weather``,
    ``time_of_day``. Unknown keys are rejected.
    """
    data = _load_json(path)
    where = str(path)
    _reject_unknown(data, {"background", "objects", "weather", "time_of_day"}, where)
    if "background" not in data:
        raise SceneFormatError(f"{where}: missing required key 'background'")
    background = _background_from_file(data["background"], f"{where}: background")

    objects = []
    used_ids = set()
    entries = data.get("objects", [])
    if not isinstance(entries, list):
        raise SceneFormatError(f"{where}: objects must be a list")
    for k, entry in enumerate(entries):
        ctx = f"{where}: objects[{k}]"
        if not isinstance(entry, dict):
            raise SceneFormatError(f"{ctx}: must be an object")
        _reject_unknown(
            entry, {"asset", "x", "y", "yaw", "color", "instance_id"}, ctx
        )
        for key in ("asset", "x", "y"):
            if key not in entry:
                raise SceneFormatError(f"{ctx}: missing required key {key!r}")
        asset = asset_by_name(str(entry["asset"]))
        x, y = float(entry["x"]), float(entry["y"])
        yaw = np.deg2rad(float(entry.get("yaw", 0.0)))
        color = _color_from_file(entry.get("color"), ctx) or asset.base_color
        inst = entry.get("instance_id", max(used_ids, default=0) + 1)
        if not isinstance(inst, int) or inst <= 0:
            raise SceneFormatError(f"{ctx}: instance_id must be a positive int")
        if inst in used_ids:
            raise SceneFormatError(f"{ctx}: duplicate instance_id {inst}")
        used_ids.add(inst)
        e = background.extent
        if abs(y) > e or abs(x) > e:
            raise SceneFormatError(
                f"{ctx}: placement (x={x}, y={y}) outside background extent {e}"
            )
        objects.append(
            SceneObject(asset, np.array([y, x, 0.0]), yaw, color, inst)
        )

    weather = data.get("weather", "clear")
    time_of_day = data.get("time_of_day", 12.0)
    try:
        return Scene(background, objects, weather, float(time_of_day))
    except ValueError as exc:
        raise SceneFormatError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------------------
# Sweeps

_SWEEP_DIMENSIONS = (
    "background_ids",
    "car_models",
    "colors",
    "yaws",
    "counts",
    "weathers",
    "times",
    "xs",
    "ys",
)


@dataclass(frozen=True)
class SweepSpec:
    """Per-dimension sample lists for a modification-space sweep.

    Cartesian mode enumerates the full product in the fixed dimension order
    (backgrounds outermost, then models, colors, yaws, counts, weathers,
    times, xs; ys vary fastest). Explicit mode carries a literal list of
    combinations.
    """

    car_models: tuple = ("sedan",)
    xs: tuple = (0.0,)
    ys: tuple = (10.0,)
    yaws: tuple = (0.0,)  # radians
    counts: tuple = (1,)
    background_ids: tuple = (0,)
    colors: tuple = (None,)  # None = model base color
    weathers: tuple = ("clear",)
    times: tuple = (12.0,)
    mode: str = "cartesian"
    explicit: tuple = ()

    def __post_init__(self):
        if self.mode not in ("cartesian", "explicit"):
            raise ValueError(f"unknown sweep mode {self.mode!r}")
        if self.mode == "cartesian":
            for name in _SWEEP_DIMENSIONS:
                if len(getattr(self, _DIM_FIELD[name])) == 0:
                    raise ValueError(f"sweep dimension {name!r} is empty")
        elif not self.explicit:
            raise ValueError("explicit sweep mode requires a scene list")

    def combos(self) -> list:
        """Ordered list of sample dicts, each a full scene setting."""
        if self.mode == "explicit":
            return [dict(c) for c in self.explicit]
        out = []
        for bg, model, color, yaw, count, weather, time, x, y in itertools.product(
            self.background_ids,
            self.car_models,
            self.colors,
            self.yaws,
            self.counts,
            self.weathers,
            self.times,
            self.xs,
            self.ys,
        ):
            out.append(
                dict(
                    background=bg,
                    model=model,
                    color=color,
                    yaw=yaw,
                    count=count,
                    weather=weather,
                    time=time,
                    x=x,
                    y=y,
                )
            )
        return out

    def size(self) -> int:
        if self.mode == "explicit":
            return len(self.explicit)
        n = 1
        for name in _SWEEP_DIMENSIONS:
            n *= len(getattr(self, _DIM_FIELD[name]))
        return n


_DIM_FIELD = {
    "background_ids": "background_ids",
    "car_models": "car_models",
    "colors": "colors",
    "yaws": "yaws",
    "counts": "counts",
    "weathers": "weathers",
    "times": "times",
    "xs": "xs",
    "ys": "ys",
}


def standard_sweep_spec() -> SweepSpec:
    """The documented 10x15 single-car grid over 15 backgrounds: x offsets
    -5..4, y offsets 5..19, one sedan facing forward, 2250 scenes total."""
    return SweepSpec(
        car_models=("sedan",),
        xs=tuple(float(x) for x in range(-5, 5)),
        ys=tuple(float(y) for y in range(5, 20)),
        background_ids=tuple(range(15)),
    )


def load_sweep(path) -> SweepSpec:
    """Load a sweep file (JSON). Angles in degrees, lengths in meters.

    Keys: car_models, xs, ys, yaws, counts, background_ids, colors,
    weathers, times, mode, scenes (for explicit mode).
    """
    data = _load_json(path)
    where = str(path)
    allowed = {
        "car_models",
        "xs",
        "ys",
        "yaws",
        "counts",
        "background_ids",
        "colors",
        "weathers",
        "times",
        "mode",
        "scenes",
    }
    _reject_unknown(data, allowed, where)
    mode = data.get("mode", "cartesian")
    kw: dict = {"mode": mode}
    if mode == "explicit":
        scenes = data.get("scenes")
        if not isinstance(scenes, list) or not scenes:
            raise SceneFormatError(f"{where}: explicit mode needs 'scenes'")
        explicit = []
        for k, s in enumerate(scenes):
            ctx = f"{where}: scenes[{k}]"
            _reject_unknown(
                s,
                {"model", "x", "y", "yaw", "count", "background", "color",
                 "weather", "time"},
                ctx,
            )
            explicit.append(
                dict(
                    background=int(s.get("background", 0)),
                    model=str(s.get("model", "sedan")),
                    color=_color_from_file(s.get("color"), ctx),
                    yaw=np.deg2rad(float(s.get("yaw", 0.0))),
                    count=int(s.get("count", 1)),
                    weather=str(s.get("weather", "clear")),
                    time=float(s.get("time", 12.0)),
                    x=float(s["x"]),
                    y=float(s["y"]),
                )
            )
        kw["explicit"] = tuple(explicit)
        return SweepSpec(**kw)

    def listy(key, conv, default):
        if key not in data:
            return default
        val = data[key]
        if not isinstance(val, list) or not val:
            raise SceneFormatError(f"{where}: {key} must be a non-empty list")
        return tuple(conv(v) for v in val)

    kw["car_models"] = listy("car_models", str, ("sedan",))
    kw["xs"] = listy("xs", float, (0.0,))
    kw["ys"] = listy("ys", float, (10.0,))
    kw["yaws"] = listy("yaws", lambda v: np.deg2rad(float(v)), (0.0,))
    kw["counts"] = listy("counts", int, (1,))
    kw["background_ids"] = listy("background_ids", int, (0,))
    if "colors" in data:
        val = data["colors"]
        if not isinstance(val, list) or not val:
            raise SceneFormatError(f"{where}: colors must be a non-empty list")
        kw["colors"] = tuple(
            _color_from_file(v, f"{where}: colors") for v in val
        )
    kw["weathers"] = listy("weathers", str, ("clear",))
    kw["times"] = listy("times", float, (12.0,))
    try:
        return SweepSpec(**kw)
    except ValueError as exc:
        raise SceneFormatError(f"{where}: {exc}") from exc


def scene_from_combo(combo: dict, base_scene: Optional[Scene] = None) -> Scene:
    """Materialize one sweep sample. Extra cars from count > 1 queue up
    behind the first at 8 m spacing."""
    background = background_preset(combo["background"])
    base_objects = base_scene.objects if base_scene is not None else ()
    sc = Scene(background, base_objects, combo["weather"], combo["time"])
    for k in range(combo["count"]):
        sc = place_car(
            sc,
            combo["model"],
            combo["x"],
            combo["y"] + 8.0 * k,
            combo["yaw"],
            combo["color"],
        )
    return sc


def instantiate_sweep(
    spec: SweepSpec, base_scene: Optional[Scene] = None
) -> list:
    """All sweep scenes in deterministic order, each tagged with its (x, y)
    grid cell."""
    return [
        (scene_from_combo(c, base_scene), (c["x"], c["y"]))
        for c in spec.combos()
    ]


# ---------------------------------------------------------------------------
# Drive paths


@dataclass(frozen=True)
class EgoPath:
    """A polyline the sensor travels along at constant speed."""

    waypoints: np.ndarray  # (M, 3)
    speed: float  # m/s

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if len(wp) < 2:
            raise ValueError("path needs at least two waypoints")
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise ValueError("consecutive waypoints must be distinct")


def ego_scan_poses(path: EgoPath, frequency: float) -> list:
    """Sensor poses spaced speed/frequency meters along the path, heading
    aligned with the local segment; the start pose is always included."""
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    wp = path.waypoints
    seg_vec = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg_vec, axis=1)
    total = float(seg_len.sum())
    if total == 0.0:
        raise ValueError("zero-length path")
    spacing = path.speed / frequency
    count = int(np.floor(total * frequency / path.speed)) + 1
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    poses = []
    for i in range(count):
        d = min(i * spacing, total)
        j = int(np.searchsorted(cum, d, side="right") - 1)
        j = min(j, len(seg_len) - 1)
        frac = (d - cum[j]) / seg_len[j]
        pos = wp[j] + frac * seg_vec[j]
        yaw = float(np.arctan2(seg_vec[j, 1], seg_vec[j, 0]))
        poses.append(Pose.from_yaw(yaw, pos))
    return poses
