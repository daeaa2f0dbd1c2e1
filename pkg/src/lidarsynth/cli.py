"""Batch command-line tool for scanning, sweeping, calibration checking,
evaluation, blind-spot selection, and retraining-set export.

Usage sketches:

    lidarsynth scan --scene scene.json --out out/scan
    lidarsynth sweep --sweep sweep.json --out out/grid --workers 4 --formats kitti
    lidarsynth calib-check --samples 10000
    lidarsynth eval --manifest out/grid --baseline --out out/metrics.csv
    lidarsynth miou --metrics out/metrics.csv --backgrounds 0-6 --out out/miou
    lidarsynth select --miou out/miou.json --threshold 0.65 --out out/cells.json
    lidarsynth retrain-export --manifest out/grid --cells out/cells.json \
        --retrain-backgrounds 7-14 --validation-backgrounds 0-6 --out out/retrain
    lidarsynth improvement --before a.json --after b.json --out delta.csv

Flags win over --config file values; every command is deterministic for a
fixed (inputs, seed, config) and independent of --workers. Exit codes:
0 success, 1 usage or configuration error, 2 data error, 3 tolerance
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import camera as cam_mod
from . import evaluation as ev
from .camera import CameraConfig, contains_lidar_fov
from .geom import Pose
from .lidar import LidarConfig, Provenance, export_cloud, scan
from .manifest import Manifest, ManifestEntry, config_hash
from .scene import (
    SceneFormatError,
    SweepSpec,
    load_scene,
    load_sweep,
    scene_from_combo,
)

__all__ = ["main", "RunConfig"]

OUT_ROOT_ENV = "LIDARSYNTH_OUT_ROOT"
FORMAT_CHOICES = ("kitti", "ply", "csv", "image")
DEFAULT_FORMATS = ("kitti", "image")
DEFAULT_SENSOR_HEIGHT = 1.73
DEFAULT_CAMERA_VFOV_DEG = 28.0

CALIB_PIXEL_TOL = 1e-9
CALIB_F_TOL = 1e-12
OVERLAY_MIN_SCORE = 0.98


class UsageError(Exception):
    """Bad flags or flag combinations (exit 1)."""


class ConfigError(Exception):
    """Invalid configuration values (exit 1)."""


class DataError(Exception):
    """Missing or malformed input data (exit 2)."""


class ToleranceError(Exception):
    """A checked tolerance was violated (exit 3)."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved generation settings for one command invocation."""

    lidar: LidarConfig
    camera_width: int = 1024
    camera_height: int = 512
    camera_vfov_deg: float = DEFAULT_CAMERA_VFOV_DEG
    camera_near: float = 0.15
    camera_axes: Optional[tuple] = None  # row-major 3x3 override
    sensor_height: float = DEFAULT_SENSOR_HEIGHT
    seed: int = 0
    workers: int = 1
    formats: tuple = DEFAULT_FORMATS

    def pose(self) -> Pose:
        return Pose(np.eye(3), np.array([0.0, 0.0, self.sensor_height]))

    def camera(self) -> CameraConfig:
        axes = (
            np.asarray(self.camera_axes, dtype=np.float64)
            if self.camera_axes is not None
            else np.eye(3)
        )
        return CameraConfig(
            position=np.array([0.0, 0.0, self.sensor_height]),
            axes=axes,
            half_vertical_fov=np.deg2rad(self.camera_vfov_deg),
            near_distance=self.camera_near,
            width=self.camera_width,
            height=self.camera_height,
        )

    def settings_dict(self, combo: Optional[dict]) -> dict:
        """Everything that influences generated bytes, for hashing."""
        d = {
            "lidar": asdict(self.lidar),
            "sensor_height": self.sensor_height,
            "seed": self.seed,
            "formats": sorted(self.formats),
            "combo": combo,
        }
        if "image" in self.formats:
            d["camera"] = {
                "width": self.camera_width,
                "height": self.camera_height,
                "vfov_deg": self.camera_vfov_deg,
                "near": self.camera_near,
                "axes": self.camera_axes,
            }
        return d


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help=f"output path (default under ${OUT_ROOT_ENV} or ./out)")
    p.add_argument("--seed", type=int, default=None, help="64-bit run seed")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument(
        "--formats",
        default=None,
        help="comma list of outputs: kitti,ply,csv,image",
    )
    for name, help_text in (
        ("--vertical-fov", "scanner vertical FOV, degrees"),
        ("--vertical-res", "scanner vertical resolution, degrees"),
        ("--horizontal-fov", "scanner horizontal FOV, degrees"),
        ("--horizontal-res", "scanner horizontal resolution, degrees"),
        ("--pitch", "scanner pitch (positive = down), degrees"),
        ("--max-range", "scanner range, meters"),
        ("--frequency", "scan frequency, Hz"),
        ("--noise-sigma", "range jitter sigma, meters (0 disables)"),
        ("--sensor-height", "sensor height above ground, meters"),
        ("--camera-vfov", "camera half vertical FOV, degrees"),
        ("--camera-near", "camera near-plane distance, meters"),
    ):
        p.add_argument(name, type=float, default=None, help=help_text)
    p.add_argument("--camera-width", type=int, default=None, help="image width, px")
    p.add_argument("--camera-height", type=int, default=None, help="image height, px")


def build_parser() -> _Parser:
    parser = _Parser(prog="lidarsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan one scene file")
    p.add_argument("--scene", required=True, help="scene JSON file")
    _common_flags(p)

    p = sub.add_parser("sweep", help="run a modification-space sweep")
    p.add_argument("--sweep", required=True, help="sweep JSON file")
    p.add_argument(
        "--no-resume",
        action="store_true",
        help="regenerate everything even when outputs already exist",
    )
    _common_flags(p)

    p = sub.add_parser("calib-check", help="verify scanner-to-pixel calibration")
    p.add_argument("--samples", type=int, default=10_000)
    _common_flags(p)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", help="directory of <scene_id>.pred files")
    p.add_argument("--baseline", action="store_true",
                   help="use the built-in segmenter")
    p.add_argument("--params", help="JSON file of segmenter parameters")
    _common_flags(p)

    p = sub.add_parser("miou", help="mean-IoU map from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--backgrounds", required=True,
                   help="background ids to average, e.g. 0-6 or 0,2,4")
    p.add_argument("--class-id", type=int, default=1)
    _common_flags(p)

    p = sub.add_parser("select", help="select blind-spot cells from a map")
    p.add_argument("--miou", required=True, help="mIoU map JSON")
    p.add_argument("--threshold", type=float, default=0.65)
    _common_flags(p)

    p = sub.add_parser("retrain-export", help="export scans at selected cells")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cells", required=True, help="cells JSON from select")
    p.add_argument("--retrain-backgrounds", required=True)
    p.add_argument("--validation-backgrounds", required=True)
    _common_flags(p)

    p = sub.add_parser("improvement", help="compare two mIoU maps")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    _common_flags(p)

    return parser


def _parse_id_list(text: str) -> tuple:
    """Parse '0-6', '0,2,4', or a mix into a tuple of ints."""
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" in chunk[1:]:
            split_at = chunk.index("-", 1)
            lo, hi = int(chunk[:split_at]), int(chunk[split_at + 1:])
            if hi < lo:
                raise UsageError(f"empty id range {chunk!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(chunk))
    if not out:
        raise UsageError(f"no ids in {text!r}")
    return tuple(out)


_CONFIG_FILE_KEYS = {
    "lidar", "camera", "sensor_height", "seed", "workers", "formats",
}
_LIDAR_KEYS = {
    "vertical_fov", "vertical_res", "horizontal_fov", "horizontal_res",
    "pitch", "max_range", "frequency", "noise_sigma",
}
_CAMERA_KEYS = {"width", "height", "vfov_deg", "near", "axes"}


def _load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    unknown = set(data) - _CONFIG_FILE_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {sorted(unknown)}")
    for section, allowed in (("lidar", _LIDAR_KEYS), ("camera", _CAMERA_KEYS)):
        extra = set(data.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"{path}: unknown {section} key(s) {sorted(extra)}")
    return data


def resolve_run_config(args) -> RunConfig:
    """Layer defaults, then the --config file, then explicit flags."""
    file_cfg = _load_config_file(args.config) if args.config else {}
    lid = dict(file_cfg.get("lidar", {}))
    for flag, key in (
        ("vertical_fov", "vertical_fov"),
        ("vertical_res", "vertical_res"),
        ("horizontal_fov", "horizontal_fov"),
        ("horizontal_res", "horizontal_res"),
        ("pitch", "pitch"),
        ("max_range", "max_range"),
        ("frequency", "frequency"),
        ("noise_sigma", "noise_sigma"),
    ):
        val = getattr(args, flag)
        if val is not None:
            lid[key] = val
    cam = dict(file_cfg.get("camera", {}))
    if args.camera_width is not None:
        cam["width"] = args.camera_width
    if args.camera_height is not None:
        cam["height"] = args.camera_height
    if args.camera_vfov is not None:
        cam["vfov_deg"] = args.camera_vfov
    if args.camera_near is not None:
        cam["near"] = args.camera_near

    formats = file_cfg.get("formats", list(DEFAULT_FORMATS))
    if args.formats is not None:
        formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    bad = set(formats) - set(FORMAT_CHOICES)
    if bad:
        raise ConfigError(
            f"unknown format(s) {sorted(bad)}; choose from {FORMAT_CHOICES}"
        )

    axes = cam.get("axes")
    try:
        run = RunConfig(
            lidar=LidarConfig(**lid),
            camera_width=int(cam.get("width", 1024)),
            camera_height=int(cam.get("height", 512)),
            camera_vfov_deg=float(cam.get("vfov_deg", DEFAULT_CAMERA_VFOV_DEG)),
            camera_near=float(cam.get("near", 0.15)),
            camera_axes=tuple(tuple(r) for r in axes) if axes else None,
            sensor_height=float(
                args.sensor_height
                if args.sensor_height is not None
                else file_cfg.get("sensor_height", DEFAULT_SENSOR_HEIGHT)
            ),
            seed=int(args.seed if args.seed is not None else file_cfg.get("seed", 0)),
            workers=int(
                args.workers if args.workers is not None else file_cfg.get("workers", 1)
            ),
            formats=tuple(formats),
        )
        if "image" in run.formats or args.command == "calib-check":
            camera = run.camera()  # validates axes and FOV parameters
            if not contains_lidar_fov(camera, run.lidar):
                raise ConfigError(
                    "camera FOV does not contain the scanner FOV; widen "
                    "--camera-vfov or shrink the scan pattern"
                )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if run.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return run


def _default_out(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(OUT_ROOT_ENV, "out")
    return Path(root) / name


# ---------------------------------------------------------------------------
# Scene generation tasks (shared by scan and sweep)


def _noise_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


def _run_scene_task(payload: dict) -> dict:
    """Generate one scene's outputs. Runs in worker processes; must stay
    top-level and deterministic."""
    run: RunConfig = payload["run"]
    scene = (
        load_scene(payload["scene_file"])
        if payload.get("scene_file")
        else scene_from_combo(payload["combo"])
    )
    scene_id = payload["scene_id"]
    cell = payload["cell"]
    out_dir = Path(payload["out_dir"])
    prov = Provenance(scene_id, cell)
    pose = run.pose()
    cloud = scan(
        scene, run.lidar, pose, provenance=prov,
        noise_seed=_noise_seed(run.seed, payload["index"]),
    )
    outputs = {}
    if "kitti" in run.formats:
        bin_p = out_dir / f"{scene_id}.bin"
        label_p = out_dir / f"{scene_id}.label"
        export_cloud(cloud, "kitti_bin", bin_p, label_p)
        outputs["cloud"] = bin_p.name
        outputs["labels"] = label_p.name
    if "ply" in run.formats:
        outputs["ply"] = export_cloud(cloud, "ply", out_dir / f"{scene_id}.ply")[0].name
    if "csv" in run.formats:
        outputs["csv"] = export_cloud(cloud, "csv", out_dir / f"{scene_id}.csv")[0].name
    if "image" in run.formats:
        img = cam_mod.render(scene, run.camera(), provenance=prov)
        outputs["image"] = cam_mod.write_ppm(out_dir / f"{scene_id}.ppm", img.color).name
        outputs["semantic"] = cam_mod.write_pgm16(
            out_dir / f"{scene_id}_class.pgm", img.semantic
        ).name
        outputs["instance"] = cam_mod.write_pgm16(
            out_dir / f"{scene_id}_inst.pgm", img.instance
        ).name
        outputs["palette"] = "palette.txt"
    return {
        "scene_id": scene_id,
        "cell": cell,
        "background_id": scene.background_id,
        "outputs": outputs,
        "n_points": len(cloud),
    }


def _entry_outputs_exist(out_dir: Path, entry: ManifestEntry) -> bool:
    return all((out_dir / rel).is_file() for rel in entry.outputs.values())


def _generate(run: RunConfig, payloads: list, out_dir: Path, resume: bool) -> Manifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    if "image" in run.formats:
        cam_mod.write_palette(out_dir / "palette.txt")

    old_by_id = {}
    if resume:
        manifest_path = out_dir / "manifest.jsonl"
        if manifest_path.is_file():
            old = Manifest.load(manifest_path)
            old_by_id = old.by_scene_id()

    todo = []
    entries: dict = {}
    for payload in payloads:
        sid = payload["scene_id"]
        prev = old_by_id.get(sid)
        if (
            prev is not None
            and prev.config_hash == payload["hash"]
            and _entry_outputs_exist(out_dir, prev)
        ):
            entries[sid] = prev
        else:
            todo.append(payload)

    if todo:
        if run.workers > 1:
            with ProcessPoolExecutor(max_workers=run.workers) as pool:
                results = list(pool.map(_run_scene_task, todo, chunksize=4))
        else:
            results = [_run_scene_task(p) for p in todo]
        for payload, res in zip(todo, results):
            entries[res["scene_id"]] = ManifestEntry(
                scene_id=res["scene_id"],
                cell=tuple(res["cell"]),
                background_id=res["background_id"],
                outputs=res["outputs"],
                seed=run.seed,
                config_hash=payload["hash"],
            )

    ordered = [entries[p["scene_id"]] for p in payloads]
    manifest = Manifest(ordered, out_dir)
    manifest.write()
    return manifest


# ---------------------------------------------------------------------------
# Commands


def cmd_scan(args) -> int:
    run = resolve_run_config(args)
    scene_path = Path(args.scene)
    if not scene_path.is_file():
        raise DataError(f"scene file not found: {scene_path}")
    out_dir = _default_out(args, "scan")
    scene_id = scene_path.stem
    payload = {
        "run": run,
        "scene_file": str(scene_path),
        "combo": None,
        "scene_id": scene_id,
        "cell": (0.0, 0.0),
        "index": 0,
        "out_dir": str(out_dir),
        "hash": config_hash(
            {
                **run.settings_dict(None),
                "scene_text": scene_path.read_text(),
            }
        ),
    }
    load_scene(scene_path)  # surface schema errors before writing anything
    manifest = _generate(run, [payload], out_dir, resume=False)
    n = sum(1 for _ in manifest.entries)
    print(f"scan: wrote {n} scene to {out_dir}")
    for kind, rel in manifest.entries[0].outputs.items():
        print(f"  {kind}: {rel}")
    return 0


def cmd_sweep(args) -> int:
    run = resolve_run_config(args)
    sweep_path = Path(args.sweep)
    if not sweep_path.is_file():
        raise DataError(f"sweep file not found: {sweep_path}")
    spec = load_sweep(sweep_path)
    out_dir = _default_out(args, "sweep")
    payloads = []
    for index, combo in enumerate(spec.combos()):
        payloads.append(
            {
                "run": run,
                "scene_file": None,
                "combo": combo,
                "scene_id": f"s{index:06d}",
                "cell": (combo["x"], combo["y"]),
                "index": index,
                "out_dir": str(out_dir),
                "hash": config_hash({**run.settings_dict(combo)}),
            }
        )
    manifest = _generate(run, payloads, out_dir, resume=not args.no_resume)
    cells = {e.cell for e in manifest.entries}
    bgs = sorted({e.background_id for e in manifest.entries})
    print(
        f"sweep: {len(manifest.entries)} scenes across {len(cells)} cells "
        f"and {len(bgs)} backgrounds -> {out_dir}"
    )
    return 0


def cmd_calib_check(args) -> int:
    run = resolve_run_config(args)
    cam = run.camera()
    rng = np.random.default_rng(run.seed)
    lid = run.lidar
    t_lo = np.deg2rad(lid.pitch - lid.half_vertical_fov)
    t_hi = np.deg2rad(lid.pitch + lid.half_vertical_fov)
    p_hi = np.deg2rad(lid.horizontal_fov / 2.0)
    t = rng.uniform(t_lo, t_hi, args.samples)
    p = rng.uniform(-p_hi, p_hi, args.samples)

    i_c, j_c = cam_mod.calibrate_pixel(t, p, cam)
    near, _ = cam_mod.laser_endpoints(
        t, p, cam, cam_mod.default_far_coefficient(cam, lid.max_range)
    )
    i_p, j_p, valid = cam_mod.project_points(near, cam)
    max_err = float(
        max(np.abs(i_c - i_p).max(), np.abs(j_c - j_p).max())
    ) if args.samples else 0.0

    cam_f2 = replace(run, camera_near=run.camera_near * 2.0).camera()
    i2, j2 = cam_mod.calibrate_pixel(t, p, cam_f2)
    f_err = float(max(np.abs(i_c - i2).max(), np.abs(j_c - j2).max())) if args.samples else 0.0

    boresight = cam_mod.calibrate_pixel(0.0, 0.0, cam)
    boresight_exact = boresight == (cam.width / 2.0, cam.height / 2.0)

    from .scene import flat_scene, place_car

    scene = place_car(flat_scene(), "sedan", 0.0, 10.0, 0.0)
    pose = run.pose()
    cloud = scan(scene, lid, pose)
    img = cam_mod.render(scene, cam)
    _, overlay_score = cam_mod.overlay_points(img, cloud, {1}, cam)

    report = {
        "samples": args.samples,
        "max_pixel_error": max_err,
        "f_invariance_error": f_err,
        "boresight_exact": bool(boresight_exact),
        "overlay_score": overlay_score,
        "tolerances": {
            "max_pixel_error": CALIB_PIXEL_TOL,
            "f_invariance_error": CALIB_F_TOL,
            "overlay_score_min": OVERLAY_MIN_SCORE,
        },
    }
    ok = (
        valid.all()
        and max_err < CALIB_PIXEL_TOL
        and f_err < CALIB_F_TOL
        and boresight_exact
        and overlay_score >= OVERLAY_MIN_SCORE
    )
    report["pass"] = bool(ok)
    text = json.dumps(report, indent=1, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
    if not ok:
        raise ToleranceError(
            f"calibration check failed: max_pixel_error={max_err:.3e}, "
            f"f_invariance_error={f_err:.3e}, overlay={overlay_score:.4f}"
        )
    return 0


def _load_manifest(path) -> Manifest:
    try:
        return Manifest.load(path)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc


def _load_baseline_params(path) -> ev.BaselineParams:
    if path is None:
        return ev.BaselineParams()
    try:
        d = json.loads(Path(path).read_text())
        d["size_min"] = tuple(d.get("size_min", ev.BaselineParams().size_min))
        d["size_max"] = tuple(d.get("size_max", ev.BaselineParams().size_max))
        return ev.BaselineParams(**d)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"bad segmenter params {path}: {exc}") from exc


def cmd_eval(args) -> int:
    if args.predictions and args.baseline:
        raise UsageError("--predictions and --baseline are mutually exclusive")
    if not args.predictions and not args.baseline:
        raise UsageError("choose a prediction source: --predictions or --baseline")
    manifest = _load_manifest(args.manifest)
    predictions = None
    if args.predictions:
        predictions = ev.read_predictions(args.predictions, manifest)
    rows = ev.evaluate_manifest(
        manifest, predictions=predictions, params=_load_baseline_params(args.params)
    )
    out = _default_out(args, "metrics.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    ev.metrics_rows_to_csv(rows, out)
    car = [r["iou"] for r in rows if r["class_id"] == 1]
    print(
        f"eval: {len(manifest.entries)} clouds, mean car IoU "
        f"{np.mean(car):.4f} -> {out}"
    )
    return 0


def cmd_miou(args) -> int:
    rows = ev.metrics_rows_from_csv(args.metrics)
    backgrounds = _parse_id_list(args.backgrounds)
    records = ev.miou_records_from_rows(rows, args.class_id, backgrounds)
    m = ev.miou_map(records)
    out = _default_out(args, "miou")
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path = m.to_json(out.with_suffix(".json"))
    csv_path = m.to_csv(out.with_suffix(".csv"))
    print(
        f"miou: {len(m.cells())} cells over backgrounds {list(backgrounds)}, "
        f"grid mean {m.mean():.4f} -> {json_path}, {csv_path}"
    )
    return 0


def cmd_select(args) -> int:
    m = ev.MIoUMap.from_json(args.miou)
    cells = ev.select_blind_spots(m, args.threshold)
    out = _default_out(args, "cells.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        json.dumps(
            {"threshold": args.threshold, "cells": [list(c) for c in cells]},
            sort_keys=True,
        )
        + "\n"
    )
    print(f"select: {len(cells)} cells below {args.threshold} -> {out}")
    return 0


def cmd_retrain_export(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        cells_doc = json.loads(Path(args.cells).read_text())
        cells = [tuple(c) for c in cells_doc["cells"]]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"bad cells file {args.cells}: {exc}") from exc
    out = _default_out(args, "retrain")
    rs = ev.build_retrain_set(
        cells,
        manifest,
        _parse_id_list(args.retrain_backgrounds),
        _parse_id_list(args.validation_backgrounds),
        out_dir=out,
    )
    print(f"retrain-export: {len(rs)} scans ({len(cells)} cells) -> {out}")
    return 0


def cmd_improvement(args) -> int:
    before = ev.MIoUMap.from_json(args.before)
    after = ev.MIoUMap.from_json(args.after)
    rep = ev.improvement_report(before, after)
    out = _default_out(args, "improvement.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out)
    print(
        f"improvement: {rep.improved} up, {rep.degraded} down, "
        f"{rep.unchanged} unchanged -> {out}"
    )
    return 0


_COMMANDS = {
    "scan": cmd_scan,
    "sweep": cmd_sweep,
    "calib-check": cmd_calib_check,
    "eval": cmd_eval,
    "miou": cmd_miou,
    "select": cmd_select,
    "retrain-export": cmd_retrain_export,
    "improvement": cmd_improvement,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, SceneFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ToleranceError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
