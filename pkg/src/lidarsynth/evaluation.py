"""Segmentation evaluation and the blind-spot loop: per-class metrics, mean
IoU maps over sweep grids, threshold selection, retraining-set export, and a
size-gated clustering segmenter that stands in for a trained model.
"""

from __future__ import annotations

import csv
import io
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .lidar import PointCloud, load_cloud_files, read_kitti_bin
from .manifest import Manifest, ManifestEntry
from .scene import CLASS_BACKGROUND, CLASS_CAR, CLASS_NAMES

__all__ = [
    "ClassMetrics",
    "MIoUMap",
    "RetrainSet",
    "BaselineParams",
    "ImprovementReport",
    "class_metrics",
    "miou_map",
    "select_blind_spots",
    "build_retrain_set",
    "improvement_report",
    "baseline_segment",
    "fit_baseline",
    "default_param_grid",
    "read_predictions",
    "evaluate_manifest",
    "metrics_rows_to_csv",
]


@dataclass(frozen=True)
class ClassMetrics:
    """Point-count confusion metrics for one class on one cloud."""

    class_id: int
    tp: int
    fp: int
    fn: int
    iou: float
    precision: float
    recall: float


def class_metrics(pred, truth, class_id: int) -> ClassMetrics:
    """IoU/precision/recall over point indices.

    Zero-denominator policy: a metric whose denominator is empty is 1.0
    when both the predicted and ground-truth sets are empty, else 0.0.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(
            f"prediction length {pred.shape} does not match labels {truth.shape}"
        )
    p = pred == class_id
    g = truth == class_id
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))

    def ratio(num, den):
        if den:
            return num / den
        return 1.0 if (tp + fp + fn) == 0 else 0.0

    return ClassMetrics(
        class_id=class_id,
        tp=tp,
        fp=fp,
        fn=fn,
        iou=ratio(tp, tp + fp + fn),
        precision=ratio(tp, tp + fp),
        recall=ratio(tp, tp + fn),
    )


# ---------------------------------------------------------------------------
# mIoU maps


@dataclass(frozen=True)
class MIoUMap:
    """Per-cell mean IoU over a fixed background set.

    ``values[yi, xi]`` corresponds to cell (xs[xi], ys[yi]).
    """

    xs: tuple
    ys: tuple
    values: np.ndarray  # (len(ys), len(xs))
    backgrounds: tuple

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n_backgrounds(self) -> int:
        return len(self.backgrounds)

    def cells(self) -> list:
        return [(x, y) for y in self.ys for x in self.xs]

    def value(self, x, y) -> float:
        return float(self.values[self.ys.index(y), self.xs.index(x)])

    def mean(self) -> float:
        return float(self.values.mean())

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(
                {
                    "xs": list(self.xs),
                    "ys": list(self.ys),
                    "values": self.values.tolist(),
                    "backgrounds": list(self.backgrounds),
                },
                sort_keys=True,
            )
            + "\n"
        )
        return path

    @classmethod
    def from_json(cls, path) -> "MIoUMap":
        d = json.loads(Path(path).read_text())
        return cls(
            xs=tuple(d["xs"]),
            ys=tuple(d["ys"]),
            values=np.asarray(d["values"], dtype=np.float64),
            backgrounds=tuple(d["backgrounds"]),
        )

    def to_csv(self, path) -> Path:
        """Row-major grid CSV: one row per y (ascending), columns by x."""
        path = Path(path)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y\\x"] + [f"{x:g}" for x in self.xs])
        for yi, y in enumerate(self.ys):
            w.writerow([f"{y:g}"] + [f"{v:.6f}" for v in self.values[yi]])
        path.write_text(buf.getvalue())
        return path


def miou_map(records: Iterable[tuple]) -> MIoUMap:
    """Average per-cell IoU across backgrounds.

    ``records`` holds (x, y, background_id, iou) tuples. Every cell must be
    covered by the same background set exactly once; missing pairs are an
    error, never an implicit zero.
    """
    per_cell: dict = {}
    for x, y, bg, iou in records:
        cell = (x, y)
        bucket = per_cell.setdefault(cell, {})
        if bg in bucket:
            raise ValueError(f"duplicate record for cell {cell}, background {bg}")
        if not 0.0 <= iou <= 1.0:
            raise ValueError(f"IoU {iou} out of [0, 1] at cell {cell}")
        bucket[bg] = iou
    if not per_cell:
        raise ValueError("no records given")

    bg_set = None
    for cell, bucket in per_cell.items():
        got = tuple(sorted(bucket))
        if bg_set is None:
            bg_set = got
        elif got != bg_set:
            raise ValueError(
                f"ragged coverage: cell {cell} has backgrounds {got}, "
                f"expected {bg_set}"
            )

    xs = tuple(sorted({c[0] for c in per_cell}))
    ys = tuple(sorted({c[1] for c in per_cell}))
    if len(per_cell) != len(xs) * len(ys):
        raise ValueError("cells do not form a full x-y grid")
    values = np.empty((len(ys), len(xs)))
    for yi, y in enumerate(ys):
        for xi, x in enumerate(xs):
            bucket = per_cell[(x, y)]
            values[yi, xi] = sum(bucket.values()) / len(bucket)
    return MIoUMap(xs=xs, ys=ys, values=values, backgrounds=bg_set)


def select_blind_spots(m: MIoUMap, threshold: float) -> list:
    """Cells with mean IoU strictly below the threshold, sorted by (y, x)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    out = []
    for yi, y in enumerate(m.ys):
        for xi, x in enumerate(m.xs):
            if m.values[yi, xi] < threshold:
                out.append((x, y))
    return out


# ---------------------------------------------------------------------------
# Retraining sets


@dataclass(frozen=True)
class RetrainRecord:
    scene_id: str
    cell: tuple
    background_id: int
    cloud_path: Path
    label_path: Path


@dataclass
class RetrainSet:
    """Scans at selected cells drawn from held-out retraining backgrounds."""

    records: list
    cells: list
    validation_backgrounds: tuple
    retrain_backgrounds: tuple

    def __len__(self) -> int:
        return len(self.records)

    def load_samples(self) -> list:
        """(xyz, class labels) pairs for every record."""
        return [
            load_cloud_files(r.cloud_path, r.label_path)[:2] for r in self.records
        ]


def build_retrain_set(
    cells: Sequence[tuple],
    manifest: Manifest,
    retrain_backgrounds: Sequence[int],
    validation_backgrounds: Sequence[int],
    out_dir=None,
) -> RetrainSet:
    """Collect the scans of the selected cells from every retraining
    background, optionally copying them (with their own manifest) to a
    directory.

    The validation and retraining background sets must be disjoint, and
    every (cell, background) pair must exist in the manifest.
    """
    r_set = tuple(sorted(set(int(b) for b in retrain_backgrounds)))
    v_set = tuple(sorted(set(int(b) for b in validation_backgrounds)))
    overlap = set(r_set) & set(v_set)
    if overlap:
        raise ValueError(
            f"validation and retraining backgrounds overlap: {sorted(overlap)}"
        )
    wanted_cells = list(cells)
    cell_set = set(wanted_cells)
    records = []
    covered = set()
    for e in manifest.entries:
        if e.background_id in r_set and e.cell in cell_set:
            cloud = manifest.path_of(e, "cloud")
            labels = manifest.path_of(e, "labels")
            for p in (cloud, labels):
                if not p.is_file():
                    raise FileNotFoundError(f"missing data file: {p}")
            records.append(
                RetrainRecord(e.scene_id, e.cell, e.background_id, cloud, labels)
            )
            covered.add((e.cell, e.background_id))
    missing = [
        (c, b) for c in wanted_cells for b in r_set if (c, b) not in covered
    ]
    if missing:
        raise ValueError(
            f"{len(missing)} (cell, background) pairs missing from the "
            f"manifest, first: {missing[0]}"
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rel_records = []
        for r in records:
            cloud_to = out_dir / r.cloud_path.name
            label_to = out_dir / r.label_path.name
            shutil.copyfile(r.cloud_path, cloud_to)
            shutil.copyfile(r.label_path, label_to)
            rel_records.append(
                RetrainRecord(r.scene_id, r.cell, r.background_id, cloud_to, label_to)
            )
        records = rel_records
        (out_dir / "retrain_manifest.json").write_text(
            json.dumps(
                {
                    "cells": [list(c) for c in wanted_cells],
                    "validation_backgrounds": list(v_set),
                    "retrain_backgrounds": list(r_set),
                    "scans": [
                        {
                            "scene_id": r.scene_id,
                            "cell": list(r.cell),
                            "background_id": r.background_id,
                            "cloud": r.cloud_path.name,
                            "labels": r.label_path.name,
                        }
                        for r in records
                    ],
                },
                sort_keys=True,
                indent=1,
            )
            + "\n"
        )
    return RetrainSet(records, wanted_cells, v_set, r_set)


# ---------------------------------------------------------------------------
# Improvement reports


@dataclass
class ImprovementReport:
    """Per-cell deltas between two maps, ascending by improvement."""

    rows: list  # (cell, before, after, delta), delta ascending
    improved: int
    degraded: int
    unchanged: int

    def to_csv(self, path) -> Path:
        path = Path(path)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "before", "after", "delta"])
        for (x, y), before, after, delta in self.rows:
            w.writerow(
                [f"{x:g}", f"{y:g}", f"{before:.6f}", f"{after:.6f}", f"{delta:.6f}"]
            )
        path.write_text(buf.getvalue())
        return path


def improvement_report(before: MIoUMap, after: MIoUMap) -> ImprovementReport:
    """Cell-by-cell change between two maps on the same grid."""
    if before.xs != after.xs or before.ys != after.ys:
        raise ValueError("maps cover different grids")
    if before.backgrounds != after.backgrounds:
        raise ValueError("maps average different background sets")
    rows = []
    for yi, y in enumerate(before.ys):
        for xi, x in enumerate(before.xs):
            b = float(before.values[yi, xi])
            a = float(after.values[yi, xi])
            rows.append(((x, y), b, a, a - b))
    rows.sort(key=lambda r: (r[3], r[0][1], r[0][0]))
    deltas = np.array([r[3] for r in rows])
    return ImprovementReport(
        rows=rows,
        improved=int((deltas > 0).sum()),
        degraded=int((deltas < 0).sum()),
        unchanged=int((deltas == 0).sum()),
    )


# ---------------------------------------------------------------------------
# Baseline segmenter


@dataclass(frozen=True, order=True)
class BaselineParams:
    """Ground-removal + clustering + car-size-window parameters.

    Heights are sensor-frame z (the default sensor rides 1.73 m above
    ground). Size windows are (long, short, height) bounds of a cluster's
    axis-aligned box, the horizontal sides sorted long-first.

    The default minimum width assumes a mostly-visible car; distant or
    edge-of-view cars show up as much thinner boxes, which is exactly the
    weakness the refit grid can buy back.
    """

    ground_height: float = -1.45
    cluster_radius: float = 0.9
    size_min: tuple = (1.2, 1.35, 0.25)
    size_max: tuple = (7.0, 2.6, 2.2)


def default_param_grid() -> list:
    """The documented search grid for refits, defaults included."""
    grid = []
    for g in (-1.45, -1.58):
        for r in (0.9, 1.8):
            for smin in ((1.2, 1.35, 0.25), (1.2, 0.35, 0.25)):
                grid.append(
                    BaselineParams(
                        ground_height=g, cluster_radius=r, size_min=smin
                    )
                )
    return grid


def _cluster_labels(points: np.ndarray, radius: float) -> np.ndarray:
    """Single-linkage component label per point (grid hash + union-find)."""
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    vox = np.floor(points / radius).astype(np.int64)
    base = np.int64(1) << np.int64(20)
    keys = (
        ((vox[:, 0] + base) << np.int64(42))
        | ((vox[:, 1] + base) << np.int64(21))
        | (vox[:, 2] + base)
    )
    order = np.argsort(keys, kind="stable")
    uniq, start = np.unique(keys[order], return_index=True)
    bucket_start = np.append(start, n).astype(np.int64)
    parent = np.arange(n, dtype=np.int64)
    _kernels.cluster_union(points, vox, order, uniq, bucket_start, radius, parent)
    _, labels = np.unique(parent, return_inverse=True)
    return labels


def baseline_segment(cloud, params: BaselineParams = BaselineParams()) -> np.ndarray:
    """Heuristic car segmentation: drop low points as ground, single-link
    cluster the rest, and accept clusters whose box fits the car window.

    Accepts a PointCloud or a raw (N, 3) sensor-frame array; returns one
    class id per point.
    """
    xyz = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud)
    pred = np.full(len(xyz), CLASS_BACKGROUND, dtype=np.int32)
    above = xyz[:, 2] > params.ground_height
    pts = xyz[above]
    if not len(pts):
        return pred
    labels = _cluster_labels(pts, params.cluster_radius)
    n_clusters = int(labels.max()) + 1
    lo = np.full((n_clusters, 3), np.inf)
    hi = np.full((n_clusters, 3), -np.inf)
    np.minimum.at(lo, labels, pts)
    np.maximum.at(hi, labels, pts)
    dims = hi - lo
    horiz = np.sort(dims[:, :2], axis=1)[:, ::-1]  # long side first
    boxes = np.column_stack([horiz, dims[:, 2]])
    smin = np.asarray(params.size_min)
    smax = np.asarray(params.size_max)
    is_car = np.all((boxes >= smin) & (boxes <= smax), axis=1)
    pred[above] = np.where(is_car[labels], CLASS_CAR, CLASS_BACKGROUND)
    return pred


def fit_baseline(param_grid: Sequence[BaselineParams], samples: Sequence) -> BaselineParams:
    """Exhaustive search maximizing mean car IoU over (xyz, labels) samples.

    Deterministic: exact score ties resolve to the lexicographically
    smaller parameter tuple.
    """
    grid = list(param_grid)
    if not grid:
        raise ValueError("empty parameter grid")
    samples = list(samples)
    if not samples:
        raise ValueError("empty retraining set")
    best = None
    best_score = -1.0
    for params in grid:
        total = 0.0
        for xyz, truth in samples:
            pred = baseline_segment(xyz, params)
            total += class_metrics(pred, truth, CLASS_CAR).iou
        score = total / len(samples)
        if score > best_score or (score == best_score and params < best):
            best = params
            best_score = score
    return best


# ---------------------------------------------------------------------------
# External predictions and manifest-wide evaluation


def read_predictions(directory, manifest: Manifest) -> dict:
    """Load per-cloud prediction files: ``<scene_id>.pred`` holding one
    unsigned byte class id per point in cloud order."""
    directory = Path(directory)
    out = {}
    for e in manifest.entries:
        pred_path = directory / f"{e.scene_id}.pred"
        if not pred_path.is_file():
            raise FileNotFoundError(
                f"no prediction file for scene {e.scene_id}: {pred_path}"
            )
        pred = np.frombuffer(pred_path.read_bytes(), dtype=np.uint8).astype(np.int32)
        n_points = manifest.path_of(e, "cloud").stat().st_size // 16
        if len(pred) != n_points:
            raise ValueError(
                f"scene {e.scene_id}: {len(pred)} predictions for "
                f"{n_points} points"
            )
        unknown = sorted(set(np.unique(pred)) - set(CLASS_NAMES))
        if unknown:
            raise ValueError(
                f"scene {e.scene_id}: unknown class id(s) {unknown}"
            )
        out[e.scene_id] = pred
    return out


def evaluate_manifest(
    manifest: Manifest,
    predictions: Optional[dict] = None,
    params: Optional[BaselineParams] = None,
    classes: Sequence[int] = tuple(sorted(CLASS_NAMES)),
) -> list:
    """Per-cloud, per-class metric rows for a generated dataset.

    Predictions come from ``predictions`` (scene_id -> class array) when
    given, otherwise from the built-in segmenter with ``params``.
    """
    rows = []
    for e in manifest.entries:
        xyz, truth, _ = load_cloud_files(
            manifest.path_of(e, "cloud"), manifest.path_of(e, "labels")
        )
        if predictions is not None:
            pred = predictions[e.scene_id]
            if len(pred) != len(truth):
                raise ValueError(
                    f"scene {e.scene_id}: prediction length mismatch"
                )
        else:
            pred = baseline_segment(xyz, params or BaselineParams())
        for c in classes:
            m = class_metrics(pred, truth, c)
            rows.append(
                {
                    "scene_id": e.scene_id,
                    "x": e.cell[0],
                    "y": e.cell[1],
                    "background_id": e.background_id,
                    "class_id": c,
                    "tp": m.tp,
                    "fp": m.fp,
                    "fn": m.fn,
                    "iou": m.iou,
                    "precision": m.precision,
                    "recall": m.recall,
                }
            )
    return rows


_METRIC_FIELDS = [
    "scene_id", "x", "y", "background_id", "class_id",
    "tp", "fp", "fn", "iou", "precision", "recall",
]


def metrics_rows_to_csv(rows: list, path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_METRIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        out = dict(row)
        for k in ("iou", "precision", "recall"):
            out[k] = f"{row[k]:.6f}"
        for k in ("x", "y"):
            out[k] = f"{row[k]:g}"
        w.writerow(out)
    path.write_text(buf.getvalue())
    return path


def metrics_rows_from_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "scene_id": row["scene_id"],
                    "x": float(row["x"]),
                    "y": float(row["y"]),
                    "background_id": int(row["background_id"]),
                    "class_id": int(row["class_id"]),
                    "tp": int(row["tp"]),
                    "fp": int(row["fp"]),
                    "fn": int(row["fn"]),
                    "iou": float(row["iou"]),
                    "precision": float(row["precision"]),
                    "recall": float(row["recall"]),
                }
            )
    return rows


def miou_records_from_rows(
    rows: list, class_id: int, backgrounds: Sequence[int]
) -> list:
    """(x, y, background, iou) records for one class restricted to a
    background set, ready for miou_map."""
    wanted = set(int(b) for b in backgrounds)
    return [
        (r["x"], r["y"], r["background_id"], r["iou"])
        for r in rows
        if r["class_id"] == class_id and r["background_id"] in wanted
    ]
