"""lidarsynth: synthetic LiDAR scanning over procedural driving scenes.

The package simulates a configurable scanner against labeled triangle-soup
worlds, renders calibrated camera views of the same scenes, sweeps a scene
modification space on a grid, and maps where a segmentation model's accuracy
collapses so those cells can be patched with targeted synthetic data.

Modules:

* :mod:`lidarsynth.geom` - rays, poses, accelerated first-hit queries
* :mod:`lidarsynth.scene` - assets, background presets, scene files, sweeps
* :mod:`lidarsynth.lidar` - scan grids, scanning, cloud export
* :mod:`lidarsynth.camera` - pixel calibration, rendering, overlays
* :mod:`lidarsynth.evaluation` - metrics, mIoU maps, the blind-spot loop
* :mod:`lidarsynth.cli` - the batch command-line tool
"""

from .camera import (
    CameraConfig,
    RenderedImage,
    calibrate_pixel,
    laser_endpoints,
    overlay_points,
    project_point,
    render,
)
from .evaluation import (
    BaselineParams,
    MIoUMap,
    baseline_segment,
    build_retrain_set,
    class_metrics,
    fit_baseline,
    improvement_report,
    miou_map,
    read_predictions,
    select_blind_spots,
)
from .geom import AccelIndex, Hit, Pose, Ray, Triangle, build_accel, first_hit
from .lidar import (
    LidarConfig,
    PointCloud,
    angles_to_direction,
    export_cloud,
    generate_ray_grid,
    range_image,
    scan,
)
from .manifest import Manifest, ManifestEntry
from .scene import (
    Asset,
    EgoPath,
    Scene,
    SceneObject,
    SweepSpec,
    builtin_assets,
    builtin_backgrounds,
    ego_scan_poses,
    instantiate_sweep,
    load_scene,
    load_sweep,
    make_scene,
    place_car,
    standard_sweep_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AccelIndex", "Asset", "BaselineParams", "CameraConfig", "EgoPath",
    "Hit", "LidarConfig", "MIoUMap", "Manifest", "ManifestEntry",
    "PointCloud", "Pose", "Ray", "RenderedImage", "Scene", "SceneObject",
    "SweepSpec", "Triangle", "angles_to_direction", "baseline_segment",
    "build_accel", "build_retrain_set", "builtin_assets",
    "builtin_backgrounds", "calibrate_pixel", "class_metrics",
    "ego_scan_poses", "export_cloud", "first_hit", "fit_baseline",
    "generate_ray_grid", "improvement_report", "instantiate_sweep",
    "laser_endpoints", "load_scene", "load_sweep", "make_scene", "miou_map",
    "overlay_points", "place_car", "project_point", "range_image", "render",
    "scan", "select_blind_spots", "standard_sweep_spec",
]
