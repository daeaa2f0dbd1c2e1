"""Tests for the scan-pattern grid, scanning, and cloud export formats."""

import struct

import numpy as np
import pytest

from lidarsynth import lidar
from lidarsynth.geom import Pose, first_hit_brute
from lidarsynth.lidar import (
    LidarConfig,
    PointCloud,
    Provenance,
    angles_to_direction,
    export_cloud,
    generate_ray_grid,
    load_cloud_files,
    range_image,
    read_kitti_bin,
    read_labels,
    scan,
)
from lidarsynth.scene import Background, Scene, flat_scene, make_scene, place_car


def wall_scene(x=10.0, half=50.0):
    """A single vertical wall plane at world X = x."""
    tris = np.array(
        [
            [[x, -half, -half], [x, half, -half], [x, half, half]],
            [[x, -half, -half], [x, half, half], [x, -half, half]],
        ]
    )
    bg = Background(
        preset_id=-1,
        triangles=tris,
        material=np.zeros(2, dtype=np.int32),
        colors=np.asarray([[0.5, 0.5, 0.5]]),
        extent=half,
    )
    return Scene(bg)


def empty_scene():
    bg = Background(
        preset_id=-1,
        triangles=np.zeros((0, 3, 3)),
        material=np.zeros(0, dtype=np.int32),
        colors=np.asarray([[0.5, 0.5, 0.5]]),
        extent=10.0,
    )
    return Scene(bg)


class TestRayGrid:
    def test_grid_counts_and_endpoints(self):
        cfg = LidarConfig(
            vertical_fov=26, vertical_res=2, horizontal_fov=90,
            horizontal_res=0.5, pitch=6,
        )
        rays = generate_ray_grid(cfg)
        assert cfg.n_rows == 14 and cfg.n_cols == 181
        assert len(rays) == 2534
        zeniths = sorted({r.zenith for r in rays})
        assert zeniths[0] == pytest.approx(np.deg2rad(-7.0))
        assert zeniths[-1] == pytest.approx(np.deg2rad(19.0))
        # Row-major: the first row sweeps every azimuth once.
        assert [r.col for r in rays[:3]] == [0, 1, 2]
        assert all(r.row == 0 for r in rays[:181])

    def test_resolution_equal_to_fov_gives_two_rows(self):
        cfg = LidarConfig(vertical_fov=10, vertical_res=10)
        assert cfg.n_rows == 2

    def test_zero_pitch_is_symmetric(self):
        cfg = LidarConfig(vertical_fov=20, vertical_res=5, pitch=0)
        thetas = sorted({r.zenith for r in generate_ray_grid(cfg)})
        assert np.allclose(thetas, -np.asarray(thetas[::-1]))

    def test_default_pattern_is_64_by_512(self):
        cfg = LidarConfig()
        assert (cfg.n_rows, cfg.n_cols) == (64, 512)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LidarConfig(vertical_res=0)
        with pytest.raises(ValueError):
            LidarConfig(vertical_res=30, vertical_fov=26)
        with pytest.raises(ValueError):
            LidarConfig(horizontal_fov=400)
        with pytest.raises(ValueError):
            LidarConfig(max_range=0)

    def test_half_vertical_fov(self):
        assert LidarConfig(vertical_fov=26).half_vertical_fov == 13.0


class TestDirections:
    def test_boresight(self):
        assert np.allclose(angles_to_direction(0, 0), [1, 0, 0], atol=1e-15)

    def test_down_45(self):
        d = angles_to_direction(np.deg2rad(45), 0)
        assert np.allclose(d, [np.sqrt(0.5), 0, -np.sqrt(0.5)], atol=1e-12)

    def test_formula_oracle_10_5(self):
        # normalize(1, -tan5/cos10, -tan10), evaluated independently.
        d = angles_to_direction(np.deg2rad(10), np.deg2rad(5))
        assert np.allclose(d, [0.98106026, -0.08715574, -0.17298739], atol=1e-8)
        assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)

    def test_positive_azimuth_goes_left(self):
        d = angles_to_direction(0, np.deg2rad(10))
        assert d[1] < 0  # world/sensor Y is right, so left is negative

    def test_singularity_rejected(self):
        with pytest.raises(ValueError):
            angles_to_direction(np.pi / 2, 0)

    def test_pose_rotation_applied(self):
        d = angles_to_direction(0, 0, Pose.from_yaw(np.pi / 2))
        assert np.allclose(d, [0, 1, 0], atol=1e-12)


class TestScan:
    def test_wall_boresight(self):
        cfg = LidarConfig(
            vertical_fov=2, vertical_res=1, horizontal_fov=2, horizontal_res=1
        )
        cloud = scan(wall_scene(10.0), cfg)
        assert len(cloud) == cfg.n_rows * cfg.n_cols
        mid = np.where((cloud.rows == 1) & (cloud.cols == 1))[0]
        assert len(mid) == 1
        i = mid[0]
        assert np.allclose(cloud.xyz[i], [10, 0, 0], atol=1e-9)
        assert cloud.ranges[i] == pytest.approx(10.0, abs=1e-9)

    def test_ground_plane_closed_form(self):
        cfg = LidarConfig(
            vertical_fov=26, vertical_res=2, horizontal_fov=90,
            horizontal_res=5, pitch=6, max_range=80,
        )
        scene = flat_scene(extent=200.0)
        pose = Pose(np.eye(3), np.array([0.0, 0.0, 1.73]))
        cloud = scan(scene, cfg, pose)
        thetas, phis = lidar._grid_1d(cfg)
        expected = 0
        for r, t in enumerate(thetas):
            for c, p in enumerate(phis):
                if t <= 0:
                    continue
                n = np.linalg.norm([1.0, -np.tan(p) / np.cos(t), -np.tan(t)])
                dist = 1.73 * n / np.tan(t)
                if dist > cfg.max_range:
                    continue
                expected += 1
                sel = np.where((cloud.rows == r) & (cloud.cols == c))[0]
                assert len(sel) == 1
                assert abs(cloud.ranges[sel[0]] - dist) < 1e-6
                assert cloud.xyz[sel[0], 2] == pytest.approx(-1.73, abs=1e-9)
        assert len(cloud) == expected

    def test_single_downward_ray_example(self):
        cfg = LidarConfig(
            vertical_fov=60, vertical_res=30, horizontal_fov=90, horizontal_res=45
        )
        pose = Pose(np.eye(3), np.array([0.0, 0.0, 1.73]))
        cloud = scan(flat_scene(), cfg, pose)
        sel = np.where((cloud.rows == 2) & (cloud.cols == 1))[0]  # 30 deg down
        assert len(sel) == 1
        i = sel[0]
        assert cloud.ranges[i] == pytest.approx(1.73 / np.sin(np.deg2rad(30)), abs=1e-9)
        assert np.allclose(cloud.xyz[i], [2.996447897094158, 0, -1.73], atol=1e-6)

    def test_empty_scene_gives_empty_cloud(self):
        cloud = scan(empty_scene(), LidarConfig())
        assert len(cloud) == 0

    def test_round_trip_points_lie_on_rays(self):
        cfg = LidarConfig(vertical_res=2.0, horizontal_res=3.0)
        pose = Pose.from_yaw(0.4, (1.0, -2.0, 1.73))
        scene = place_car(make_scene(1), "sedan", 0.0, 10.0, 0.0)
        cloud = scan(scene, cfg, pose)
        assert len(cloud) > 0
        world = pose.transform_points(cloud.xyz)
        thetas, phis = lidar._grid_1d(cfg)
        d = lidar._directions_sensor(thetas[cloud.rows], phis[cloud.cols])
        d_world = pose.rotate(d)
        recon = pose.position + cloud.ranges[:, None] * d_world
        assert np.max(np.linalg.norm(world - recon, axis=1)) < 1e-9
        assert np.allclose(np.linalg.norm(cloud.xyz, axis=1), cloud.ranges, atol=1e-6)

    def test_row_col_pairs_unique_and_bounded(self):
        cfg = LidarConfig(vertical_res=2.0, horizontal_res=2.0)
        scene = place_car(make_scene(0), "suv", 1.0, 8.0, 0.2)
        cloud = scan(scene, cfg, Pose(np.eye(3), np.array([0, 0, 1.73])))
        keys = cloud.rows.astype(np.int64) * cfg.n_cols + cloud.cols
        assert len(np.unique(keys)) == len(cloud)
        assert len(cloud) <= cfg.n_rows * cfg.n_cols

    def test_label_fidelity_against_brute_force(self):
        cfg = LidarConfig(vertical_res=1.0, horizontal_res=1.5)
        pose = Pose(np.eye(3), np.array([0.0, 0.0, 1.73]))
        scene = place_car(flat_scene(), "sedan", 0.0, 10.0, 0.0)
        cloud = scan(scene, cfg, pose)
        thetas, phis, rows, cols = lidar._grid_arrays(cfg)
        d = pose.rotate(lidar._directions_sensor(thetas, phis))
        o = np.broadcast_to(pose.position, d.shape)
        t_b, obj_b, _ = first_hit_brute(
            scene.tri_verts, scene.tri_object, o, d, cfg.max_range
        )
        hit = np.isfinite(t_b)
        assert hit.sum() == len(cloud)
        cls_b = scene.object_class[obj_b[hit]]
        assert np.array_equal(np.sort(rows[hit] * 10_000 + cols[hit]),
                              np.sort(cloud.rows * 10_000 + cloud.cols))
        order_a = np.argsort(cloud.rows * 10_000 + cloud.cols)
        order_b = np.argsort(rows[hit] * 10_000 + cols[hit])
        assert np.array_equal(cloud.class_id[order_a], cls_b[order_b])
        assert (cloud.class_id == 1).sum() > 0

    def test_shrinking_range_only_removes_points(self):
        scene = place_car(make_scene(2), "sedan", 0.0, 12.0, 0.0)
        pose = Pose(np.eye(3), np.array([0, 0, 1.73]))
        big = scan(scene, LidarConfig(vertical_res=1, horizontal_res=1), pose)
        small_cfg = LidarConfig(vertical_res=1, horizontal_res=1, max_range=20)
        small = scan(scene, small_cfg, pose)
        key_big = {(r, c): (rg, cl) for r, c, rg, cl in
                   zip(big.rows, big.cols, big.ranges, big.class_id)}
        assert len(small) < len(big)
        for r, c, rg, cl in zip(small.rows, small.cols, small.ranges, small.class_id):
            rg_big, cl_big = key_big[(r, c)]
            assert rg == rg_big and cl == cl_big

    def test_noise_is_seeded_and_off_by_default(self):
        scene = wall_scene(10.0)
        cfg = LidarConfig(vertical_fov=2, vertical_res=1, horizontal_fov=2,
                          horizontal_res=1, noise_sigma=0.05)
        a = scan(scene, cfg, noise_seed=7)
        b = scan(scene, cfg, noise_seed=7)
        c = scan(scene, cfg, noise_seed=8)
        assert np.array_equal(a.ranges, b.ranges)
        assert not np.array_equal(a.ranges, c.ranges)
        clean = scan(scene, LidarConfig(vertical_fov=2, vertical_res=1,
                                        horizontal_fov=2, horizontal_res=1))
        assert np.allclose(clean.ranges, 10.0, atol=1e-9) is not None
        assert np.all(np.abs(clean.ranges - a.ranges) < 0.5)


def one_point_cloud(xyz=(1.0, 2.0, 3.0), class_id=1, instance_id=3):
    cfg = LidarConfig()
    return PointCloud(
        xyz=np.array([xyz], dtype=np.float64),
        ranges=np.array([np.linalg.norm(xyz)]),
        rows=np.array([0], dtype=np.int32),
        cols=np.array([0], dtype=np.int32),
        class_id=np.array([class_id], dtype=np.int32),
        instance_id=np.array([instance_id], dtype=np.int32),
        config=cfg,
        pose=Pose.identity(),
    )


def empty_cloud():
    cfg = LidarConfig()
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int32)
    return PointCloud(np.zeros((0, 3)), z, zi, zi, zi, zi, cfg, Pose.identity())


class TestExport:
    def test_kitti_bin_bytes(self, tmp_path):
        cloud = one_point_cloud()
        p = tmp_path / "c.bin"
        export_cloud(cloud, "kitti_bin", p)
        data = p.read_bytes()
        assert len(data) == 16
        assert data == struct.pack("<4f", 1.0, -2.0, 3.0, 0.0)

    def test_label_word_layout(self, tmp_path):
        cloud = one_point_cloud(class_id=1, instance_id=3)
        p = tmp_path / "c.bin"
        export_cloud(cloud, "kitti_bin", p, tmp_path / "c.label")
        word = struct.unpack("<I", (tmp_path / "c.label").read_bytes())[0]
        assert word == 0x00030001

    def test_empty_cloud_writes_empty_files(self, tmp_path):
        paths = export_cloud(empty_cloud(), "kitti_bin", tmp_path / "e.bin")
        for p in paths:
            assert p.stat().st_size == 0

    def test_round_trip_is_exact(self, tmp_path):
        scene = place_car(make_scene(0), "sedan", 0.0, 10.0, 0.0)
        cloud = scan(scene, LidarConfig(vertical_res=1, horizontal_res=1),
                     Pose(np.eye(3), np.array([0, 0, 1.73])))
        b, l = tmp_path / "c.bin", tmp_path / "c.label"
        export_cloud(cloud, "kitti_bin", b, l)
        xyz, intensity = read_kitti_bin(b)
        cls, inst = read_labels(l)
        assert np.array_equal(xyz, cloud.xyz.astype(np.float32).astype(np.float64))
        assert np.all(intensity == 0.0)
        assert np.array_equal(cls, cloud.class_id)
        assert np.array_equal(inst, cloud.instance_id)

    def test_ply_and_csv_fields(self, tmp_path):
        cloud = one_point_cloud()
        ply = tmp_path / "c.ply"
        export_cloud(cloud, "ply", ply)
        text = ply.read_text().splitlines()
        assert text[0] == "ply"
        assert "element vertex 1" in text
        row = text[-1].split()
        assert row[:3] == ["1", "-2", "3"]
        assert row[4:] == ["1", "3"]
        assert float(row[3]) == pytest.approx(float(cloud.ranges[0]))
        csvp = tmp_path / "c.csv"
        export_cloud(cloud, "csv", csvp)
        lines = csvp.read_text().splitlines()
        assert lines[0] == "x,y,z,range,class_id,instance_id"
        vals = lines[1].split(",")
        assert (vals[0], vals[1], vals[2]) == ("1", "-2", "3")

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown export format"):
            export_cloud(one_point_cloud(), "las", tmp_path / "c.las")

    def test_load_cloud_files_count_mismatch(self, tmp_path):
        cloud = one_point_cloud()
        export_cloud(cloud, "kitti_bin", tmp_path / "c.bin", tmp_path / "c.label")
        (tmp_path / "c.label").write_bytes(b"")
        with pytest.raises(ValueError, match="mismatch"):
            load_cloud_files(tmp_path / "c.bin", tmp_path / "c.label")


class TestRangeImage:
    def test_shape_matches_grid(self):
        cfg = LidarConfig(vertical_fov=26, vertical_res=2, horizontal_fov=90,
                          horizontal_res=0.5)
        cloud = scan(wall_scene(10.0), cfg)
        ranges, classes = range_image(cloud, cfg)
        assert ranges.shape == (14, 181) and classes.shape == (14, 181)

    def test_empty_cloud_gives_zero_image(self):
        cfg = LidarConfig()
        cloud = scan(empty_scene(), cfg)
        ranges, classes = range_image(cloud, cfg)
        assert not ranges.any() and not classes.any()

    def test_wall_ranges_match_plane_formula(self):
        cfg = LidarConfig(vertical_fov=10, vertical_res=2, horizontal_fov=30,
                          horizontal_res=5)
        cloud = scan(wall_scene(10.0), cfg)
        ranges, _ = range_image(cloud, cfg)
        thetas, phis = lidar._grid_1d(cfg)
        for r, t in enumerate(thetas):
            for c, p in enumerate(phis):
                n = np.linalg.norm([1.0, -np.tan(p) / np.cos(t), -np.tan(t)])
                assert abs(ranges[r, c] - 10.0 * n) < 1e-6

    def test_mismatched_config_rejected(self):
        cfg = LidarConfig()
        cloud = scan(empty_scene(), cfg)
        with pytest.raises(ValueError, match="different scan config"):
            range_image(cloud, LidarConfig(max_range=50))

    def test_provenance_travels(self):
        prov = Provenance("scene-7", (0, 10))
        cloud = scan(empty_scene(), LidarConfig(), provenance=prov)
        assert cloud.provenance == prov
