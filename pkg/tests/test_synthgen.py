"""Unit tests for the synthetic scene, LiDAR ray caster and sequence generator."""
import math
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

import src_occgen.logging_utils as logging_utils
from src_occgen.errors import SceneSpecError, ValidationError
from src_occgen.kitti_io import SequenceDir, read_poses, validate_sequence
from src_occgen.semantics import RemapTable
from src_occgen.synthgen import (
    NUM_REGIONS,
    SIM_ROAD,
    SIM_WALL,
    Box,
    EgoPose,
    LidarConfig,
    Plane,
    RigSpec,
    SceneSpec,
    Trajectory,
    _intersect,
    builtin_parking_lot,
    camera_poses,
    generate_sequence,
    lidar_pose,
    parse_scene,
    parse_trajectory,
    raycast_sweep,
    read_scene,
    select_regions,
    surface_distance,
    trajectory_clearance,
    write_scene,
)
from src_occgen.transforms import apply, lidar_to_lidar

FAST_LIDAR = LidarConfig(azimuth_steps=90)


def brute_force_hits(scene, origin, directions, max_range):
    """Slab test of every ray against every primitive, nearest hit wins, earlier primitive on ties."""
    best = np.full(len(directions), np.inf)
    index = np.full(len(directions), -1)
    inv = 1.0 / np.where(directions == 0.0, 1e-12, directions)
    for k, prim in enumerate(scene.primitives):
        if isinstance(prim, Plane):
            t = (prim.z - origin[2]) * inv[:, 2]
            hit = (directions[:, 2] != 0.0) & (t > 0) & (t < best)
        else:
            t1, t2 = (prim.lo - origin) * inv, (prim.hi - origin) * inv
            t = np.minimum(t1, t2).max(axis=1)
            hit = (t <= np.maximum(t1, t2).min(axis=1)) & (t > 0) & (t < best)
        best[hit] = t[hit]
        index[hit] = k
    index[best > max_range] = -1
    best[best > max_range] = np.inf
    return best, index


class TestLidarConfig(unittest.TestCase):

    def test_defaults(self):
        cfg = LidarConfig()
        self.assertEqual(cfg.points_per_sweep, 220000)
        self.assertEqual(cfg.azimuth_steps, 3437)
        self.assertEqual(cfg.rays_per_sweep, 64 * 3437)

    def test_elevation_bounds(self):
        el = np.rad2deg(LidarConfig().elevations())
        self.assertEqual(len(el), 64)
        self.assertAlmostEqual(el[0], -24.8, delta=1e-9)
        self.assertAlmostEqual(el[-1], 2.0, delta=1e-9)
        dirs = FAST_LIDAR.ray_directions()
        self.assertTrue(np.allclose(np.linalg.norm(dirs, axis=1), 1.0))
        pitch = np.rad2deg(np.arcsin(dirs[:, 2]))
        self.assertGreaterEqual(pitch.min(), -24.8 - 1e-9)
        self.assertLessEqual(pitch.max(), 2.0 + 1e-9)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            LidarConfig(lower_deg=5.0, upper_deg=2.0)
        with self.assertRaises(ValidationError):
            LidarConfig(azimuth_steps=0)


class TestRaycast(unittest.TestCase):

    def test_ground_plane_closed_form(self):
        """Every downward channel within range hits the floor at 1.8 / sin(-elevation)."""
        cfg = LidarConfig(azimuth_steps=8)
        frame = raycast_sweep(SceneSpec([Plane(0.0, SIM_ROAD)]), EgoPose(0.0, 0.0, 0.0), cfg)
        el = cfg.elevations()
        expected = 1.8 / np.sin(-el[el < 0])
        expected = expected[expected <= cfg.range]
        self.assertEqual(len(frame), len(expected) * 8)
        self.assertEqual(len(expected), 56)

        dist = np.linalg.norm(frame.xyz, axis=1).reshape(len(expected), 8)
        self.assertTrue(np.allclose(dist, expected[:, None], rtol=0, atol=1e-9))
        self.assertTrue(np.allclose(frame.xyz[:, 2], -1.8, rtol=0, atol=1e-9))
        self.assertTrue(np.allclose(frame.points[:, 3], 1.0 - dist.reshape(-1) / cfg.range))
        self.assertTrue(np.all(frame.labels == SIM_ROAD))

    def test_empty_scene(self):
        self.assertEqual(len(raycast_sweep(SceneSpec(), EgoPose(0.0, 0.0, 0.0))), 0)

    def test_box_behind_sensor(self):
        """A box at -x is only ever hit by rays pointing into the -x hemisphere."""
        scene = SceneSpec([Box((-10.0, 0.0, 1.8), (2.0, 2.0, 2.0), SIM_WALL)])
        frame = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), LidarConfig(azimuth_steps=360))
        self.assertGreater(len(frame), 0)
        self.assertTrue(np.all(frame.xyz[:, 0] < 0))
        self.assertTrue(np.all(frame.xyz[:, 0] <= -9.0 + 1e-9))

    def test_nearest_hit_wins(self):
        scene = SceneSpec([Box((10.0, 0.0, 1.8), (1.0, 40.0, 6.0), SIM_WALL), Box((20.0, 0.0, 1.8), (1.0, 40.0, 6.0), 5)])
        frame = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), LidarConfig(azimuth_steps=360))
        self.assertTrue(np.all(frame.labels[frame.xyz[:, 0] > 0] == SIM_WALL))

    def test_points_lie_on_surfaces(self):
        scene = SceneSpec([
            Plane(0.0, SIM_ROAD),
            Box((12.0, 4.0, 1.0), (3.0, 2.0, 2.0), SIM_WALL),
            Box((-6.0, -8.0, 1.5), (1.0, 6.0, 3.0), 20),
        ])
        ego = EgoPose(5.0, 3.0, 0.7)
        frame = raycast_sweep(scene, ego, LidarConfig(azimuth_steps=720))
        world = apply(lidar_pose(ego), frame.xyz)
        self.assertLess(float(surface_distance(scene, world).max()), 1e-6)
        self.assertEqual(set(np.unique(frame.labels).tolist()), {SIM_ROAD, SIM_WALL, 20})

    def test_range_noise_is_seeded(self):
        cfg = LidarConfig(azimuth_steps=16, range_noise=0.02)
        scene = SceneSpec([Plane(0.0, SIM_ROAD)])
        a = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), cfg, rng=np.random.default_rng(3))
        b = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), cfg, rng=np.random.default_rng(3))
        clean = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), LidarConfig(azimuth_steps=16))
        self.assertTrue(np.array_equal(a.points, b.points))
        self.assertFalse(np.array_equal(a.points, clean.points))

    def test_culled_cast_matches_brute_force(self):
        """Sector and range culling return the same nearest hits as testing every primitive."""
        scene, trajectories = builtin_parking_lot(0, frames=5)
        rig = RigSpec()
        for cfg in (FAST_LIDAR, LidarConfig(azimuth_steps=90, range=12.0)):
            local = cfg.ray_directions()
            for traj in (trajectories[0], trajectories[9], trajectories[20]):
                for ego in (traj[0], traj[4]):
                    pose = lidar_pose(ego, rig)
                    dirs = local @ pose.rotation.T
                    best, index = _intersect(scene, pose.translation, dirs, cfg.range)
                    want_best, want_index = brute_force_hits(scene, pose.translation, dirs, cfg.range)
                    self.assertTrue(np.array_equal(index, want_index), f"region {traj.region}")
                    self.assertTrue(np.array_equal(best, want_best), f"region {traj.region}")

    def test_box_straddling_azimuth_seam(self):
        """A box behind the sensor spans the +-pi azimuth seam and is still hit from both sides."""
        scene = SceneSpec([Box((-10.0, 0.0, 1.8), (2.0, 6.0, 2.0), SIM_WALL)])
        dirs = LidarConfig(azimuth_steps=360).ray_directions()
        origin = np.array([0.0, 0.0, 1.8])
        best, index = _intersect(scene, origin, dirs, 100.0)
        want_best, want_index = brute_force_hits(scene, origin, dirs, 100.0)
        self.assertTrue(np.array_equal(index, want_index))
        self.assertTrue(np.array_equal(best, want_best))
        hit_dirs = dirs[index == 0]
        self.assertTrue(np.any(hit_dirs[:, 1] > 0) and np.any(hit_dirs[:, 1] < 0))

    def test_out_of_range_box_is_skipped(self):
        scene = SceneSpec([Box((50.0, 0.0, 1.8), (2.0, 2.0, 2.0), SIM_WALL)])
        frame = raycast_sweep(scene, EgoPose(0.0, 0.0, 0.0), LidarConfig(azimuth_steps=360, range=40.0))
        self.assertEqual(len(frame), 0)


class TestRig(unittest.TestCase):

    def test_calib(self):
        calib = RigSpec().calib()
        fx = 620.0 / math.tan(math.radians(40.0))
        self.assertAlmostEqual(calib.p2[0, 0], fx, delta=1e-9)
        self.assertAlmostEqual(calib.p2[0, 0], 738.9, delta=0.05)
        self.assertEqual(calib.p2[0, 2], 620.0)
        self.assertEqual(calib.p2[1, 2], 185.0)
        self.assertAlmostEqual(calib.p3[0, 3], -fx * 0.5, delta=1e-9)
        self.assertAlmostEqual(calib.stereo_baseline(), 0.5, delta=1e-12)
        self.assertTrue(np.allclose(calib.tr[:, 3], [0.0, -0.1, -0.3], atol=1e-12))
        calib.validate()

    def test_single_frame_pose(self):
        poses = camera_poses(Trajectory([[4.0, 2.0, 1.0]]))
        self.assertEqual(len(poses), 1)
        self.assertTrue(np.array_equal(poses[0], np.eye(3, 4)))

    def test_forward_motion_maps_to_camera_z(self):
        """Driving 1 m forward moves the left camera 1 m along its optical axis."""
        poses = camera_poses(Trajectory([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        expected = np.eye(3, 4)
        expected[2, 3] = 1.0
        self.assertTrue(np.allclose(poses[1], expected, rtol=0, atol=1e-12))

    def test_rotated_start(self):
        """Forward motion is relative to the first heading."""
        poses = camera_poses(Trajectory([[3.0, 1.0, math.pi / 2], [3.0, 3.0, math.pi / 2]]))
        self.assertTrue(np.allclose(poses[0], np.eye(3, 4), atol=1e-12))
        self.assertTrue(np.allclose(poses[1][:, 3], [0.0, 0.0, 2.0], atol=1e-12))
        self.assertTrue(np.allclose(poses[1][:, :3], np.eye(3), atol=1e-12))


class TestSceneFiles(unittest.TestCase):

    def test_parse(self):
        scene = parse_scene("# floor\nplane 0 7\nbox 1 2 3 4 5 6 11  # wall\n")
        self.assertEqual(scene.labels(), [7, 11])
        self.assertEqual(scene.boxes[0].lo.tolist(), [-1.0, -0.5, 0.0])

    def test_bad_line_names_line_number(self):
        with self.assertRaises(SceneSpecError) as ctx:
            parse_scene("plane 0 7\nbox 1 2 3 4 5 11\n", "lot.scene")
        self.assertEqual(ctx.exception.line_number, 2)
        self.assertIn("lot.scene:2", str(ctx.exception))

    def test_unknown_primitive_and_label_range(self):
        with self.assertRaises(SceneSpecError):
            parse_scene("sphere 0 0 0 1 7\n")
        with self.assertRaises(SceneSpecError):
            parse_scene("plane 0 255\n")
        with self.assertRaises(SceneSpecError):
            parse_scene("box 0 0 0 0 1 1 7\n")

    def test_write_read(self):
        scene, _ = builtin_parking_lot(3)
        tmp = tempfile.mkdtemp()
        try:
            path = Path(tmp) / "lot.scene"
            write_scene(scene, path)
            self.assertEqual(read_scene(path), scene)
        finally:
            shutil.rmtree(tmp, ignore_errors=True)

    def test_trajectory(self):
        traj = parse_trajectory("# x y yaw\n0 0 0\n0.5 0 0\n")
        self.assertEqual(len(traj), 2)
        self.assertEqual(traj[1], EgoPose(0.5, 0.0, 0.0))
        with self.assertRaises(SceneSpecError) as ctx:
            parse_trajectory("0 0 0\n1 x 0\n")
        self.assertEqual(ctx.exception.line_number, 2)

    def test_trajectory_validation(self):
        with self.assertRaises(ValidationError):
            Trajectory(np.zeros((0, 3))).validate()
        with self.assertRaises(ValidationError):
            Trajectory([[0, 0, 0], [6, 0, 0]]).validate()


class TestBuiltinLot(unittest.TestCase):

    def test_regions(self):
        scene, trajectories = builtin_parking_lot(0)
        self.assertEqual(len(trajectories), NUM_REGIONS)
        self.assertEqual([t.region for t in trajectories], list(range(22)))
        self.assertEqual(scene.labels(), [6, 7, 10, 11, 20, 24])

    def test_clearance(self):
        """Every built-in drive keeps the sensor at least 0.5 m from every primitive."""
        scene, trajectories = builtin_parking_lot(0)
        for traj in trajectories:
            traj.validate()
            self.assertGreaterEqual(trajectory_clearance(scene, traj), 0.5, f"region {traj.region}")

    def test_seed_determinism(self):
        self.assertEqual(builtin_parking_lot(7)[0], builtin_parking_lot(7)[0])
        self.assertNotEqual(builtin_parking_lot(7)[0], builtin_parking_lot(8)[0])

    def test_select_regions(self):
        self.assertEqual(select_regions("train"), list(range(11)))
        self.assertEqual(select_regions("test"), list(range(11, 22)))
        self.assertEqual(len(select_regions("all")), 22)
        self.assertEqual(select_regions("3,5"), [3, 5])
        self.assertEqual(select_regions(4), [4])
        with self.assertRaises(ValueError):
            select_regions(22)

    def test_builtin_sweep_lies_on_surfaces(self):
        scene, trajectories = builtin_parking_lot(0, frames=3)
        for traj in (trajectories[2], trajectories[17]):
            ego = traj[1]
            frame = raycast_sweep(scene, ego, FAST_LIDAR)
            self.assertGreater(len(frame), 0)
            world = apply(lidar_pose(ego), frame.xyz)
            self.assertLess(float(surface_distance(scene, world).max()), 1e-6, f"region {traj.region}")

    def test_poses_agree_with_ego_motion(self):
        """Scan-to-scan transforms from calib and poses equal the LiDAR motion in the world."""
        rig = RigSpec()
        calib = rig.calib()
        _, trajectories = builtin_parking_lot(0, frames=6)
        for traj in (trajectories[1], trajectories[6], trajectories[19]):
            poses = camera_poses(traj, rig)
            for t in range(len(traj)):
                world_t = lidar_pose(traj[t], rig)
                for i in range(len(traj)):
                    expected = world_t.inverse() @ lidar_pose(traj[i], rig)
                    self.assertTrue(lidar_to_lidar(i, t, calib, poses).allclose(expected, 1e-9))
            steps = np.linalg.norm(np.diff(poses.poses[:, :, 3], axis=0), axis=1)
            self.assertTrue(np.allclose(steps, traj.steps(), rtol=0, atol=1e-9))


class TestGenerateSequence(unittest.TestCase):

    def setUp(self):
        logging_utils.reset_logger()
        logging_utils.setup_logger(level="WARNING")
        self.tmp = Path(tempfile.mkdtemp(prefix="occgen-gen-"))
        self.scene, trajectories = builtin_parking_lot(0, frames=3)
        self.trajectory = trajectories[0]

    def tearDown(self):
        logging_utils.reset_logger()
        shutil.rmtree(self.tmp, ignore_errors=True)

    def generate(self, name, threads=1):
        return generate_sequence(
            self.scene, self.trajectory, RigSpec(), self.tmp / name, FAST_LIDAR,
            RemapTable.default(), seed=0, threads=threads,
        )

    def test_sequence_passes_readers(self):
        result = self.generate("00")
        self.assertEqual(result.num_frames, 3)
        self.assertTrue(all(n > 0 for n in result.point_counts))
        self.assertEqual(validate_sequence(self.tmp / "00"), [])
        seq = SequenceDir(self.tmp / "00")
        self.assertEqual(seq.frame_ids(), [0, 1, 2])
        labels = np.concatenate([seq.load_frame(i).labels for i in range(3)])
        self.assertTrue(set(np.unique(labels).tolist()) <= {1, 2, 3, 4, 5})
        self.assertTrue(np.array_equal(read_poses(seq.poses_path)[0], np.eye(3, 4)))

    def test_byte_identical_reruns(self):
        self.generate("a")
        self.generate("b", threads=3)
        for rel in ("calib.txt", "poses.txt", "velodyne/000002.bin", "labels/000001.label"):
            self.assertEqual((self.tmp / "a" / rel).read_bytes(), (self.tmp / "b" / rel).read_bytes(), rel)

    def test_defaulted_ids_are_counted(self):
        self.assertEqual(self.generate("builtin").defaulted, {})
        result = generate_sequence(
            SceneSpec([Plane(0.0, 99)]), Trajectory([[0, 0, 0]]), RigSpec(), self.tmp / "stray", FAST_LIDAR,
            RemapTable.default(),
        )
        self.assertEqual(result.defaulted, {99: result.point_counts[0]})
        self.assertEqual(set(SequenceDir(self.tmp / "stray").load_frame(0).labels.tolist()), {0})

    def test_validation_before_writing(self):
        with self.assertRaises(ValidationError):
            generate_sequence(SceneSpec(), self.trajectory, RigSpec(), self.tmp / "empty", FAST_LIDAR)
        with self.assertRaises(ValidationError):
            generate_sequence(self.scene, Trajectory([[10, 10, 0], [20, 10, 0]]), RigSpec(), self.tmp / "jump", FAST_LIDAR)
        self.assertFalse((self.tmp / "empty").exists())
        self.assertFalse((self.tmp / "jump").exists())


if __name__ == '__main__':
    unittest.main()
