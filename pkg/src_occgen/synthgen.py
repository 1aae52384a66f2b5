"""Synthetic parking-lot sequences: box/plane scenes, a spinning LiDAR and SemanticKITTI output.

Frames follow one convention throughout: world, ego and LiDAR frames are
right-handed with x forward, y left, z up; camera frames have x right, y down,
z forward. The ego vehicle drives on the world floor (z = 0) and carries the
LiDAR and the left camera at fixed mounts given by RigSpec.

Labels emitted by the ray caster are the primitives' own ids (simulator ids
for the built-in scene); generate_sequence can remap them before writing.
"""
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import INVALID_LABEL
from .errors import SceneSpecError, ValidationError
from .kitti_io import (
    CalibData,
    PointCloudFrame,
    PoseSequence,
    SequenceDir,
    format_number,
    frame_name,
    read_text,
    write_calib,
    write_poses,
)
from .logging_utils import get_logger, record_stage
from .semantics import RemapTable, remap
from .transforms import RigidTransform, camera_axes, rotation_z

# Simulator ids used by the built-in scene (mapped to toolkit ids by data/default_remap.txt)
SIM_ROAD = 7
SIM_PARKED_VEHICLE = 10
SIM_WALL = 11
SIM_ROAD_LINE = 6
SIM_EDGE_LINE = 24
SIM_PILLAR = 20

NUM_REGIONS = 22
TRAIN_REGIONS = tuple(range(0, 11))
TEST_REGIONS = tuple(range(11, 22))

MAX_STEP = 5.0
_PARALLEL_EPS = 1e-12
_SECTOR_MARGIN = 1e-9


# ---------------------------------------------------------------------------
# Scene primitives

@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its center and full extents (meters)."""

    center: Tuple[float, float, float]
    extents: Tuple[float, float, float]
    label: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "label", int(self.label))
        if len(self.center) != 3 or len(self.extents) != 3:
            raise ValidationError("box needs three center coordinates and three extents")
        if not all(e > 0 for e in self.extents):
            raise ValidationError(f"box extents must be positive, got {self.extents}")
        _check_label(self.label)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.extents) / 2.0

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.extents) / 2.0


@dataclass(frozen=True)
class Plane:
    """Horizontal plane z = const, seen from both sides."""

    z: float
    label: int

    def __post_init__(self):
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "label", int(self.label))
        _check_label(self.label)


Primitive = Union[Box, Plane]


def _check_label(label: int):
    if not 1 <= label < INVALID_LABEL:
        raise ValidationError(f"primitive label must be in [1, 254], got {label}")


@dataclass
class SceneSpec:
    primitives: List[Primitive] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.primitives)

    @property
    def boxes(self) -> List[Box]:
        return [p for p in self.primitives if isinstance(p, Box)]

    @property
    def planes(self) -> List[Plane]:
        return [p for p in self.primitives if isinstance(p, Plane)]

    def labels(self) -> List[int]:
        return sorted({p.label for p in self.primitives})


def parse_scene(text: str, source: str = "<scene>") -> SceneSpec:
    """
    Parse one primitive per line:

        box cx cy cz ex ey ez label
        plane z label

    '#' starts a comment. Errors name the offending line.
    """
    primitives: List[Primitive] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        kind, args = tokens[0].lower(), tokens[1:]
        try:
            if kind == "box":
                if len(args) != 7:
                    raise ValueError(f"box takes 7 values, got {len(args)}")
                v = [float(a) for a in args[:6]]
                primitives.append(Box(v[:3], v[3:], _int_token(args[6])))
            elif kind == "plane":
                if len(args) != 2:
                    raise ValueError(f"plane takes 2 values, got {len(args)}")
                primitives.append(Plane(float(args[0]), _int_token(args[1])))
            else:
                raise ValueError(f"unknown primitive {tokens[0]!r}")
        except ValueError as e:
            raise SceneSpecError(source, lineno, str(e)) from None
    return SceneSpec(primitives)


def _int_token(token: str) -> int:
    value = float(token)
    if value != int(value):
        raise ValueError(f"label {token!r} is not an integer")
    return int(value)


def read_scene(path) -> SceneSpec:
    return parse_scene(read_text(path), str(path))


def write_scene(scene: SceneSpec, path):
    lines = ["# box cx cy cz ex ey ez label | plane z label"]
    for p in scene.primitives:
        if isinstance(p, Box):
            values = " ".join(format_number(v) for v in p.center + p.extents)
            lines.append(f"box {values} {p.label}")
        else:
            lines.append(f"plane {format_number(p.z)} {p.label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Sensors

@dataclass(frozen=True)
class LidarConfig:
    """
    Spinning LiDAR. One sweep casts channels x azimuth_steps rays; when not
    given, azimuth_steps = floor(points_per_second / rotation_hz / channels).
    range_noise is the std-dev (meters) of optional Gaussian range noise.
    """

    channels: int = 64
    range: float = 100.0
    points_per_second: int = 2_200_000
    rotation_hz: float = 10.0
    upper_deg: float = 2.0
    lower_deg: float = -24.8
    azimuth_steps: Optional[int] = None
    range_noise: float = 0.0

    def __post_init__(self):
        if self.channels < 1 or not self.range > 0 or not self.rotation_hz > 0:
            raise ValidationError("channels, range and rotation_hz must be positive")
        if not self.lower_deg < self.upper_deg:
            raise ValidationError(f"lower_deg {self.lower_deg} must be below upper_deg {self.upper_deg}")
        if self.azimuth_steps is None:
            object.__setattr__(self, "azimuth_steps", self.points_per_sweep // self.channels)
        if self.azimuth_steps < 1:
            raise ValidationError("azimuth_steps must be at least 1")
        if self.range_noise < 0:
            raise ValidationError("range_noise must be >= 0")

    @property
    def points_per_sweep(self) -> int:
        return int(self.points_per_second / self.rotation_hz)

    @property
    def rays_per_sweep(self) -> int:
        return self.channels * self.azimuth_steps

    def elevations(self) -> np.ndarray:
        """Channel elevations in radians, evenly spaced with both ends included."""
        return np.deg2rad(np.linspace(self.lower_deg, self.upper_deg, self.channels))

    def azimuths(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.azimuth_steps) / self.azimuth_steps

    def ray_directions(self) -> np.ndarray:
        """(channels * azimuth_steps, 3) unit vectors in the LiDAR frame, channel-major."""
        el, az = np.meshgrid(self.elevations(), self.azimuths(), indexing="ij")
        el, az = el.reshape(-1), az.reshape(-1)
        return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)


@dataclass(frozen=True)
class RigSpec:
    """Sensor mounts in the ego frame plus the camera model used for calib.txt."""

    lidar_position: Tuple[float, float, float] = (0.0, 0.0, 1.80)
    camera_position: Tuple[float, float, float] = (0.30, 0.0, 1.70)
    baseline: float = 0.50
    image_width: int = 1240
    image_height: int = 370
    fov_deg: float = 80.0

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise ValidationError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValidationError("image size must be positive")

    def intrinsics(self) -> np.ndarray:
        """Pinhole K with square pixels; fov_deg is the horizontal field of view."""
        fx = (self.image_width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)
        return np.array([[fx, 0.0, self.image_width / 2.0],
                         [0.0, fx, self.image_height / 2.0],
                         [0.0, 0.0, 1.0]])

    def projection(self, right: bool = False) -> np.ndarray:
        k = self.intrinsics()
        p = np.hstack([k, np.zeros((3, 1))])
        if right:
            p[0, 3] = -k[0, 0] * self.baseline
        return p

    def camera_mount(self) -> RigidTransform:
        """Left camera -> ego."""
        return RigidTransform.from_rotation_translation(camera_axes().T, self.camera_position)

    def lidar_mount(self) -> RigidTransform:
        """LiDAR -> ego."""
        return RigidTransform.from_rotation_translation(np.eye(3), self.lidar_position)

    def lidar_to_camera(self) -> RigidTransform:
        """Tr: LiDAR -> left camera."""
        return self.camera_mount().inverse() @ self.lidar_mount()

    def calib(self) -> CalibData:
        left, right = self.projection(), self.projection(right=True)
        return CalibData(left, right, left, right, self.lidar_to_camera().to_3x4())


# ---------------------------------------------------------------------------
# Trajectories

class EgoPose(NamedTuple):
    x: float
    y: float
    yaw: float

    def transform(self) -> RigidTransform:
        """Ego -> world."""
        return RigidTransform.from_rotation_translation(rotation_z(self.yaw), (self.x, self.y, 0.0))


@dataclass
class Trajectory:
    """Ego poses (x, y, yaw) at consecutive sweeps."""

    poses: np.ndarray
    region: Optional[int] = None

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, index: int) -> EgoPose:
        x, y, yaw = self.poses[index]
        return EgoPose(float(x), float(y), float(yaw))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def steps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.poses[:, :2], axis=0), axis=1)

    def validate(self, max_step: float = MAX_STEP):
        if len(self.poses) == 0:
            raise ValidationError("trajectory is empty")
        if not np.all(np.isfinite(self.poses)):
            raise ValidationError("trajectory contains non-finite values")
        steps = self.steps()
        if len(steps) and steps.max() >= max_step:
            k = int(np.argmax(steps))
            raise ValidationError(f"step {k} -> {k + 1} moves {steps[k]:.3f} m (limit {max_step} m)")


def parse_trajectory(text: str, source: str = "<trajectory>") -> Trajectory:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise SceneSpecError(source, lineno, f"expected 'x y yaw', got {raw.strip()!r}")
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            raise SceneSpecError(source, lineno, f"non-numeric value in {raw.strip()!r}") from None
    return Trajectory(np.array(rows).reshape(-1, 3))


def read_trajectory(path) -> Trajectory:
    return parse_trajectory(read_text(path), str(path))


def write_trajectory(trajectory: Trajectory, path):
    lines = ["# x y yaw"]
    lines += [" ".join(format_number(v) for v in row) for row in trajectory.poses]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def lidar_pose(ego: EgoPose, rig: RigSpec = RigSpec()) -> RigidTransform:
    """LiDAR -> world for an ego pose."""
    return ego.transform() @ rig.lidar_mount()


def camera_poses(trajectory: Trajectory, rig: RigSpec = RigSpec()) -> PoseSequence:
    """
    Left-camera poses relative to the first sweep:

        pose_t = C^-1 . W_rel(t) . C

    with C the camera mount and W_rel(t) the ego motion from sweep 0 to t,
    built from the yaw difference and the rotated offset so pose_0 is exactly I.
    """
    mount = rig.camera_mount()
    mount_inv = mount.inverse()
    x0, y0, yaw0 = trajectory.poses[0]
    back = rotation_z(-yaw0)
    out = []
    for x, y, yaw in trajectory.poses:
        offset = back @ np.array([x - x0, y - y0, 0.0])
        relative = RigidTransform.from_rotation_translation(rotation_z(yaw - yaw0), offset)
        out.append((mount_inv @ relative @ mount).to_3x4() + 0.0)
    return PoseSequence(np.array(out))


# ---------------------------------------------------------------------------
# Ray casting

def _wrap_angle(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def _box_range(box: Box, origin: np.ndarray) -> float:
    """Distance from origin to the closest point of the box (0 inside)."""
    return float(np.linalg.norm(np.maximum(np.maximum(box.lo - origin, origin - box.hi), 0.0)))


def _azimuth_sector(box: Box, origin: np.ndarray) -> Optional[Tuple[float, float]]:
    """
    (center, half_width) of the azimuth interval the box footprint covers
    seen from origin, or None when the footprint contains origin in x-y.
    """
    lo, hi = box.lo, box.hi
    if lo[0] <= origin[0] <= hi[0] and lo[1] <= origin[1] <= hi[1]:
        return None
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]]) - origin[:2]
    center = math.atan2(box.center[1] - origin[1], box.center[0] - origin[0])
    offsets = _wrap_angle(np.arctan2(corners[:, 1], corners[:, 0]) - center)
    return center, float(np.abs(offsets).max())


class _RayIndex:
    """Rays sorted by world azimuth so a sector lookup is two binary searches."""

    def __init__(self, directions: np.ndarray):
        planar = np.hypot(directions[:, 0], directions[:, 1])
        azimuth = np.arctan2(directions[:, 1], directions[:, 0])
        self.all = np.arange(len(directions))
        self.vertical = np.flatnonzero(planar == 0.0)
        has_azimuth = planar != 0.0
        self.order = np.flatnonzero(has_azimuth)[np.argsort(azimuth[has_azimuth], kind="stable")]
        self.sorted = azimuth[self.order]

    def _span(self, a: float, b: float) -> np.ndarray:
        i = np.searchsorted(self.sorted, a, side="left")
        j = np.searchsorted(self.sorted, b, side="right")
        return self.order[i:j]

    def sector(self, center: float, half_width: float) -> np.ndarray:
        a, b = center - half_width - _SECTOR_MARGIN, center + half_width + _SECTOR_MARGIN
        parts = [self._span(max(a, -np.pi), min(b, np.pi))]
        if a < -np.pi:
            parts.append(self._span(a + 2.0 * np.pi, np.pi))
        if b > np.pi:
            parts.append(self._span(-np.pi, b - 2.0 * np.pi))
        parts.append(self.vertical)
        return np.unique(np.concatenate(parts))


def _intersect(scene: SceneSpec, origin: np.ndarray, directions: np.ndarray, max_range: float):
    """
    Nearest hit distance and primitive index per ray (inf / -1 on miss).

    Primitives farther than max_range are skipped and each box is only
    tested against the rays inside its azimuth sector; primitives are still
    visited in scene order so ties go to the earlier primitive.
    """
    n = len(directions)
    best = np.full(n, np.inf)
    index = np.full(n, -1, dtype=np.int64)
    safe = np.where(directions == 0.0, _PARALLEL_EPS, directions)
    inv = 1.0 / safe
    rays = _RayIndex(directions)
    tested = 0

    for k, prim in enumerate(scene.primitives):
        if isinstance(prim, Plane):
            if abs(prim.z - origin[2]) > max_range:
                continue
            idx = rays.all
            t = (prim.z - origin[2]) * inv[:, 2]
            hit = (directions[:, 2] != 0.0) & (t > 0) & (t < best)
        else:
            if _box_range(prim, origin) > max_range:
                continue
            sector = _azimuth_sector(prim, origin)
            idx = rays.all if sector is None else rays.sector(*sector)
            if len(idx) == 0:
                continue
            t1 = (prim.lo - origin) * inv[idx]
            t2 = (prim.hi - origin) * inv[idx]
            t = np.minimum(t1, t2).max(axis=1)
            t_far = np.maximum(t1, t2).min(axis=1)
            hit = (t <= t_far) & (t > 0) & (t < best[idx])
        tested += len(idx)
        best[idx[hit]] = t[hit]
        index[idx[hit]] = k

    get_logger().debug(f"ray cast: {tested} ray-primitive tests for {n} rays x {len(scene)} primitives")
    index[best > max_range] = -1
    best[best > max_range] = np.inf
    return best, index


def raycast_sweep(
    scene: SceneSpec,
    ego: EgoPose,
    cfg: LidarConfig = LidarConfig(),
    rig: RigSpec = RigSpec(),
    rng: Optional[np.random.Generator] = None,
) -> PointCloudFrame:
    """
    Cast one full revolution and return the hits in the LiDAR frame.

    Each ray keeps its closest primitive hit within range; misses emit
    nothing. Intensity is 1 - distance / range. Labels are primitive labels.
    """
    if len(scene) == 0:
        return PointCloudFrame(np.zeros((0, 4)), np.zeros(0, dtype=np.uint16))

    local = cfg.ray_directions()
    pose = lidar_pose(ego, rig)
    world_dirs = local @ pose.rotation.T
    best, index = _intersect(scene, pose.translation, world_dirs, cfg.range)

    hit = index >= 0
    dist = best[hit]
    if cfg.range_noise > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        dist = np.clip(dist + rng.normal(0.0, cfg.range_noise, len(dist)), 0.0, cfg.range)
    xyz = local[hit] * dist[:, None]
    intensity = 1.0 - dist / cfg.range
    labels = np.array([p.label for p in scene.primitives], dtype=np.uint16)[index[hit]]
    return PointCloudFrame(np.hstack([xyz, intensity[:, None]]), labels)


def point_surface_distance(points, primitive: Primitive) -> np.ndarray:
    """Distance from world-frame points to the surface of one primitive."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if isinstance(primitive, Plane):
        return np.abs(pts[:, 2] - primitive.z)
    lo, hi = primitive.lo, primitive.hi
    outside = np.linalg.norm(np.maximum(np.maximum(lo - pts, pts - hi), 0.0), axis=1)
    inside = np.minimum(pts - lo, hi - pts).min(axis=1)
    return np.where(outside > 0, outside, np.maximum(inside, 0.0))


def surface_distance(scene: SceneSpec, points) -> np.ndarray:
    """Distance from each point to the nearest primitive surface."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.full(len(pts), np.inf)
    for prim in scene.primitives:
        out = np.minimum(out, point_surface_distance(pts, prim))
    return out


def trajectory_clearance(scene: SceneSpec, trajectory: Trajectory, rig: RigSpec = RigSpec()) -> float:
    """Smallest distance between any LiDAR position along the trajectory and any primitive."""
    positions = np.array([lidar_pose(ego, rig).translation for ego in trajectory])
    if len(scene) == 0:
        return math.inf
    return float(surface_distance(scene, positions).min())


# ---------------------------------------------------------------------------
# Sequence generation

@dataclass
class GenerationResult:
    root: Path
    point_counts: List[int]
    defaulted: Counter = field(default_factory=Counter)

    @property
    def num_frames(self) -> int:
        return len(self.point_counts)


def generate_sequence(
    scene: SceneSpec,
    trajectory: Trajectory,
    rig: RigSpec,
    out,
    lidar: LidarConfig = LidarConfig(),
    remap_table: Optional[RemapTable] = None,
    seed: int = 0,
    threads: int = 1,
) -> GenerationResult:
    """
    Write a complete sequence directory (velodyne/, labels/, calib.txt, poses.txt).

    All inputs are validated before anything is written. Frames are cast
    independently; frame i draws its noise from default_rng(seed + i), so the
    output does not depend on threads.
    """
    if len(scene) == 0:
        raise ValidationError("scene has no primitives")
    trajectory.validate()
    calib = rig.calib()
    calib.validate()
    poses = camera_poses(trajectory, rig)
    poses.validate()

    seq = SequenceDir(out)
    seq.make_dirs()
    write_calib(calib, seq.calib_path)
    write_poses(poses, seq.poses_path)

    def work(i: int) -> Tuple[int, Counter]:
        frame = raycast_sweep(scene, trajectory[i], lidar, rig, np.random.default_rng(seed + i))
        defaulted: Counter = Counter()
        if remap_table is not None:
            frame.labels = remap(frame.labels, remap_table, defaulted)
        seq.write_frame(i, frame)
        record_stage("generate", frame_name(i), "ok", f"{len(frame)} points")
        return len(frame), defaulted

    indices = range(len(trajectory))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, indices))
    else:
        results = [work(i) for i in indices]
    counts = [n for n, _ in results]
    defaulted = sum((d for _, d in results), Counter())
    get_logger().info(f"generated {len(counts)} frames under {os.fspath(out)}")
    return GenerationResult(Path(out), counts, defaulted)


# ---------------------------------------------------------------------------
# Built-in parking lot

LOT_SIZE = (90.0, 80.0)
WALL_HEIGHT = 3.0
WALL_THICKNESS = 0.3
AISLE_HALF_WIDTH = 3.0
H_AISLES = (10.0, 30.0, 50.0, 70.0)
V_AISLES = (8.0, 45.0, 82.0)
CAR_SIZE = (1.9, 4.5, 1.5)
BAY_WIDTH = 2.6
BAY_DEPTH = 5.0
PILLAR_SIZE = (0.6, 0.6, WALL_HEIGHT)
PILLAR_SPACING = 8.0
LINE_WIDTH = 0.15
LINE_HEIGHT = 0.02
PARKING_PROBABILITY = 0.5


def _parking_spans() -> List[Tuple[float, float]]:
    """x ranges between the vertical aisles."""
    edges = [0.0] + [e for x in V_AISLES for e in (x - AISLE_HALF_WIDTH, x + AISLE_HALF_WIDTH)] + [LOT_SIZE[0]]
    spans = [(edges[k], edges[k + 1]) for k in range(0, len(edges), 2)]
    return [(a, b) for a, b in spans if b - a >= BAY_WIDTH]


def _bay_rows() -> List[float]:
    """y centers of the parking rows on both sides of every horizontal aisle."""
    rows = []
    for y in H_AISLES:
        rows.append(y - AISLE_HALF_WIDTH - BAY_DEPTH / 2.0)
        rows.append(y + AISLE_HALF_WIDTH + BAY_DEPTH / 2.0)
    return sorted(r for r in rows if BAY_DEPTH / 2.0 <= r <= LOT_SIZE[1] - BAY_DEPTH / 2.0)


def _pillar_rows() -> List[float]:
    """Midlines between back-to-back parking rows."""
    return [(a + b) / 2.0 for a, b in zip(H_AISLES[:-1], H_AISLES[1:])]


def _lot_structure() -> List[Primitive]:
    w, h = LOT_SIZE
    half = WALL_THICKNESS / 2.0
    zc = WALL_HEIGHT / 2.0
    prims: List[Primitive] = [Plane(0.0, SIM_ROAD)]
    prims += [
        Box((w / 2.0, -half, zc), (w + 2 * WALL_THICKNESS, WALL_THICKNESS, WALL_HEIGHT), SIM_WALL),
        Box((w / 2.0, h + half, zc), (w + 2 * WALL_THICKNESS, WALL_THICKNESS, WALL_HEIGHT), SIM_WALL),
        Box((-half, h / 2.0, zc), (WALL_THICKNESS, h, WALL_HEIGHT), SIM_WALL),
        Box((w + half, h / 2.0, zc), (WALL_THICKNESS, h, WALL_HEIGHT), SIM_WALL),
    ]
    lz = LINE_HEIGHT / 2.0
    for y in H_AISLES:
        prims.append(Box((w / 2.0, y, lz), (w, LINE_WIDTH, LINE_HEIGHT), SIM_ROAD_LINE))
        for side in (-1, 1):
            yy = y + side * (AISLE_HALF_WIDTH - 0.2)
            prims.append(Box((w / 2.0, yy, lz), (w, LINE_WIDTH, LINE_HEIGHT), SIM_EDGE_LINE))
    for x in V_AISLES:
        prims.append(Box((x, h / 2.0, lz), (LINE_WIDTH, h, LINE_HEIGHT), SIM_ROAD_LINE))
    for y in _pillar_rows():
        for a, b in _parking_spans():
            for x in np.arange(a + PILLAR_SPACING / 2.0, b, PILLAR_SPACING):
                prims.append(Box((float(x), y, PILLAR_SIZE[2] / 2.0), PILLAR_SIZE, SIM_PILLAR))
    return prims


def _parked_vehicles(rng: np.random.Generator) -> List[Box]:
    cars = []
    for y in _bay_rows():
        for a, b in _parking_spans():
            n_bays = int((b - a) // BAY_WIDTH)
            for k in range(n_bays):
                if rng.random() < PARKING_PROBABILITY:
                    x = a + (k + 0.5) * BAY_WIDTH
                    cars.append(Box((x, y, CAR_SIZE[2] / 2.0), CAR_SIZE, SIM_PARKED_VEHICLE))
    return cars


def _straight_trajectory(start, heading: float, length: float, frames: int, region: int) -> Trajectory:
    step = min(0.5, length / (frames - 1)) if frames > 1 else 0.0
    d = np.array([math.cos(heading), math.sin(heading)])
    xy = np.asarray(start, dtype=np.float64) + np.outer(np.arange(frames) * step, d)
    return Trajectory(np.column_stack([xy, np.full(frames, heading)]), region)


def builtin_trajectories(frames: int = 20) -> List[Trajectory]:
    """22 drives along aisle segments: 4 per horizontal aisle, then 2 per vertical aisle."""
    if frames < 1:
        raise ValidationError("frames must be at least 1")
    w, h = LOT_SIZE
    margin = AISLE_HALF_WIDTH
    out: List[Trajectory] = []
    seg = (w - 2 * margin) / 4.0
    for a, y in enumerate(H_AISLES):
        for s in range(4):
            x0 = margin + s * seg
            if a % 2:
                out.append(_straight_trajectory((x0 + seg, y), math.pi, seg, frames, len(out)))
            else:
                out.append(_straight_trajectory((x0, y), 0.0, seg, frames, len(out)))
    seg = (h - 2 * margin) / 2.0
    for x in V_AISLES:
        for s in range(2):
            out.append(_straight_trajectory((x, margin + s * seg), math.pi / 2.0, seg, frames, len(out)))
    return out


def builtin_parking_lot(seed: int = 0, frames: int = 20) -> Tuple[SceneSpec, List[Trajectory]]:
    """
    Deterministic underground-parking scene for a seed.

    Walls, floor, pillars and lane markings are fixed; which bays hold a
    parked vehicle is drawn from default_rng(seed).
    """
    rng = np.random.default_rng(seed)
    scene = SceneSpec(_lot_structure() + _parked_vehicles(rng))
    return scene, builtin_trajectories(frames)


def select_regions(selector: Union[str, int, Iterable[int]]) -> List[int]:
    """Region ids for "train" (0-10), "test" (11-21), "all" or explicit ids."""
    if isinstance(selector, str):
        key = selector.strip().lower()
        if key == "train":
            return list(TRAIN_REGIONS)
        if key == "test":
            return list(TEST_REGIONS)
        if key == "all":
            return list(range(NUM_REGIONS))
        ids: Sequence[int] = [int(s) for s in key.split(",") if s.strip()]
    elif isinstance(selector, int):
        ids = [selector]
    else:
        ids = [int(s) for s in selector]
    for r in ids:
        if not 0 <= r < NUM_REGIONS:
            raise ValueError(f"region {r} outside [0, {NUM_REGIONS - 1}]")
    return list(ids)
