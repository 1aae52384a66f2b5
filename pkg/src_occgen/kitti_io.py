"""Readers and writers for the on-disk artifacts of a SemanticKITTI-style sequence.

Layout of a sequence root:

    velodyne/NNNNNN.bin    float32 x, y, z, intensity per point
    labels/NNNNNN.label    uint32 per point: low 16 bits semantic, high 16 bits instance
    voxels/NNNNNN.label    uint16 per voxel, x-major, z fastest
    voxels/NNNNNN.occ      uint8 0/1 per cell of the first-stage grid
    calib.txt              P0..P3 and Tr, 12 reals each
    poses.txt              one 3x4 left-camera pose per frame

All binary data is little-endian.
"""
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    CALIB_FILE,
    FLOAT_FORMAT,
    FRAME_ID_WIDTH,
    IDENTITY_POSE_TOL,
    LABEL_RECORD_BYTES,
    LABELS_DIR,
    OCCUPANCY_DIMS,
    ORTHONORMAL_TOL,
    POINT_RECORD_BYTES,
    POSES_FILE,
    VELODYNE_DIR,
    VOXEL_DIMS,
    VOXEL_RECORD_BYTES,
    VOXELS_DIR,
)
from .errors import (
    IncompleteCalibError,
    MalformedFileError,
    MissingArtifactError,
    ParseError,
    UnlabeledInputError,
    ValidationError,
)
from .logging_utils import get_logger
from .transforms import RigidTransform, check_rotation, lift_3x4

PathLike = Union[str, os.PathLike]

POINT_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
VOXEL_DTYPE = np.dtype("<u2")
OCCUPANCY_DTYPE = np.dtype("u1")

CALIB_KEYS = ("P0", "P1", "P2", "P3", "Tr")


def format_number(value: float) -> str:
    return format(float(value), FLOAT_FORMAT)


def frame_name(index: int) -> str:
    return f"{int(index):0{FRAME_ID_WIDTH}d}"


def read_text(path: PathLike) -> str:
    """Read a UTF-8 text artifact; undecodable bytes raise MalformedFileError."""
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedFileError(path, len(data), f"invalid UTF-8 at byte {e.start}") from None


# ---------------------------------------------------------------------------
# Point clouds

@dataclass
class PointCloudFrame:
    """One LiDAR sweep: (N, 4) x, y, z, intensity and (N,) semantic labels (or empty)."""

    points: np.ndarray
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint16))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        self.labels = np.asarray(self.labels, dtype=np.uint16).reshape(-1)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def has_labels(self) -> bool:
        return len(self.labels) == len(self.points)

    def validate(self):
        """Check the label count and finiteness invariants."""
        if len(self.labels) not in (0, len(self.points)):
            raise UnlabeledInputError(len(self.points), len(self.labels))
        if not np.all(np.isfinite(self.points)):
            raise ValidationError("point cloud contains non-finite coordinates")


def read_point_cloud(path: PathLike) -> PointCloudFrame:
    """Read a velodyne .bin file; labels are left empty."""
    size = os.path.getsize(path)
    if size % POINT_RECORD_BYTES:
        raise MalformedFileError(path, size, f"expected a multiple of {POINT_RECORD_BYTES}")
    raw = np.fromfile(path, dtype=POINT_DTYPE).reshape(-1, 4)
    if not np.all(np.isfinite(raw)):
        raise MalformedFileError(path, size, "non-finite coordinates")
    return PointCloudFrame(raw.astype(np.float64))


def write_point_cloud(frame, path: PathLike):
    """Write points (a PointCloudFrame or an (N, 4) array) as float32 records."""
    points = frame.points if isinstance(frame, PointCloudFrame) else frame
    np.ascontiguousarray(np.asarray(points).reshape(-1, 4), dtype=POINT_DTYPE).tofile(path)


# ---------------------------------------------------------------------------
# Point labels

def split_label_records(records) -> Tuple[np.ndarray, np.ndarray]:
    """Split uint32 records into (semantic, instance) uint16 arrays."""
    records = np.asarray(records, dtype=np.uint32)
    return (records & 0xFFFF).astype(np.uint16), (records >> 16).astype(np.uint16)


def join_label_records(semantic, instance=None) -> np.ndarray:
    semantic = np.asarray(semantic, dtype=np.uint32)
    if instance is None:
        return semantic
    return (np.asarray(instance, dtype=np.uint32) << 16) | semantic


def read_label_records(path: PathLike) -> np.ndarray:
    """Read raw uint32 label records (semantic and instance bits intact)."""
    size = os.path.getsize(path)
    if size % LABEL_RECORD_BYTES:
        raise MalformedFileError(path, size, f"expected a multiple of {LABEL_RECORD_BYTES}")
    return np.fromfile(path, dtype=LABEL_DTYPE).astype(np.uint32)


def read_labels(path: PathLike) -> np.ndarray:
    """Read per-point semantic ids (lower 16 bits of each record)."""
    return split_label_records(read_label_records(path))[0]


def write_label_records(records, path: PathLike):
    np.ascontiguousarray(records, dtype=LABEL_DTYPE).tofile(path)


def write_labels(semantic, path: PathLike, instance=None):
    write_label_records(join_label_records(semantic, instance), path)


# ---------------------------------------------------------------------------
# Text matrices

def _parse_reals(tokens: Sequence[str], path, lineno: int, expected: int = 12) -> np.ndarray:
    if len(tokens) != expected:
        raise ParseError(path, lineno, f"expected {expected} numbers, got {len(tokens)}")
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError:
        bad = next(t for t in tokens if not _is_float(t))
        raise ParseError(path, lineno, f"non-numeric token {bad!r}") from None
    if not np.all(np.isfinite(values)):
        raise ParseError(path, lineno, "non-finite value")
    return values


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _format_row(values) -> str:
    return " ".join(format_number(v) for v in np.asarray(values, dtype=np.float64).reshape(-1))


@dataclass(eq=False)
class CalibData:
    """Rectified 3x4 projection matrices P0..P3 and the LiDAR -> left camera transform Tr."""

    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    tr: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3", "tr"):
            m = np.asarray(getattr(self, name), dtype=np.float64).reshape(3, 4)
            setattr(self, name, m)

    def projection(self, key: str) -> np.ndarray:
        return getattr(self, key.lower())

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {key: self.projection(key) for key in CALIB_KEYS}

    def tr_transform(self) -> RigidTransform:
        return lift_3x4(self.tr)

    def stereo_baseline(self, left: str = "P2", right: str = "P3") -> float:
        """Baseline in meters encoded in the right camera's translation term."""
        p_left, p_right = self.projection(left), self.projection(right)
        return float((p_left[0, 3] - p_right[0, 3]) / p_right[0, 0])

    def validate(self, path=None):
        check_rotation(self.tr[:, :3], ORTHONORMAL_TOL)
        for key in ("P0", "P1", "P2", "P3"):
            p = self.projection(key)
            if p[0, 0] == 0 or p[1, 1] == 0:
                raise ParseError(path or "<calib>", None, f"{key} has a zero focal entry")

    def __eq__(self, other):
        if not isinstance(other, CalibData):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.as_dict().values(), other.as_dict().values()))


def read_calib(path: PathLike) -> CalibData:
    """Parse "KEY: 12 reals" lines; keys may appear in any order, duplicates last-wins."""
    found: Dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError(path, lineno, "expected 'KEY: values'")
        key, rest = line.split(":", 1)
        key = key.strip()
        if key not in CALIB_KEYS:
            get_logger().debug(f"{path}:{lineno}: ignoring calib key {key!r}")
            continue
        values = _parse_reals(rest.split(), path, lineno)
        if key in found:
            get_logger().warning(f"{path}:{lineno}: duplicate calib key {key}, last value wins")
        found[key] = values.reshape(3, 4)

    missing = [k for k in CALIB_KEYS if k not in found]
    if missing:
        raise IncompleteCalibError(path, missing)

    calib = CalibData(found["P0"], found["P1"], found["P2"], found["P3"], found["Tr"])
    calib.validate(path)
    return calib


def write_calib(calib: CalibData, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, matrix in calib.as_dict().items():
            f.write(f"{key}: {_format_row(matrix)}\n")


@dataclass(eq=False)
class PoseSequence:
    """(N, 3, 4) left-camera poses; poses[t] maps camera-t coordinates into camera-0 coordinates."""

    poses: np.ndarray

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 3, 4)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.poses[index]

    def transform(self, index: int) -> RigidTransform:
        return lift_3x4(self.poses[index])

    def validate(self, path=None):
        where = path or "<poses>"
        for k, pose in enumerate(self.poses):
            try:
                check_rotation(pose[:, :3], ORTHONORMAL_TOL)
            except ValueError as e:
                raise ParseError(where, k + 1, str(e)) from e
        if len(self.poses) and not np.allclose(self.poses[0], np.eye(3, 4), rtol=0.0, atol=IDENTITY_POSE_TOL):
            raise ParseError(where, 1, "first pose is not the identity")

    def __eq__(self, other):
        if not isinstance(other, PoseSequence):
            return NotImplemented
        return np.array_equal(self.poses, other.poses)


def read_poses(path: PathLike, validate: bool = True) -> PoseSequence:
    """Read one row-major 3x4 pose per line; line k is poses[k]."""
    rows: List[np.ndarray] = []
    for lineno, raw in enumerate(read_text(path).splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        rows.append(_parse_reals(tokens, path, lineno))
    poses = PoseSequence(np.array(rows).reshape(-1, 3, 4))
    if validate:
        poses.validate(path)
    return poses


def write_poses(poses: PoseSequence, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pose in poses.poses:
            f.write(_format_row(pose) + "\n")


# ---------------------------------------------------------------------------
# Voxel grids

def voxel_index(x: int, y: int, z: int, dims: Sequence[int] = VOXEL_DIMS) -> int:
    """Linear index x * (Y * Z) + y * Z + z."""
    _, ny, nz = dims
    return (int(x) * ny + int(y)) * nz + int(z)


def voxel_unindex(index: int, dims: Sequence[int] = VOXEL_DIMS) -> Tuple[int, int, int]:
    _, ny, nz = dims
    xy, z = divmod(int(index), nz)
    x, y = divmod(xy, ny)
    return x, y, z


def _grid_array(grid) -> np.ndarray:
    return np.asarray(getattr(grid, "labels", grid))


def read_voxel_labels(path: PathLike, dims: Sequence[int] = VOXEL_DIMS) -> np.ndarray:
    """Read a dense uint16 label grid of the given dims."""
    dims = tuple(int(d) for d in dims)
    expected = int(np.prod(dims)) * VOXEL_RECORD_BYTES
    size = os.path.getsize(path)
    if size != expected:
        raise MalformedFileError(path, size, f"expected exactly {expected}")
    return np.fromfile(path, dtype=VOXEL_DTYPE).astype(np.uint16).reshape(dims)


def write_voxel_labels(grid, path: PathLike):
    """Write a label grid (array or SemanticVoxelGrid) in C order."""
    np.ascontiguousarray(_grid_array(grid), dtype=VOXEL_DTYPE).tofile(path)


def read_occupancy(path: PathLike, dims: Sequence[int] = OCCUPANCY_DIMS) -> np.ndarray:
    """Read a one-byte-per-cell 0/1 occupancy grid (.occ)."""
    dims = tuple(int(d) for d in dims)
    expected = int(np.prod(dims))
    size = os.path.getsize(path)
    if size != expected:
        raise MalformedFileError(path, size, f"expected exactly {expected}")
    cells = np.fromfile(path, dtype=OCCUPANCY_DTYPE).reshape(dims)
    if np.any(cells > 1):
        raise MalformedFileError(path, size, "cells must be 0 or 1")
    return cells


def write_occupancy(grid, path: PathLike):
    cells = np.asarray(getattr(grid, "cells", grid))
    np.ascontiguousarray(cells, dtype=OCCUPANCY_DTYPE).tofile(path)


# ---------------------------------------------------------------------------
# Sequence directory

class SequenceDir:
    """Access to a sequence root laid out as described in the module docstring."""

    def __init__(self, root: PathLike):
        self.root = Path(root)

    @property
    def velodyne_dir(self) -> Path:
        return self.root / VELODYNE_DIR

    @property
    def labels_dir(self) -> Path:
        return self.root / LABELS_DIR

    @property
    def voxels_dir(self) -> Path:
        return self.root / VOXELS_DIR

    @property
    def calib_path(self) -> Path:
        return self.root / CALIB_FILE

    @property
    def poses_path(self) -> Path:
        return self.root / POSES_FILE

    def velodyne_path(self, index: int) -> Path:
        return self.velodyne_dir / f"{frame_name(index)}.bin"

    def labels_path(self, index: int) -> Path:
        return self.labels_dir / f"{frame_name(index)}.label"

    def voxels_path(self, index: int) -> Path:
        return self.voxels_dir / f"{frame_name(index)}.label"

    def make_dirs(self):
        for d in (self.velodyne_dir, self.labels_dir):
            d.mkdir(parents=True, exist_ok=True)

    def frame_ids(self) -> List[int]:
        """Frame ids present under velodyne/, ascending."""
        if not self.velodyne_dir.is_dir():
            return []
        ids = []
        for name in os.listdir(self.velodyne_dir):
            stem, ext = os.path.splitext(name)
            if ext == ".bin" and stem.isdigit():
                ids.append(int(stem))
        return sorted(ids)

    @property
    def num_frames(self) -> int:
        return len(self.poses)

    def __len__(self) -> int:
        return self.num_frames

    @cached_property
    def calib(self) -> CalibData:
        if not self.calib_path.exists():
            raise MissingArtifactError(-1, "calib", self.calib_path)
        return read_calib(self.calib_path)

    @cached_property
    def poses(self) -> PoseSequence:
        if not self.poses_path.exists():
            raise MissingArtifactError(-1, "poses", self.poses_path)
        return read_poses(self.poses_path)

    def load_frame(self, index: int, require_labels: bool = True) -> PointCloudFrame:
        """Load points and labels of a frame, validating that their counts agree."""
        bin_path = self.velodyne_path(index)
        if not bin_path.exists():
            raise MissingArtifactError(index, "velodyne", bin_path)
        frame = read_point_cloud(bin_path)
        label_path = self.labels_path(index)
        if label_path.exists():
            frame.labels = read_labels(label_path)
        elif require_labels:
            raise MissingArtifactError(index, "labels", label_path)
        if require_labels:
            validate_frame(frame)
        return frame

    def write_frame(self, index: int, frame: PointCloudFrame, instance=None):
        self.make_dirs()
        write_point_cloud(frame, self.velodyne_path(index))
        write_labels(frame.labels, self.labels_path(index), instance)


def validate_frame(frame: PointCloudFrame):
    """Caller-level check that a frame carries exactly one label per point."""
    if len(frame.labels) != len(frame.points):
        raise UnlabeledInputError(len(frame.points), len(frame.labels))


def validate_sequence(root: PathLike) -> List[str]:
    """
    Read every artifact of a sequence and return a list of problems (empty if clean).

    Checks: calib and poses parse and validate, frame ids are contiguous from 0,
    one pose per frame, every frame's point and label counts agree, every
    rotation in the LiDAR -> LiDAR chain is valid.
    """
    from .transforms import lidar_to_lidar

    seq = SequenceDir(root)
    problems: List[str] = []
    try:
        calib = seq.calib
        poses = seq.poses
    except (ValueError, OSError) as e:
        return [str(e)]

    ids = seq.frame_ids()
    if ids != list(range(len(ids))):
        problems.append(f"frame ids are not contiguous from 0: {ids[:5]}...")
    if len(ids) != len(poses):
        problems.append(f"{len(ids)} frames but {len(poses)} poses")

    for i in ids:
        try:
            seq.load_frame(i)
        except (ValueError, OSError) as e:
            problems.append(str(e))
        if i < len(poses):
            try:
                lidar_to_lidar(i, 0, calib, poses)
            except (ValueError, IndexError) as e:
                problems.append(f"frame {i}: {e}")
    return problems
