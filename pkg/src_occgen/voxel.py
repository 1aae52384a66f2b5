"""Second-stage ground truth: voxelization and multi-frame fusion with majority-vote labels.

A target frame t is densified by pooling the labeled points of every frame in
[t - prior_scan, t + past_scan] (clipped to the sequence), each moved into the
LiDAR frame of t through the calib/poses chain, and binning the pooled cloud
into the grid. A voxel takes the most frequent label among its points, the
smallest id on ties; voxels without points stay 0.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .constants import EMPTY_LABEL, GRID_ORIGIN, VOXEL_DIMS, VOXEL_SIZE
from .errors import FrameIndexError, UnlabeledInputError
from .kitti_io import CalibData, PointCloudFrame, PoseSequence, frame_name
from .logging_utils import get_logger, record_stage
from .transforms import apply, lidar_to_lidar

_LABEL_BITS = 16


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid geometry; origin is the LiDAR-frame minimum corner in meters."""

    dims: Tuple[int, int, int] = VOXEL_DIMS
    voxel_size: float = VOXEL_SIZE
    origin: Tuple[float, float, float] = GRID_ORIGIN

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"grid dims must be three positive integers, got {self.dims}")
        if len(origin) != 3:
            raise ValueError(f"grid origin must have three coordinates, got {self.origin}")
        if not self.voxel_size > 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def extent(self) -> Tuple[float, float, float]:
        return tuple(d * self.voxel_size for d in self.dims)

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))

    def coarsened(self, factor: int) -> "GridSpec":
        """Same extent with voxels factor times larger per axis."""
        return GridSpec(tuple(d // factor for d in self.dims), self.voxel_size * factor, self.origin)

    def bin_points(self, xyz) -> Tuple[np.ndarray, np.ndarray]:
        """
        Bin points with floor((p - origin) / voxel_size) on half-open cells.

        Returns:
            (linear indices of the points inside the grid, inside mask over all points)
        """
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        cells = np.floor((xyz - np.asarray(self.origin)) / self.voxel_size)
        dims = np.asarray(self.dims)
        inside = np.all((cells >= 0) & (cells < dims), axis=1)
        c = cells[inside].astype(np.int64)
        linear = (c[:, 0] * dims[1] + c[:, 1]) * dims[2] + c[:, 2]
        return linear, inside


@dataclass
class VoxelStats:
    """Counters for one finalized grid."""

    total_points: int = 0
    binned_points: int = 0
    discarded_points: int = 0
    frames: Tuple[int, ...] = ()
    truncated: bool = False

    def merge(self, other: "VoxelStats") -> "VoxelStats":
        return VoxelStats(
            self.total_points + other.total_points,
            self.binned_points + other.binned_points,
            self.discarded_points + other.discarded_points,
            self.frames + other.frames,
            self.truncated or other.truncated,
        )


@dataclass(eq=False)
class SemanticVoxelGrid:
    """Dense label grid: 0 empty, 255 invalid, 1..254 real classes."""

    spec: GridSpec
    labels: np.ndarray
    stats: Optional[VoxelStats] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint16)
        if self.labels.shape != self.spec.dims:
            raise ValueError(f"labels shape {self.labels.shape} does not match dims {self.spec.dims}")

    @classmethod
    def empty(cls, spec: GridSpec) -> "SemanticVoxelGrid":
        return cls(spec, np.zeros(spec.dims, dtype=np.uint16))

    def nonempty_count(self) -> int:
        return int(np.count_nonzero(self.labels != EMPTY_LABEL))

    def equals(self, other: "SemanticVoxelGrid") -> bool:
        return self.spec == other.spec and np.array_equal(self.labels, other.labels)


class LabelHistogram:
    """
    Per-voxel label counts accumulated from (voxel, label) pairs.

    Each worker owns one; merge() concatenates partial counts and finalize()
    reduces them, so the result does not depend on insertion or merge order.
    """

    def __init__(self):
        self._keys: List[np.ndarray] = []
        self._counts: List[np.ndarray] = []

    def add(self, voxels, labels):
        voxels = np.asarray(voxels, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if len(voxels) == 0:
            return
        keys, counts = np.unique((voxels << _LABEL_BITS) | labels, return_counts=True)
        self._keys.append(keys)
        self._counts.append(counts.astype(np.int64))

    def merge(self, other: "LabelHistogram") -> "LabelHistogram":
        self._keys.extend(other._keys)
        self._counts.extend(other._counts)
        return self

    def totals(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(voxel, label, count) triples with unique (voxel, label) pairs."""
        if not self._keys:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        keys, inverse = np.unique(np.concatenate(self._keys), return_inverse=True)
        counts = np.zeros(len(keys), dtype=np.int64)
        np.add.at(counts, inverse.reshape(-1), np.concatenate(self._counts))
        return keys >> _LABEL_BITS, keys & ((1 << _LABEL_BITS) - 1), counts

    def finalize(self, spec: GridSpec) -> np.ndarray:
        """Argmax label per voxel (ties -> smallest id); voxels without counts stay 0."""
        voxels, labels, counts = self.totals()
        out = np.zeros(spec.num_voxels, dtype=np.uint16)
        if len(voxels):
            order = np.lexsort((labels, -counts, voxels))
            v, lab = voxels[order], labels[order]
            first = np.ones(len(v), dtype=bool)
            first[1:] = v[1:] != v[:-1]
            out[v[first]] = lab[first]
        return out.reshape(spec.dims)


def _require_labels(frame: PointCloudFrame):
    if len(frame.labels) != len(frame.points):
        raise UnlabeledInputError(len(frame.points), len(frame.labels))


def _accumulate(xyz, labels, spec: GridSpec) -> Tuple[LabelHistogram, VoxelStats]:
    hist = LabelHistogram()
    linear, inside = spec.bin_points(xyz)
    hist.add(linear, np.asarray(labels)[inside])
    n = len(inside)
    binned = int(np.count_nonzero(inside))
    return hist, VoxelStats(n, binned, n - binned)


def voxelize(frame: PointCloudFrame, spec: GridSpec = GridSpec()) -> SemanticVoxelGrid:
    """Voxelize a single labeled frame in its own LiDAR coordinates."""
    _require_labels(frame)
    hist, stats = _accumulate(frame.xyz, frame.labels, spec)
    return SemanticVoxelGrid(spec, hist.finalize(spec), stats)


@dataclass(frozen=True)
class FusionConfig:
    prior_scan: int = 0
    past_scan: int = 0

    def __post_init__(self):
        if self.prior_scan < 0 or self.past_scan < 0:
            raise ValueError(f"prior_scan and past_scan must be >= 0, got ({self.prior_scan}, {self.past_scan})")

    def window(self, t: int, num_frames: int) -> Tuple[int, int, bool]:
        """Inclusive [first, last] frame range around t and whether it was clipped."""
        first = t - self.prior_scan
        last = t + self.past_scan
        truncated = first < 0 or last > num_frames - 1
        return max(0, first), min(num_frames - 1, last), truncated


class FrameSource(Protocol):
    """What fuse() needs from a sequence."""

    calib: CalibData
    poses: PoseSequence

    def load_frame(self, index: int) -> PointCloudFrame: ...


@dataclass
class InMemorySequence:
    """Frames, calib and poses held in memory."""

    frames: Sequence[PointCloudFrame]
    calib: CalibData
    poses: PoseSequence

    def __len__(self) -> int:
        return len(self.poses)

    def load_frame(self, index: int) -> PointCloudFrame:
        if not 0 <= index < len(self.frames):
            raise FrameIndexError(index, len(self.frames))
        return self.frames[index]


def _frame_contribution(i: int, t: int, sequence: FrameSource, spec: GridSpec) -> Tuple[LabelHistogram, VoxelStats]:
    frame = sequence.load_frame(i)
    _require_labels(frame)
    if i == t:
        xyz = frame.xyz
    else:
        xyz = apply(lidar_to_lidar(i, t, sequence.calib, sequence.poses), frame.xyz)
    hist, stats = _accumulate(xyz, frame.labels, spec)
    stats.frames = (i,)
    return hist, stats


def fuse(
    t: int,
    sequence: FrameSource,
    config: FusionConfig = FusionConfig(),
    spec: GridSpec = GridSpec(),
    threads: int = 1,
) -> SemanticVoxelGrid:
    """
    Densify frame t by pooling the labeled points of its fusion window.

    Args:
        t: Target frame index
        sequence: Frame source (SequenceDir or InMemorySequence)
        config: Window sizes
        spec: Grid geometry
        threads: Worker cap for loading and transforming window frames

    Returns:
        The finalized grid; grid.stats records the window and point counters.
    """
    n = len(sequence.poses)
    if not 0 <= t < n:
        raise FrameIndexError(t, n)
    first, last, truncated = config.window(t, n)
    window = list(range(first, last + 1))
    if truncated:
        record_stage("fuse", frame_name(t), "truncated", f"window clipped to [{first}, {last}]")

    def work(i):
        return _frame_contribution(i, t, sequence, spec)

    if threads > 1 and len(window) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, window))
    else:
        parts = [work(i) for i in window]

    hist = LabelHistogram()
    stats = VoxelStats(truncated=truncated)
    for part_hist, part_stats in parts:
        hist.merge(part_hist)
        stats = stats.merge(part_stats)
    get_logger().debug(
        f"fuse {frame_name(t)}: frames {window[0]}..{window[-1]}, "
        f"{stats.binned_points}/{stats.total_points} points binned"
    )
    return SemanticVoxelGrid(spec, hist.finalize(spec), stats)


def fuse_sequence(
    sequence: FrameSource,
    targets: Iterable[int],
    config: FusionConfig = FusionConfig(),
    spec: GridSpec = GridSpec(),
    threads: int = 1,
) -> Iterator[Tuple[int, Optional[SemanticVoxelGrid], Optional[Exception]]]:
    """Fuse each target frame in turn, yielding (t, grid, None) or (t, None, error)."""
    for t in targets:
        try:
            yield t, fuse(t, sequence, config, spec, threads), None
        except (ValueError, IndexError, OSError) as e:
            yield t, None, e
