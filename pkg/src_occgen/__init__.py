"""Library modules for the occupancy ground-truth toolkit."""

from .config import config, Config, __version__
from .logging_utils import (
    setup_logger,
    get_logger,
    record_stage,
    get_error_count,
    reset_error_count,
)
from .kitti_io import (
    CalibData,
    PointCloudFrame,
    PoseSequence,
    SequenceDir,
    read_calib,
    read_labels,
    read_occupancy,
    read_point_cloud,
    read_poses,
    read_voxel_labels,
    validate_sequence,
)
from .transforms import RigidTransform, apply, lidar_to_lidar, project_to_image
from .semantics import RemapTable, compact, decompact, remap
from .voxel import FusionConfig, GridSpec, SemanticVoxelGrid, fuse, fuse_sequence, voxelize
from .downsample import DownsampleConfig, OccupancyGrid, downsample
from .metrics import ConfusionCounts, confusion, iou, miou, precision, recall, summarize
from .synthgen import LidarConfig, RigSpec, SceneSpec, Trajectory, builtin_parking_lot, generate_sequence, raycast_sweep

__all__ = [
    'config',
    'Config',
    '__version__',
    'setup_logger',
    'get_logger',
    'record_stage',
    'get_error_count',
    'reset_error_count',
    'CalibData',
    'PointCloudFrame',
    'PoseSequence',
    'SequenceDir',
    'read_calib',
    'read_labels',
    'read_occupancy',
    'read_point_cloud',
    'read_poses',
    'read_voxel_labels',
    'validate_sequence',
    'RigidTransform',
    'apply',
    'lidar_to_lidar',
    'project_to_image',
    'RemapTable',
    'compact',
    'decompact',
    'remap',
    'FusionConfig',
    'GridSpec',
    'SemanticVoxelGrid',
    'fuse',
    'fuse_sequence',
    'voxelize',
    'DownsampleConfig',
    'OccupancyGrid',
    'downsample',
    'ConfusionCounts',
    'confusion',
    'iou',
    'miou',
    'precision',
    'recall',
    'summarize',
    'LidarConfig',
    'RigSpec',
    'SceneSpec',
    'Trajectory',
    'builtin_parking_lot',
    'generate_sequence',
    'raycast_sweep',
]
