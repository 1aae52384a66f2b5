"""Shared numeric constants: tolerances, label conventions and default geometry."""

# Tolerances
ORTHONORMAL_TOL = 1e-6
ROUND_TRIP_TOL = 1e-9
IDENTITY_POSE_TOL = 1e-9

# Label conventions
EMPTY_LABEL = 0
INVALID_LABEL = 255
FREE_LABELS = (EMPTY_LABEL, INVALID_LABEL)
MAX_REAL_CLASSES = 254

# Second-stage grid
VOXEL_DIMS = (256, 256, 32)
VOXEL_SIZE = 0.2
GRID_ORIGIN = (0.0, -25.6, -2.0)

# First-stage grid
OCCUPANCY_DIMS = (128, 128, 16)
DOWNSAMPLE_FACTOR = 2
DEFAULT_THRESHOLD = 8

# Record sizes in bytes
POINT_RECORD_BYTES = 16
LABEL_RECORD_BYTES = 4
VOXEL_RECORD_BYTES = 2

# Text number formatting (17 significant digits round-trips float64)
FLOAT_FORMAT = ".17g"

# Sequence directory layout
VELODYNE_DIR = "velodyne"
LABELS_DIR = "labels"
VOXELS_DIR = "voxels"
CALIB_FILE = "calib.txt"
POSES_FILE = "poses.txt"
FRAME_ID_WIDTH = 6
