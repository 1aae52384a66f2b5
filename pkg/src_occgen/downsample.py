"""First-stage ground truth: 2x reduction of a semantic grid to class-agnostic occupancy.

Each output cell covers a 2x2x2 block of source voxels. With c the number of
block voxels labeled 0 or 255, the cell is occupied iff c < threshold. The
rule only tests membership in {0, 255}, so it gives the same result before or
after label compaction.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .constants import DEFAULT_THRESHOLD, DOWNSAMPLE_FACTOR, FREE_LABELS
from .errors import DimensionError

BLOCK_VOLUME = DOWNSAMPLE_FACTOR ** 3


@dataclass(frozen=True)
class DownsampleConfig:
    threshold: int = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 1 <= int(self.threshold) <= BLOCK_VOLUME:
            raise ValueError(f"threshold must be in [1, {BLOCK_VOLUME}], got {self.threshold}")


@dataclass(eq=False)
class OccupancyGrid:
    """Binary grid, 1 = occupied, 0 = free; dims are half the source dims."""

    cells: np.ndarray
    spec: Optional[object] = None  # GridSpec of the coarse grid, when known

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.cells.shape)

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))


def free_counts(labels) -> np.ndarray:
    """Per 2x2x2 block, how many source voxels are 0 or 255."""
    labels = np.asarray(labels)
    if labels.ndim != 3 or any(d % DOWNSAMPLE_FACTOR for d in labels.shape):
        raise DimensionError(labels.shape)
    nx, ny, nz = (d // DOWNSAMPLE_FACTOR for d in labels.shape)
    free = np.isin(labels, FREE_LABELS)
    f = DOWNSAMPLE_FACTOR
    return free.reshape(nx, f, ny, f, nz, f).sum(axis=(1, 3, 5))


def downsample_labels(labels, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Occupancy cells (uint8 0/1) for a raw label array with even dims."""
    DownsampleConfig(threshold)
    return (free_counts(labels) < threshold).astype(np.uint8)


def downsample(grid, config: DownsampleConfig = DownsampleConfig()) -> OccupancyGrid:
    """
    Reduce a SemanticVoxelGrid (or raw label array) to an OccupancyGrid.

    Raises:
        DimensionError: if any source dimension is odd.
    """
    labels = getattr(grid, "labels", grid)
    spec = getattr(grid, "spec", None)
    cells = downsample_labels(labels, config.threshold)
    coarse = spec.coarsened(DOWNSAMPLE_FACTOR) if spec is not None else None
    return OccupancyGrid(cells, coarse)
