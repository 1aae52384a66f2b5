"""Exception types raised by the toolkit.

Every error carries the fields a caller needs to report it (path, line,
frame, dims) so the CLI can log one precise line per failure.
"""
from typing import Iterable, Optional, Sequence


class OccgenError(Exception):
    """Base class for all toolkit errors."""


class MalformedFileError(OccgenError, ValueError):
    """Binary file whose length does not fit its record layout."""

    def __init__(self, path, byte_count: int, expected: str):
        self.path = str(path)
        self.byte_count = byte_count
        super().__init__(f"{self.path}: malformed file of {byte_count} bytes ({expected})")


class ParseError(OccgenError, ValueError):
    """Text file that could not be parsed."""

    def __init__(self, path, line_number: Optional[int], message: str):
        self.path = str(path)
        self.line_number = line_number
        where = f"{self.path}:{line_number}" if line_number is not None else self.path
        super().__init__(f"{where}: {message}")


class IncompleteCalibError(ParseError):
    """Calibration file missing one or more required keys."""

    def __init__(self, path, missing: Iterable[str]):
        self.missing = sorted(missing)
        super().__init__(path, None, f"incomplete calib, missing {', '.join(self.missing)}")


class SceneSpecError(ParseError):
    """Scene or trajectory description that could not be parsed or validated."""


class InvalidRotationError(OccgenError, ValueError):
    """Rotation block that is not orthonormal (or not proper)."""

    def __init__(self, deviation: float, determinant: Optional[float] = None):
        self.deviation = deviation
        self.determinant = determinant
        msg = f"invalid rotation: |R R^T - I| = {deviation:.3e}"
        if determinant is not None:
            msg += f", det = {determinant:.6f}"
        super().__init__(msg)


class BehindCameraError(OccgenError, ValueError):
    """Point with non-positive camera depth."""

    def __init__(self, depth: float):
        self.depth = depth
        super().__init__(f"point is behind the camera (z = {depth})")


class FrameIndexError(OccgenError, IndexError):
    def __init__(self, index: int, length: int):
        self.index = index
        self.length = length
        super().__init__(f"frame index {index} out of range for sequence of length {length}")


class MissingArtifactError(OccgenError, FileNotFoundError):
    """A frame's file (velodyne, labels, voxels) is absent."""

    def __init__(self, frame: int, artifact: str, path=None):
        self.frame = frame
        self.artifact = artifact
        self.path = str(path) if path is not None else None
        msg = f"frame {frame}: missing {artifact}"
        if self.path:
            msg += f" ({self.path})"
        super().__init__(msg)


class UnlabeledInputError(OccgenError, ValueError):
    def __init__(self, n_points: int, n_labels: int):
        self.n_points = n_points
        self.n_labels = n_labels
        super().__init__(f"frame has {n_points} points but {n_labels} labels")


class CapacityError(OccgenError, ValueError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} distinct classes exceed the capacity of {limit}")


class DimensionError(OccgenError, ValueError):
    def __init__(self, dims: Sequence[int], message: str = "every dimension must be even"):
        self.dims = tuple(int(d) for d in dims)
        super().__init__(f"grid dims {self.dims}: {message}")


class ShapeError(OccgenError, ValueError):
    def __init__(self, pred_dims: Sequence[int], gt_dims: Sequence[int]):
        self.pred_dims = tuple(int(d) for d in pred_dims)
        self.gt_dims = tuple(int(d) for d in gt_dims)
        super().__init__(f"shape mismatch: prediction {self.pred_dims} vs ground truth {self.gt_dims}")


class UndefinedMetricError(OccgenError, ArithmeticError):
    """Ratio with a zero denominator; distinct from a legitimate 0.0."""

    def __init__(self, metric: str, label=None):
        self.metric = metric
        self.label = label
        target = f" for class {label}" if label is not None else ""
        super().__init__(f"{metric} undefined{target}: zero denominator")


class ConfigError(OccgenError, ValueError):
    pass


class ValidationError(OccgenError, ValueError):
    pass


class RemapError(OccgenError, ValueError):
    """Ids that do not fit the label space a remap works on."""

    def __init__(self, ids: Iterable[int], limit: int):
        self.ids = list(dict.fromkeys(ids))
        self.limit = limit
        shown = ", ".join(str(i) for i in self.ids[:5])
        more = f" (+{len(self.ids) - 5} more)" if len(self.ids) > 5 else ""
        super().__init__(f"ids outside [0, {limit}]: {shown}{more}")
