"""Semantic id remapping (simulator ids -> toolkit ids) and label compaction."""
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .constants import EMPTY_LABEL, INVALID_LABEL, MAX_REAL_CLASSES
from .errors import CapacityError, ParseError, RemapError
from .kitti_io import read_text
from .logging_utils import get_logger

# Toolkit class ids written to labels/ and voxels/
WALL = 1
ROAD = 2
TRAFFIC_LINE = 3
TRAFFIC_LINE_EDGE = 4
OTHER_STABLE = 5

CLASS_NAMES = {
    EMPTY_LABEL: "empty",
    WALL: "wall",
    ROAD: "road",
    TRAFFIC_LINE: "traffic-line",
    TRAFFIC_LINE_EDGE: "traffic-line-edge",
    OTHER_STABLE: "other-stable-feature",
    INVALID_LABEL: "invalid",
}

DEFAULT_TABLE_RESOURCE = "default_remap.txt"
_LABEL_SPACE = 1 << 16
_RECORD_MAX = (1 << 32) - 1


@dataclass(frozen=True)
class RemapTable:
    """
    Source id -> target id map. Unmapped sources go to default_target; a
    default_target of None passes them through unchanged. 0 and 255 are
    always fixed points.
    """

    entries: Mapping[int, int] = field(default_factory=dict)
    default_target: Optional[int] = EMPTY_LABEL

    def __post_init__(self):
        entries = {int(k): int(v) for k, v in dict(self.entries).items()}
        for fixed in (EMPTY_LABEL, INVALID_LABEL):
            if entries.get(fixed, fixed) != fixed:
                raise ValueError(f"label {fixed} must map to itself")
            entries[fixed] = fixed
        for source, target in entries.items():
            if not 0 <= source < _LABEL_SPACE:
                raise ValueError(f"source id {source} outside the 16-bit label range")
            if source not in (EMPTY_LABEL, INVALID_LABEL) and not 0 <= target <= INVALID_LABEL:
                raise ValueError(f"target id {target} for source {source} outside [0, 255]")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def identity(cls) -> "RemapTable":
        return cls({}, None)

    @classmethod
    def default(cls) -> "RemapTable":
        """The shipped table for the built-in parking-lot scene."""
        text = resources.files("src_occgen").joinpath("data").joinpath(DEFAULT_TABLE_RESOURCE).read_text(encoding="utf-8")
        return cls.parse(text, DEFAULT_TABLE_RESOURCE)

    @classmethod
    def load(cls, path) -> "RemapTable":
        if str(path) == "default":
            return cls.default()
        return cls.parse(read_text(path), str(path))

    @classmethod
    def parse(cls, text: str, source: str = "<remap>") -> "RemapTable":
        """
        Parse "source target" integer pairs, one per line. A line
        "default <target>" (or "default keep") sets the unmapped behavior.
        """
        entries: Dict[int, int] = {}
        default_target: Optional[int] = EMPTY_LABEL
        for lineno, raw in enumerate(text.splitlines(), start=1):
            tokens = raw.split("#", 1)[0].split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise ParseError(source, lineno, f"expected 'source target', got {raw.strip()!r}")
            if tokens[0] == "default":
                default_target = None if tokens[1] == "keep" else _parse_id(tokens[1], source, lineno)
                continue
            src, dst = _parse_id(tokens[0], source, lineno), _parse_id(tokens[1], source, lineno)
            entries[src] = dst
        try:
            return cls(entries, default_target)
        except ValueError as e:
            raise ParseError(source, None, str(e)) from e

    def save(self, path):
        lines = ["# source target"]
        lines.append(f"default {'keep' if self.default_target is None else self.default_target}")
        for src in sorted(self.entries):
            if src in (EMPTY_LABEL, INVALID_LABEL):
                continue
            lines.append(f"{src} {self.entries[src]}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def lookup(self) -> Tuple[np.ndarray, np.ndarray]:
        """(target per source id, mask of ids resolved by default_target)."""
        ids = np.arange(_LABEL_SPACE, dtype=np.uint32)
        if self.default_target is None:
            table = ids.astype(np.uint16)
        else:
            table = np.full(_LABEL_SPACE, self.default_target, dtype=np.uint16)
        defaulted = np.ones(_LABEL_SPACE, dtype=bool) if self.default_target is not None else np.zeros(_LABEL_SPACE, dtype=bool)
        for src, dst in self.entries.items():
            table[src] = dst
            defaulted[src] = False
        return table, defaulted


def _parse_id(token: str, source: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(source, lineno, f"non-integer id {token!r}") from None


def _checked_ids(values, limit: int, dtype) -> np.ndarray:
    """Cast ids to dtype, raising RemapError for anything outside [0, limit] or non-integral."""
    raw = np.asarray(values)
    if raw.dtype == dtype:
        return raw
    if raw.dtype.kind in "fiu" and raw.size:
        bad = (raw < 0) | (raw > limit) | (raw != np.floor(raw))
        if np.any(bad):
            raise RemapError(raw[bad][:64].tolist(), limit)
    return raw.astype(dtype)


def remap(labels, table: RemapTable, counter: Optional[Counter] = None) -> np.ndarray:
    """
    Replace each label according to table.

    Args:
        labels: Array-like of semantic ids
        table: RemapTable to apply
        counter: Optional Counter updated with {source id: substitutions} for
            ids resolved through the default target

    Returns:
        uint16 array of remapped ids, same shape as labels.
    """
    labels = _checked_ids(labels, _LABEL_SPACE - 1, np.uint16)
    lut, defaulted = table.lookup()
    out = lut[labels]
    hits = defaulted[labels]
    if np.any(hits):
        ids, counts = np.unique(labels[hits], return_counts=True)
        if counter is not None:
            counter.update({int(i): int(c) for i, c in zip(ids, counts)})
        get_logger().debug(f"remap: {int(hits.sum())} labels took the default target {table.default_target}")
    return out


def remap_label_records(records, table: RemapTable, counter: Optional[Counter] = None) -> np.ndarray:
    """Remap the semantic half of uint32 label records, keeping instance bits."""
    records = _checked_ids(records, _RECORD_MAX, np.uint32)
    semantic = remap((records & 0xFFFF).astype(np.uint16), table, counter)
    return (records & np.uint32(0xFFFF0000)) | semantic.astype(np.uint32)


def _labels_of(grid) -> np.ndarray:
    return np.asarray(getattr(grid, "labels", grid))


def _with_labels(grid, labels: np.ndarray):
    if hasattr(grid, "labels"):
        return replace(grid, labels=labels)
    return labels


def compact(grid):
    """
    Renumber the distinct real classes of a grid to 1..K in ascending source order.

    Returns:
        (compacted grid, forward {source: compact}, inverse {compact: source});
        the grid is returned as the same type it was given (array or SemanticVoxelGrid).
    """
    labels = _labels_of(grid)
    present = np.unique(labels)
    real = [int(v) for v in present if v not in (EMPTY_LABEL, INVALID_LABEL)]
    if len(real) > MAX_REAL_CLASSES:
        raise CapacityError(len(real), MAX_REAL_CLASSES)
    forward = {src: k for k, src in enumerate(real, start=1)}
    inverse = {k: src for src, k in forward.items()}
    lut = np.arange(_LABEL_SPACE, dtype=np.uint16)
    for src, k in forward.items():
        lut[src] = k
    return _with_labels(grid, lut[labels.astype(np.uint16)]), forward, inverse


def decompact(grid, inverse: Mapping[int, int]):
    """Undo compact() with its inverse map."""
    labels = _labels_of(grid)
    lut = np.arange(_LABEL_SPACE, dtype=np.uint16)
    for k, src in inverse.items():
        lut[int(k)] = int(src)
    return _with_labels(grid, lut[labels.astype(np.uint16)])
