"""Evaluation of predicted grids against ground truth: IoU, mIoU, precision, recall.

Counts are accumulated voxelwise. Binary occupancy treats every label outside
{0, 255} as occupied, so one pair of grids yields both the class-agnostic
scene-completion IoU and the per-class semantic mIoU. Ratios with a zero
denominator raise UndefinedMetricError rather than returning 0.0.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .constants import EMPTY_LABEL, FREE_LABELS, INVALID_LABEL
from .errors import ShapeError, UndefinedMetricError

BINARY = "binary"
POLICIES = ("exclude", "zero")

ClassKey = Union[int, str]


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass
class ConfusionCounts:
    """Per-class and binary-occupancy tp/fp/fn; mergeable across frames with +."""

    per_class: Dict[int, Counts] = field(default_factory=dict)
    binary: Counts = field(default_factory=Counts)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        merged = dict(self.per_class)
        for k, c in other.per_class.items():
            merged[k] = merged.get(k, Counts()) + c
        return ConfusionCounts(merged, self.binary + other.binary)

    def counts(self, key: ClassKey) -> Counts:
        if key == BINARY:
            return self.binary
        return self.per_class.get(int(key), Counts())

    def classes(self, include_empty: bool = False) -> List[int]:
        """Classes seen in prediction or ground truth, minus 255 (and 0 unless asked)."""
        skip = {INVALID_LABEL} if include_empty else {EMPTY_LABEL, INVALID_LABEL}
        return sorted(k for k in self.per_class if k not in skip)


def _confusion_flat(pred: np.ndarray, gt: np.ndarray, ignore: np.ndarray) -> ConfusionCounts:
    keep = ~np.isin(gt, ignore)
    p = pred[keep].astype(np.int64)
    g = gt[keep].astype(np.int64)

    per_class: Dict[int, Counts] = {}
    if len(p):
        pairs, n = np.unique((p << 16) | g, return_counts=True)
        tp: Dict[int, int] = {}
        fp: Dict[int, int] = {}
        fn: Dict[int, int] = {}
        for key, count in zip(pairs.tolist(), n.tolist()):
            a, b = key >> 16, key & 0xFFFF
            if a == b:
                tp[a] = tp.get(a, 0) + count
            else:
                fp[a] = fp.get(a, 0) + count
                fn[b] = fn.get(b, 0) + count
        for k in sorted(set(tp) | set(fp) | set(fn)):
            per_class[k] = Counts(tp.get(k, 0), fp.get(k, 0), fn.get(k, 0))

    p_occ = ~np.isin(p, FREE_LABELS)
    g_occ = ~np.isin(g, FREE_LABELS)
    binary = Counts(
        int(np.count_nonzero(p_occ & g_occ)),
        int(np.count_nonzero(p_occ & ~g_occ)),
        int(np.count_nonzero(~p_occ & g_occ)),
    )
    return ConfusionCounts(per_class, binary)


def confusion(pred, gt, ignore: Iterable[int] = (INVALID_LABEL,), threads: int = 1) -> ConfusionCounts:
    """
    Voxelwise confusion counts between two label grids of identical dims.

    Args:
        pred: Predicted labels (array, SemanticVoxelGrid or OccupancyGrid)
        gt: Ground-truth labels, same dims
        ignore: Ground-truth ids whose voxels are excluded entirely
        threads: Split the voxel range over this many workers; totals are identical
    """
    pred = _as_labels(pred)
    gt = _as_labels(gt)
    if pred.shape != gt.shape:
        raise ShapeError(pred.shape, gt.shape)
    ignore = np.asarray(sorted(set(int(i) for i in ignore)), dtype=np.int64)
    p, g = pred.reshape(-1), gt.reshape(-1)
    if threads <= 1 or len(p) < 2 * threads:
        return _confusion_flat(p, g, ignore)
    bounds = np.linspace(0, len(p), threads + 1).astype(int)
    chunks = [(p[a:b], g[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _confusion_flat(c[0], c[1], ignore), chunks))
    total = ConfusionCounts()
    for part in parts:
        total = total + part
    return total


def _as_labels(grid) -> np.ndarray:
    if hasattr(grid, "labels"):
        return np.asarray(grid.labels)
    if hasattr(grid, "cells"):
        return np.asarray(grid.cells)
    return np.asarray(grid)


def iou(c: ConfusionCounts, key: ClassKey = BINARY) -> float:
    """tp / (fp + tp + fn) for a class id or BINARY."""
    k = c.counts(key)
    denom = k.fp + k.tp + k.fn
    if denom == 0:
        raise UndefinedMetricError("IoU", key)
    return k.tp / denom


def precision(c: ConfusionCounts, key: ClassKey = BINARY) -> float:
    k = c.counts(key)
    if k.tp + k.fp == 0:
        raise UndefinedMetricError("precision", key)
    return k.tp / (k.tp + k.fp)


def recall(c: ConfusionCounts, key: ClassKey = BINARY) -> float:
    k = c.counts(key)
    if k.tp + k.fn == 0:
        raise UndefinedMetricError("recall", key)
    return k.tp / (k.tp + k.fn)


@dataclass
class MeanIoU:
    value: float
    per_class: Dict[int, Optional[float]]
    excluded: List[int]


def miou(c: ConfusionCounts, classes: Sequence[int], policy: str = "exclude") -> MeanIoU:
    """
    Arithmetic mean of per-class IoU over classes.

    With policy "exclude" classes whose IoU is undefined are left out of the
    mean and listed in excluded; with "zero" they count as 0.0 (and are still
    listed). Raises UndefinedMetricError if no class is defined.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown undefined-metric policy {policy!r}, expected one of {POLICIES}")
    classes = [int(k) for k in classes]
    if not classes:
        raise ValueError("miou needs at least one class")
    per_class: Dict[int, Optional[float]] = {}
    excluded: List[int] = []
    for k in classes:
        try:
            per_class[k] = iou(c, k)
        except UndefinedMetricError:
            per_class[k] = None
            excluded.append(k)
    defined = [v for v in per_class.values() if v is not None]
    if not defined:
        raise UndefinedMetricError("mIoU")
    if policy == "zero":
        value = sum(defined) / len(classes)
    else:
        value = sum(defined) / len(defined)
    return MeanIoU(value, per_class, excluded)


def _maybe(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def summarize(
    c: ConfusionCounts,
    classes: Optional[Sequence[int]] = None,
    policy: str = "exclude",
    include_empty: bool = False,
) -> dict:
    """
    Machine-readable report:

        {"per_class": {"<id>": {"tp", "fp", "fn", "iou"}},
         "binary": {"tp", "fp", "fn", "iou", "precision", "recall"},
         "miou": float | null, "excluded_classes": [ids], "classes": [ids]}

    Undefined ratios are null.
    """
    if classes is None:
        classes = c.classes(include_empty)
    classes = [int(k) for k in classes]
    per_class = {}
    for k in classes:
        counts = c.counts(k)
        per_class[str(k)] = {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "iou": _maybe(iou, c, k)}
    b = c.binary
    mean: Optional[MeanIoU] = None
    if classes:
        try:
            mean = miou(c, classes, policy)
        except UndefinedMetricError:
            mean = None
    return {
        "per_class": per_class,
        "binary": {
            "tp": b.tp,
            "fp": b.fp,
            "fn": b.fn,
            "iou": _maybe(iou, c, BINARY),
            "precision": _maybe(precision, c, BINARY),
            "recall": _maybe(recall, c, BINARY),
        },
        "miou": mean.value if mean else None,
        "excluded_classes": mean.excluded if mean else list(classes),
        "classes": classes,
    }


REPORT_ROWS = (
    ("IoU", lambda s: s["binary"]["iou"]),
    ("Precision (P)", lambda s: s["binary"]["precision"]),
    ("Recall (R)", lambda s: s["binary"]["recall"]),
    ("mIoU", lambda s: s["miou"]),
)


def format_percent(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}"


def format_report_table(columns: Mapping[str, dict]) -> str:
    """Metric rows (IoU, P, R, mIoU) by one column per summary, as percentages."""
    names = list(columns)
    label_width = max(len(r[0]) for r in REPORT_ROWS)
    widths = [max(len(n), 6) for n in names]
    lines = [" | ".join(["Metric".ljust(label_width)] + [n.rjust(w) for n, w in zip(names, widths)])]
    lines.append("-+-".join(["-" * label_width] + ["-" * w for w in widths]))
    for label, pick in REPORT_ROWS:
        cells = [format_percent(pick(columns[n])).rjust(w) for n, w in zip(names, widths)]
        lines.append(" | ".join([label.ljust(label_width)] + cells))
    return "\n".join(lines)
