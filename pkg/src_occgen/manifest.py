"""Run manifests: a deterministic "key = value" record written beside every output."""
import hashlib
import json
import math
import os
import statistics
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .errors import ParseError
from .kitti_io import read_text
from .version import __version__

TOOL_NAME = "occgen"
HASH_KEY = "content_hash"


def compute_basic_stats(values: Sequence[float]) -> Dict[str, Optional[float]]:
    """Return simple stats: count, min, avg, median, p95, max (or None for empty)."""
    if not values:
        return {"count": 0, "min": None, "avg": None, "median": None, "p95": None, "max": None}
    vals = sorted(values)
    count = len(vals)
    # p95 (ceiling-based index keeps high-tail values for small samples)
    idx = min(count - 1, max(0, math.ceil(0.95 * count) - 1))
    return {
        "count": count,
        "min": vals[0],
        "avg": sum(vals) / count,
        "median": statistics.median(vals),
        "p95": vals[idx],
        "max": vals[-1],
    }


def _format_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, os.PathLike):
        return os.fspath(value)
    return json.dumps(value, sort_keys=True)


class Manifest:
    """
    Collects what a run read, how it was configured and what it counted.

    Entries keep insertion order except config values, which are sorted.
    No timestamps are recorded, so identical runs give identical files.
    """

    def __init__(self, subcommand: str, config=None):
        self.subcommand = subcommand
        self.config = config
        self.inputs: List[str] = []
        self.outputs: List[str] = []
        self.counters: List[Tuple[str, Any]] = []
        self.status = "ok"
        self.error: Optional[str] = None

    def add_input(self, path):
        self.inputs.append(os.fspath(path))

    def add_output(self, path):
        self.outputs.append(os.fspath(path))

    def set_counter(self, name: str, value: Any):
        self.counters = [(k, v) for k, v in self.counters if k != name]
        self.counters.append((name, value))

    def add_stats(self, name: str, values: Sequence[float]):
        for key, value in compute_basic_stats(list(values)).items():
            self.set_counter(f"{name}.{key}", value)

    def fail(self, reason: str):
        """Mark the run as aborted; the manifest still lists what was done before."""
        self.status = "failed"
        self.error = " ".join(reason.split()) or "unknown error"

    def entries(self) -> List[Tuple[str, str]]:
        items: List[Tuple[str, str]] = [
            ("tool", TOOL_NAME),
            ("version", __version__),
            ("subcommand", self.subcommand),
        ]
        if self.config is not None:
            items.append(("config_hash", self.config.hash()))
            items += [(f"config.{k}", _format_value(v)) for k, v in self.config.effective_items()]
        items += [(f"input.{n}", p) for n, p in enumerate(self.inputs)]
        items += [(f"output.{n}", p) for n, p in enumerate(self.outputs)]
        items.append(("status", self.status))
        if self.error is not None:
            items.append(("error", self.error))
        items += [(f"counter.{k}", _format_value(v)) for k, v in self.counters]
        return items

    def body(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.entries())

    def text(self) -> str:
        body = self.body()
        return body + f"{HASH_KEY} = {content_hash(body)}\n"

    def write(self, directory, name: str = "manifest.txt") -> Path:
        path = Path(directory) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.text())
        return path


def content_hash(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def read_manifest(path) -> Dict[str, str]:
    """Parse a manifest into an ordered dict of raw string values."""
    result: Dict[str, str] = {}
    for lineno, raw in enumerate(read_text(path).splitlines(), start=1):
        if not raw.strip():
            continue
        if " = " not in raw:
            raise ParseError(path, lineno, "expected 'key = value'")
        key, value = raw.split(" = ", 1)
        result[key] = value
    return result


def verify_manifest(path) -> bool:
    """True if the trailing content_hash matches the lines above it."""
    text = read_text(path)
    lines = text.splitlines(keepends=True)
    if not lines or not lines[-1].startswith(f"{HASH_KEY} = "):
        return False
    body = "".join(lines[:-1])
    return lines[-1].strip().split(" = ", 1)[1] == content_hash(body)
