"""Command-line entry point: generate, fuse, downsample, remap, eval, export.

Every subcommand loads the layered configuration (defaults, --config file,
OCCGEN_* environment, then flags), logs one line per processed frame and
writes a manifest beside its outputs. The exit status is 0 iff no error was
logged during the run.
"""
import argparse
import json
import sys
from collections import Counter
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import kitti_io
from .config import Config
from .constants import DOWNSAMPLE_FACTOR
from .downsample import downsample
from .errors import OccgenError, ParseError
from .export import write_ply
from .kitti_io import SequenceDir, frame_name, read_text
from .logging_utils import get_error_count, get_logger, record_stage, reset_error_count, reset_logger, set_verbosity, setup_logger
from .manifest import Manifest
from .metrics import ConfusionCounts, confusion, format_report_table, summarize
from .semantics import RemapTable, remap_label_records
from .synthgen import (
    LidarConfig,
    RigSpec,
    builtin_parking_lot,
    generate_sequence,
    read_scene,
    read_trajectory,
    select_regions,
)
from .version import __version__
from .voxel import SemanticVoxelGrid, fuse_sequence

EXIT_OK = 0
EXIT_ERRORS = 1

FRAME_ERRORS = (OccgenError, OSError, ValueError, IndexError)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Configuration file (.json or key = value)")
    common.add_argument("--threads", type=int, help="Worker cap (default: THREADS)")
    common.add_argument("--seed", type=int, help="Random seed (default: SEED)")
    common.add_argument("--log-file", help="Also log to this file (rotated daily)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="occgen", description="Occupancy ground-truth toolkit for parking-lot scenes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="Ray-cast a synthetic sequence")
    p.add_argument("--scene", default="builtin", help="Scene file or 'builtin'")
    p.add_argument("--trajectory", help="Trajectory file (required with a scene file)")
    p.add_argument("--region", help="Built-in region id, or train | test | all")
    p.add_argument("--frames", type=int, help="Frames per built-in trajectory (default: FRAMES)")
    p.add_argument("--azimuth-steps", type=int, help="Override the LiDAR azimuth step count")
    p.add_argument("--remap-table", help="Remap table file, 'default' or 'none' (default: REMAP_TABLE)")
    p.add_argument("--out", required=True, help="Output sequence directory")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("fuse", parents=[common], help="Densify frames into voxels/NNNNNN.label")
    p.add_argument("--sequence", required=True, help="Sequence directory")
    p.add_argument("--first", type=int, help="First target frame (default 0)")
    p.add_argument("--last", type=int, help="Last target frame, inclusive (default: last frame)")
    p.add_argument("--prior-scan", type=int, help="Preceding frames fused (default: PRIOR_SCAN)")
    p.add_argument("--past-scan", type=int, help="Subsequent frames fused (default: PAST_SCAN)")
    p.add_argument("--out", help="Output directory (default: <sequence>/voxels)")
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("downsample", parents=[common], help="Reduce voxel labels to .occ occupancy")
    p.add_argument("--voxels", required=True, help="Directory of NNNNNN.label voxel grids")
    p.add_argument("--threshold", type=int, help="Free-count threshold 1..8 (default: DOWNSAMPLE_THRESHOLD)")
    p.add_argument("--out", help="Output directory (default: the input directory)")
    p.set_defaults(handler=cmd_downsample)

    p = sub.add_parser("remap", parents=[common], help="Remap a directory of point label files")
    p.add_argument("--labels", required=True, help="Directory of NNNNNN.label point labels")
    p.add_argument("--table", help="Remap table file or 'default' (default: REMAP_TABLE)")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_remap)

    p = sub.add_parser("eval", parents=[common], help="Score predicted grids against ground truth")
    p.add_argument("--gt", required=True, help="Ground-truth grid directory")
    p.add_argument("--pred", required=True, action="append", help="Prediction directory (repeatable)")
    p.add_argument("--classes", help="File listing the class ids for mIoU")
    p.add_argument("--suffix", choices=(".label", ".occ"), default=".label", help="Grid files to pair")
    p.add_argument("--report", help="JSON report path (default: <first pred>/eval_report.json)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("export", parents=[common], help="Write a grid as a colored PLY mesh")
    p.add_argument("--grid", required=True, help="Voxel .label or .occ file")
    p.add_argument("--out", required=True, help="Output .ply path")
    p.set_defaults(handler=cmd_export)
    return parser


def _load_config(args) -> Config:
    overrides = {
        "THREADS": args.threads,
        "SEED": args.seed,
        "LOG_FILE": args.log_file,
    }
    for flag, key in (
        ("frames", "FRAMES"),
        ("prior_scan", "PRIOR_SCAN"),
        ("past_scan", "PAST_SCAN"),
        ("threshold", "DOWNSAMPLE_THRESHOLD"),
        ("remap_table", "REMAP_TABLE"),
        ("table", "REMAP_TABLE"),
    ):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)
    region = getattr(args, "region", None)
    if region is not None and region.strip().isdigit():
        overrides["REGION"] = int(region)
    return Config(args.config, overrides)


def _write_manifest(manifest: Manifest, directory, cfg: Config):
    path = manifest.write(directory, f"{manifest.subcommand}_{cfg['MANIFEST_NAME']}")
    get_logger().info(f"manifest written to {path}")


@contextmanager
def _manifest_written(manifest: Manifest, directory, cfg: Config):
    """Write the manifest however the block exits; an escaping error marks it failed."""
    try:
        yield manifest
    except (Exception, KeyboardInterrupt) as e:
        manifest.fail(str(e) or type(e).__name__)
        raise
    finally:
        try:
            _write_manifest(manifest, directory, cfg)
        except OSError as e:
            record_stage("manifest", directory, "error", str(e))


def _remap_table(name: Optional[str]) -> Optional[RemapTable]:
    if name is None or str(name).lower() == "none":
        return None
    return RemapTable.load(name)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_generate(args, cfg: Config) -> None:
    out = Path(args.out)
    manifest = Manifest("generate", cfg)
    with _manifest_written(manifest, out, cfg):
        lidar = LidarConfig(azimuth_steps=args.azimuth_steps) if args.azimuth_steps else LidarConfig()
        rig = RigSpec()
        table = _remap_table(cfg["REMAP_TABLE"])

        if args.scene != "builtin":
            if not args.trajectory:
                raise OccgenError("--trajectory is required with a scene file")
            manifest.add_input(args.scene)
            manifest.add_input(args.trajectory)
            scene = read_scene(args.scene)
            trajectory = read_trajectory(args.trajectory)
            jobs = [(None, trajectory, out)]
        else:
            scene, trajectories = builtin_parking_lot(cfg["SEED"], cfg["FRAMES"])
            manifest.add_input("builtin")
            selector = args.region if args.region is not None else cfg["REGION"]
            regions = select_regions(selector)
            nested = isinstance(selector, str) and not selector.strip().isdigit()
            jobs = [(r, trajectories[r], out / f"{r:02d}" if nested else out) for r in regions]

        for region, trajectory, target in jobs:
            result = generate_sequence(scene, trajectory, rig, target, lidar, table, cfg["SEED"], cfg["THREADS"])
            manifest.add_output(target)
            prefix = "points" if region is None else f"points.{region:02d}"
            for i, n in enumerate(result.point_counts):
                manifest.set_counter(f"{prefix}.{frame_name(i)}", n)
            manifest.add_stats(f"{prefix}.stats", result.point_counts)
            for source_id in sorted(result.defaulted):
                manifest.set_counter(f"defaulted.{source_id}", result.defaulted[source_id])
            problems = kitti_io.validate_sequence(target)
            for problem in problems:
                record_stage("validate", target, "error", problem)


def cmd_fuse(args, cfg: Config) -> None:
    seq = SequenceDir(args.sequence)
    out = Path(args.out) if args.out else seq.voxels_dir
    manifest = Manifest("fuse", cfg)
    manifest.add_input(seq.root)
    manifest.add_output(out)

    with _manifest_written(manifest, out, cfg):
        try:
            n = len(seq.poses)
            seq.calib  # parsed and validated up front
        except FRAME_ERRORS as e:
            record_stage("fuse", seq.root, "error", str(e))
            manifest.fail(str(e))
            return
        out.mkdir(parents=True, exist_ok=True)
        first = args.first if args.first is not None else 0
        last = args.last if args.last is not None else n - 1
        targets = range(first, last + 1)

        ok = failed = truncated = 0
        spec = cfg.grid_spec()
        for t, grid, err in fuse_sequence(seq, targets, cfg.fusion(), spec, cfg["THREADS"]):
            if err is not None:
                failed += 1
                record_stage("fuse", frame_name(t), "error", str(err))
                continue
            kitti_io.write_voxel_labels(grid, out / f"{frame_name(t)}.label")
            ok += 1
            truncated += int(grid.stats.truncated)
            manifest.set_counter(f"nonempty.{frame_name(t)}", grid.nonempty_count())
            record_stage("fuse", frame_name(t), "ok", f"{grid.nonempty_count()} non-empty voxels")
        manifest.set_counter("frames_ok", ok)
        manifest.set_counter("frames_failed", failed)
        manifest.set_counter("frames_truncated", truncated)


def _grid_files(directory: Path, suffix: str) -> Dict[str, Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return {p.name: p for p in sorted(directory.iterdir()) if p.suffix == suffix and p.stem.isdigit()}


def cmd_downsample(args, cfg: Config) -> None:
    src = Path(args.voxels)
    out = Path(args.out) if args.out else src
    manifest = Manifest("downsample", cfg)
    manifest.add_input(src)
    manifest.add_output(out)

    with _manifest_written(manifest, out, cfg):
        files = _grid_files(src, ".label")
        out.mkdir(parents=True, exist_ok=True)
        spec = cfg.grid_spec()
        config = cfg.downsample()
        ok = failed = 0
        for name, path in files.items():
            try:
                grid = SemanticVoxelGrid(spec, kitti_io.read_voxel_labels(path, spec.dims))
                occ = downsample(grid, config)
                kitti_io.write_occupancy(occ, out / f"{path.stem}.occ")
            except FRAME_ERRORS as e:
                failed += 1
                record_stage("downsample", name, "error", str(e))
                continue
            ok += 1
            manifest.set_counter(f"occupied.{path.stem}", occ.occupied_count())
            record_stage("downsample", name, "ok", f"{occ.occupied_count()} occupied cells")
        manifest.set_counter("frames_ok", ok)
        manifest.set_counter("frames_failed", failed)


def cmd_remap(args, cfg: Config) -> None:
    src = Path(args.labels)
    out = Path(args.out)
    manifest = Manifest("remap", cfg)
    manifest.add_input(src)
    manifest.add_output(out)

    with _manifest_written(manifest, out, cfg):
        table = RemapTable.load(cfg["REMAP_TABLE"])
        files = _grid_files(src, ".label")
        out.mkdir(parents=True, exist_ok=True)
        defaulted: Counter = Counter()
        for name, path in files.items():
            try:
                records = kitti_io.read_label_records(path)
                kitti_io.write_label_records(remap_label_records(records, table, defaulted), out / name)
            except FRAME_ERRORS as e:
                record_stage("remap", name, "error", str(e))
                continue
            record_stage("remap", name, "ok", f"{len(records)} labels")
        for source_id in sorted(defaulted):
            manifest.set_counter(f"defaulted.{source_id}", defaulted[source_id])


def read_class_list(path) -> List[int]:
    """Class ids, one per line (first token); '#' starts a comment."""
    ids = []
    for lineno, raw in enumerate(read_text(path).splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        try:
            ids.append(int(tokens[0]))
        except ValueError:
            raise ParseError(path, lineno, f"non-integer class id {tokens[0]!r}") from None
    return ids


def _column_names(preds: Sequence[str]) -> List[str]:
    names = [Path(p).name or str(p) for p in preds]
    if len(set(names)) != len(names):
        names = [f"{k}:{n}" for k, n in enumerate(names)]
    return names


def cmd_eval(args, cfg: Config) -> None:
    gt_dir = Path(args.gt)
    report = Path(args.report) if args.report else Path(args.pred[0]) / "eval_report.json"
    manifest = Manifest("eval", cfg)
    manifest.add_input(gt_dir)

    with _manifest_written(manifest, report.parent, cfg):
        spec = cfg.grid_spec()
        dims = spec.dims if args.suffix == ".label" else spec.coarsened(DOWNSAMPLE_FACTOR).dims
        reader = kitti_io.read_voxel_labels if args.suffix == ".label" else kitti_io.read_occupancy
        classes = read_class_list(args.classes) if args.classes else None
        ignore = cfg["IGNORE_LABELS"]

        gt_files = _grid_files(gt_dir, args.suffix)
        if not gt_files:
            record_stage("eval", gt_dir, "error", f"no {args.suffix} grids found")

        columns: Dict[str, dict] = {}
        for name, pred in zip(_column_names(args.pred), args.pred):
            manifest.add_input(pred)
            pred_files = _grid_files(Path(pred), args.suffix)
            for missing in sorted(set(gt_files) - set(pred_files)):
                record_stage("eval", f"{name}/{missing}", "error", "missing from prediction")
            for extra in sorted(set(pred_files) - set(gt_files)):
                record_stage("eval", f"{name}/{extra}", "error", "not in ground truth")

            total = ConfusionCounts()
            frames = 0
            for fname in sorted(set(gt_files) & set(pred_files)):
                try:
                    counts = confusion(
                        reader(pred_files[fname], dims), reader(gt_files[fname], dims), ignore, cfg["THREADS"]
                    )
                except FRAME_ERRORS as e:
                    record_stage("eval", f"{name}/{fname}", "error", str(e))
                    continue
                total = total + counts
                frames += 1
            summary = summarize(total, classes, cfg["MIOU_UNDEFINED_POLICY"], cfg["MIOU_INCLUDE_EMPTY"])
            summary["frames"] = frames
            columns[name] = summary
            manifest.set_counter(f"frames.{name}", frames)

        print(format_report_table(columns))
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(json.dumps(columns, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest.add_output(report)


def cmd_export(args, cfg: Config) -> None:
    grid_path = Path(args.grid)
    out = Path(args.out)
    manifest = Manifest("export", cfg)
    manifest.add_input(grid_path)

    with _manifest_written(manifest, out.parent, cfg):
        spec = cfg.grid_spec()
        occupancy = grid_path.suffix == ".occ"
        if occupancy:
            spec = spec.coarsened(DOWNSAMPLE_FACTOR)
            labels = kitti_io.read_occupancy(grid_path, spec.dims)
        else:
            labels = kitti_io.read_voxel_labels(grid_path, spec.dims)
        out.parent.mkdir(parents=True, exist_ok=True)
        vertices, faces = write_ply(out, labels, spec, occupancy)
        record_stage("export", grid_path.name, "ok", f"{vertices} vertices, {faces} faces")
        manifest.add_output(out)
        manifest.set_counter("vertices", vertices)
        manifest.set_counter("faces", faces)


# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    reset_logger()
    try:
        cfg = _load_config(args)
    except OccgenError as e:
        setup_logger()
        get_logger().error(f"configuration error: {e}")
        return EXIT_ERRORS
    setup_logger(cfg["LOG_FILE"], cfg["LOG_LEVEL"])
    set_verbosity(args.verbose)
    reset_error_count()

    log = get_logger()
    log.debug(f"occgen {__version__} {args.command} (config hash {cfg.hash()[:12]})")
    try:
        args.handler(args, cfg)
    except FRAME_ERRORS as e:
        log.error(f"{args.command} failed: {e}")
    except KeyboardInterrupt:
        log.error("interrupted")

    errors = get_error_count()
    if errors:
        log.warning(f"{args.command} finished with {errors} error(s)")
        return EXIT_ERRORS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
