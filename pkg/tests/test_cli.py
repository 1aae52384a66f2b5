"""End-to-end tests for the occgen command line."""
import io
import json
import shutil
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

import src_occgen.logging_utils as logging_utils
from src_occgen.cli import EXIT_ERRORS, EXIT_OK, main, read_class_list
from src_occgen.errors import ParseError
from src_occgen.kitti_io import SequenceDir, read_occupancy, read_voxel_labels
from src_occgen.manifest import read_manifest, verify_manifest
from src_occgen.voxel import voxelize

FAST = ["--frames", "4", "--azimuth-steps", "60", "--region", "0"]


def run(*argv):
    """Run main() and return (exit status, captured stdout)."""
    out = io.StringIO()
    with redirect_stdout(out):
        status = main(list(argv))
    return status, out.getvalue()


class CliTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp(prefix="occgen-cli-"))
        cls.seq = cls.tmp / "00"
        status, _ = run("generate", *FAST, "--out", str(cls.seq))
        assert status == EXIT_OK, "generation failed"

    @classmethod
    def tearDownClass(cls):
        logging_utils.reset_logger()
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def tearDown(self):
        logging_utils.reset_logger()


class TestGenerate(CliTestCase):

    def test_sequence_layout(self):
        seq = SequenceDir(self.seq)
        self.assertEqual(seq.frame_ids(), [0, 1, 2, 3])
        self.assertEqual(len(seq.poses), 4)
        manifest = read_manifest(self.seq / "generate_manifest.txt")
        self.assertEqual(manifest["subcommand"], "generate")
        self.assertEqual(manifest["status"], "ok")
        self.assertNotIn("error", manifest)
        self.assertIn("counter.points.00.000003", manifest)
        self.assertIn("counter.points.00.stats.max", manifest)
        self.assertTrue(verify_manifest(self.seq / "generate_manifest.txt"))

    def test_same_invocation_same_manifest_hash(self):
        other = self.tmp / "rerun"
        self.assertEqual(run("generate", *FAST, "--out", str(other))[0], EXIT_OK)
        first = read_manifest(other / "generate_manifest.txt")["content_hash"]
        self.assertEqual(run("generate", *FAST, "--out", str(other))[0], EXIT_OK)
        self.assertEqual(read_manifest(other / "generate_manifest.txt")["content_hash"], first)

    def test_invalid_scene_line(self):
        scene = self.tmp / "bad.scene"
        scene.write_text("plane 0 7\nbox 1 2 3\n")
        trajectory = self.tmp / "drive.txt"
        trajectory.write_text("0 0 0\n")
        log_file = self.tmp / "bad.log"
        status, _ = run(
            "generate", "--scene", str(scene), "--trajectory", str(trajectory),
            "--out", str(self.tmp / "bad"), "--log-file", str(log_file),
        )
        self.assertEqual(status, EXIT_ERRORS)
        self.assertIn(f"{scene}:2", log_file.read_text())
        self.assertFalse((self.tmp / "bad" / "calib.txt").exists())
        manifest = read_manifest(self.tmp / "bad" / "generate_manifest.txt")
        self.assertEqual(manifest["status"], "failed")
        self.assertIn(f"{scene}:2", manifest["error"])
        self.assertEqual(manifest["input.0"], str(scene))
        self.assertTrue(verify_manifest(self.tmp / "bad" / "generate_manifest.txt"))

    def test_scene_file(self):
        scene = self.tmp / "floor.scene"
        scene.write_text("plane 0 7\nbox 8 0 1 1 6 2 11\n")
        trajectory = self.tmp / "line.txt"
        trajectory.write_text("0 0 0\n0.5 0 0\n")
        out = self.tmp / "custom"
        status, _ = run(
            "generate", "--scene", str(scene), "--trajectory", str(trajectory),
            "--azimuth-steps", "60", "--out", str(out),
        )
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(SequenceDir(out).frame_ids(), [0, 1])


class TestPipeline(CliTestCase):

    def test_fuse_downsample_eval(self):
        """generate -> fuse -> downsample -> eval(gt, gt) scores 100.00 everywhere."""
        voxels = self.tmp / "fused"
        self.assertEqual(run("fuse", "--sequence", str(self.seq), "--prior-scan", "4", "--past-scan", "4", "--out", str(voxels))[0], EXIT_OK)
        self.assertEqual(sorted(p.name for p in voxels.glob("*.label")), [f"00000{i}.label" for i in range(4)])
        fuse_manifest = read_manifest(voxels / "fuse_manifest.txt")
        self.assertEqual(fuse_manifest["counter.frames_truncated"], "4")
        self.assertEqual(fuse_manifest["config.PRIOR_SCAN"], "4")

        self.assertEqual(run("downsample", "--voxels", str(voxels))[0], EXIT_OK)
        occ = read_occupancy(voxels / "000000.occ")
        self.assertEqual(occ.shape, (128, 128, 16))
        self.assertGreater(int(occ.sum()), 0)

        status, printed = run("eval", "--gt", str(voxels), "--pred", str(voxels))
        self.assertEqual(status, EXIT_OK)
        self.assertIn("100.00", printed)
        self.assertNotIn("n/a", printed)
        report = json.loads((voxels / "eval_report.json").read_text())
        summary = report["fused"]
        self.assertEqual(summary["frames"], 4)
        for key in ("iou", "precision", "recall"):
            self.assertEqual(summary["binary"][key], 1.0)
        self.assertEqual(summary["miou"], 1.0)

        status, printed = run("eval", "--gt", str(voxels), "--pred", str(voxels), "--suffix", ".occ", "--report", str(self.tmp / "occ.json"))
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(json.loads((self.tmp / "occ.json").read_text())["fused"]["binary"]["iou"], 1.0)

    def test_single_frame_fuse_matches_voxelize(self):
        out = self.tmp / "single"
        self.assertEqual(run("fuse", "--sequence", str(self.seq), "--first", "2", "--last", "2", "--out", str(out))[0], EXIT_OK)
        fused = read_voxel_labels(out / "000002.label")
        direct = voxelize(SequenceDir(self.seq).load_frame(2)).labels
        self.assertTrue(np.array_equal(fused, direct))
        self.assertFalse((out / "000001.label").exists())

    def test_corrupt_label_in_window(self):
        broken = self.tmp / "broken"
        shutil.copytree(self.seq, broken)
        (broken / "labels" / "000001.label").write_bytes(b"\x00\x01\x02")
        out = self.tmp / "broken_voxels"
        status, _ = run("fuse", "--sequence", str(broken), "--prior-scan", "1", "--past-scan", "1", "--out", str(out))
        self.assertEqual(status, EXIT_ERRORS)
        self.assertTrue((out / "000003.label").exists())
        self.assertFalse((out / "000000.label").exists())
        self.assertEqual(read_manifest(out / "fuse_manifest.txt")["counter.frames_failed"], "3")

    def test_missing_calib_leaves_failed_manifest(self):
        broken = self.tmp / "no_calib"
        shutil.copytree(self.seq, broken)
        (broken / "calib.txt").unlink()
        out = self.tmp / "no_calib_voxels"
        status, _ = run("fuse", "--sequence", str(broken), "--out", str(out))
        self.assertEqual(status, EXIT_ERRORS)
        self.assertEqual(list(out.glob("*.label")), [])
        manifest = read_manifest(out / "fuse_manifest.txt")
        self.assertEqual(manifest["status"], "failed")
        self.assertIn("calib.txt", manifest["error"])

    def test_missing_gt_directory_leaves_failed_manifest(self):
        report = self.tmp / "nowhere" / "report.json"
        status, _ = run("eval", "--gt", str(self.tmp / "no_such_gt"), "--pred", str(self.seq), "--report", str(report))
        self.assertEqual(status, EXIT_ERRORS)
        self.assertFalse(report.exists())
        manifest = read_manifest(report.parent / "eval_manifest.txt")
        self.assertEqual(manifest["status"], "failed")
        self.assertIn("no_such_gt", manifest["error"])
        self.assertTrue(verify_manifest(report.parent / "eval_manifest.txt"))

    def test_missing_voxel_directory_is_an_error(self):
        src = self.tmp / "no_voxels"
        status, _ = run("downsample", "--voxels", str(src), "--out", str(self.tmp / "no_voxels_occ"))
        self.assertEqual(status, EXIT_ERRORS)
        self.assertFalse(src.exists())
        self.assertEqual(read_manifest(self.tmp / "no_voxels_occ" / "downsample_manifest.txt")["status"], "failed")

    def test_empty_prediction(self):
        gt = self.tmp / "gt_one"
        pred = self.tmp / "empty"
        status, _ = run("fuse", "--sequence", str(self.seq), "--first", "0", "--last", "0", "--out", str(gt))
        self.assertEqual(status, EXIT_OK)
        pred.mkdir()
        np.zeros((256, 256, 32), dtype="<u2").tofile(pred / "000000.label")
        report = self.tmp / "empty.json"
        status, printed = run("eval", "--gt", str(gt), "--pred", str(pred), "--report", str(report))
        self.assertEqual(status, EXIT_OK)
        binary = json.loads(report.read_text())["empty"]["binary"]
        self.assertEqual(binary["recall"], 0.0)
        self.assertEqual(binary["iou"], 0.0)
        self.assertIsNone(binary["precision"])

    def test_missing_prediction_frames(self):
        gt = self.tmp / "gt_all"
        self.assertEqual(run("fuse", "--sequence", str(self.seq), "--out", str(gt))[0], EXIT_OK)
        partial = self.tmp / "partial"
        partial.mkdir()
        shutil.copy(gt / "000000.label", partial / "000000.label")
        status, _ = run("eval", "--gt", str(gt), "--pred", str(partial), "--report", str(self.tmp / "partial.json"))
        self.assertEqual(status, EXIT_ERRORS)
        self.assertEqual(json.loads((self.tmp / "partial.json").read_text())["partial"]["frames"], 1)

    def test_export(self):
        voxels = self.tmp / "export_src"
        self.assertEqual(run("fuse", "--sequence", str(self.seq), "--first", "0", "--last", "0", "--out", str(voxels))[0], EXIT_OK)
        mesh = self.tmp / "mesh" / "000000.ply"
        self.assertEqual(run("export", "--grid", str(voxels / "000000.label"), "--out", str(mesh))[0], EXIT_OK)
        lines = mesh.read_text().splitlines()
        self.assertEqual(lines[0], "ply")
        vertex_line = next(l for l in lines if l.startswith("element vertex"))
        n_vertices = int(vertex_line.split()[2])
        nonempty = int(np.count_nonzero(read_voxel_labels(voxels / "000000.label")))
        self.assertEqual(n_vertices, 8 * nonempty)


class TestRemapCommand(CliTestCase):

    def test_remap_directory(self):
        raw = self.tmp / "raw_labels"
        raw.mkdir()
        np.array([(3 << 16) | 11, 7, 99], dtype="<u4").tofile(raw / "000000.label")
        out = self.tmp / "remapped"
        self.assertEqual(run("remap", "--labels", str(raw), "--table", "default", "--out", str(out))[0], EXIT_OK)
        self.assertEqual(np.fromfile(out / "000000.label", dtype="<u4").tolist(), [(3 << 16) | 1, 2, 0])
        self.assertEqual(read_manifest(out / "remap_manifest.txt")["counter.defaulted.99"], "1")


class TestClassList(unittest.TestCase):

    def test_read_class_list(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "classes.txt"
            path.write_text("# toolkit classes\n1 wall\n2 road\n\n5\n")
            self.assertEqual(read_class_list(path), [1, 2, 5])
            path.write_text("wall\n")
            with self.assertRaises(ParseError):
                read_class_list(path)


if __name__ == '__main__':
    unittest.main()
