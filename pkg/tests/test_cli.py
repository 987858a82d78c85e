"""End-to-end tests for the command-line pipeline."""

import contextlib
import io
import json
import shutil
import sys
import tempfile
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import unittest

import numpy as np
import pandas as pd

from hrom import containers
from hrom.cli import main, parse_omegas
from hrom.core import DeadTimeSpec, StateSpaceModel, StructuredModel


def run(argv):
    """Run the CLI, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(arg) for arg in argv])
    return code, out.getvalue(), err.getvalue()


class TestParseOmegas(unittest.TestCase):
    """Frequency grid parsing."""

    def test_range(self):
        np.testing.assert_allclose(parse_omegas("0:pi:5"), np.linspace(0, np.pi, 5))

    def test_list(self):
        np.testing.assert_allclose(parse_omegas("0.1, 0.5*pi, pi"), [0.1, np.pi / 2, np.pi])

    def test_bad_range(self):
        with self.assertRaises(ValueError):
            parse_omegas("0:1")


class TestSisoPipeline(unittest.TestCase):
    """synth -> reduce -> eval on a single delayed channel."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp())
        cls.scene = cls.tmp / "scene"
        code, _, _ = run(
            ["synth", "--geometry", "semicircle", "--m", 1, "--p", 1, "--modes", 5,
             "--fs", 4000, "--duration", 0.2, "--out", cls.scene]
        )
        assert code == 0
        cls.rom = cls.tmp / "scene.rom"
        code, out, _ = run(["reduce", "--in", cls.scene, "--out", cls.rom, "--gamma", 1e-6, "--block", 8])
        assert code == 0
        cls.summary = json.loads(out)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_synth_outputs(self):
        self.assertTrue((self.tmp / "scene.json").exists())
        self.assertTrue((self.tmp / "scene.f32").exists())
        truth = containers.read_truth(self.tmp / "scene.truth")
        # 1 m at 4 kHz and 343 m/s
        self.assertEqual(truth["delta"], [[11]])
        self.assertEqual(truth["tau"], [11])

    def test_reduce_summary(self):
        self.assertLessEqual(self.summary["order"], 5 + 8 - 1)
        self.assertEqual(self.summary["mode"], "dts")
        self.assertEqual(self.summary["total_residual"], 0)

    def test_rom_carries_dead_time(self):
        model, provenance = containers.read_rom(self.rom)
        np.testing.assert_array_equal(model.spec.tau, [11])
        np.testing.assert_array_equal(model.spec.theta, [0])
        self.assertEqual(provenance["gamma"], 1e-6)
        self.assertEqual(provenance["b"], 8)
        self.assertIn("rsvd", provenance["timings"])

    def test_eval_recovers_response(self):
        code, out, _ = run(["eval", "--in", self.scene, "--rom", self.rom, "--scenario", "siso"])
        self.assertEqual(code, 0)
        frame = pd.read_csv(io.StringIO(out))
        self.assertEqual(list(frame.columns), containers.EVAL_COLUMNS)
        self.assertEqual(frame.loc[0, "scenario"], "siso")
        self.assertEqual(frame.loc[0, "r"], self.summary["order"])
        self.assertLess(frame.loc[0, "erel_db"], -60.0)
        self.assertLessEqual(frame.loc[0, "eest_db"], -120.0 + 1e-6)

    def test_reduce_is_deterministic(self):
        other = self.tmp / "again.rom"
        code, _, _ = run(["reduce", "--in", self.scene, "--out", other, "--gamma", 1e-6, "--block", 8])
        self.assertEqual(code, 0)
        self.assertEqual((self.tmp / "again.rom.f64").read_bytes(), (self.tmp / "scene.rom.f64").read_bytes())

    def test_staged_pipeline_matches_reduce(self):
        delays = self.tmp / "scene.delays"
        spec = self.tmp / "scene.spec"
        staged = self.tmp / "staged.rom"
        self.assertEqual(run(["delays", "--in", self.scene, "--out", delays])[0], 0)
        self.assertEqual(run(["split", "--delays", delays, "--mode", "dts", "--out", spec])[0], 0)
        code, _, _ = run(
            ["reduce", "--in", self.scene, "--spec", spec, "--out", staged, "--gamma", 1e-6, "--block", 8]
        )
        self.assertEqual(code, 0)
        self.assertEqual((self.tmp / "staged.rom.f64").read_bytes(), (self.tmp / "scene.rom.f64").read_bytes())

    def test_delays_to_stdout(self):
        code, out, _ = run(["delays", "--in", self.scene])
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["delta"], [[11]])

    def test_respond(self):
        csv_path = self.tmp / "tf.csv"
        code, out, _ = run(["respond", "--rom", self.rom, "--omegas", "0:pi:16", "--out", csv_path])
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["points"], 16)
        frame = pd.read_csv(csv_path)
        self.assertEqual(len(frame), 16)

    def test_exact_rom_hits_floor(self):
        rom = self.tmp / "exact.rom"
        spec = DeadTimeSpec([11], [0], [[0]])
        containers.write_rom(rom, StructuredModel(StateSpaceModel.feedthrough([[1.0]]), spec))
        impulse = self.tmp / "impulse"
        code, _, _ = run(
            ["synth", "--geometry", "semicircle", "--m", 1, "--p", 1, "--modes", 0,
             "--fs", 4000, "--duration", 0.2, "--out", impulse]
        )
        self.assertEqual(code, 0)
        code, out, _ = run(["eval", "--in", impulse, "--rom", rom])
        self.assertEqual(code, 0)
        frame = pd.read_csv(io.StringIO(out))
        self.assertEqual(frame.loc[0, "erel_db"], -300.0)


class TestBench(unittest.TestCase):
    """Matched-order comparison of dead-time modes."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp())
        scene = cls.tmp / "arc"
        code, _, _ = run(
            ["synth", "--geometry", "semicircle", "--m", 4, "--p", 2, "--modes", 4,
             "--fs", 8000, "--duration", 0.1, "--out", scene]
        )
        assert code == 0
        cls.csv = cls.tmp / "bench.csv"
        code, _, _ = run(
            ["bench", "--in", scene, "--orders", "2,4", "--gamma", 1e-3, "--block", 8, "--out", cls.csv]
        )
        assert code == 0
        cls.frame = pd.read_csv(cls.csv)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def erel(self, mode, r):
        rows = self.frame[(self.frame["mode"] == mode) & (self.frame["r"] == r)]
        return float(rows["erel_db"].iloc[0])

    def test_rows_per_mode_and_order(self):
        self.assertEqual(len(self.frame), 6)
        self.assertEqual(set(self.frame["mode"]), {"none", "least-common", "dts"})
        self.assertTrue(self.frame.loc[self.frame["r"] == 2, "ekc_db"].notna().all())

    def test_mode_ranking_at_matched_order(self):
        self.assertLessEqual(self.erel("dts", 4), self.erel("least-common", 4) + 1.0)
        self.assertLessEqual(self.erel("least-common", 4), self.erel("none", 4) + 1.0)

    def test_dofs_include_dead_times(self):
        rows = self.frame[self.frame["r"] == 4].set_index("mode")
        self.assertEqual(rows.loc["none", "dofs"], (4 + 2) * (4 + 4))
        self.assertGreater(rows.loc["dts", "dofs"], rows.loc["none", "dofs"])


class TestSemicircleBench(unittest.TestCase):
    """Dead-time modes and the error estimate on a multichannel semicircle scene."""

    ORDERS = (8, 16, 24)

    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp())
        scene = cls.tmp / "semicircle"
        code, _, _ = run(
            ["synth", "--geometry", "semicircle", "--m", 6, "--p", 4, "--modes", 24,
             "--fs", 16000, "--duration", 0.064, "--seed", 1, "--out", scene]
        )
        assert code == 0
        cls.csv = cls.tmp / "bench.csv"
        code, _, _ = run(
            ["bench", "--in", scene, "--orders", ",".join(str(r) for r in cls.ORDERS),
             "--gamma", 1e-2, "--block", 24, "--power", 2, "--out", cls.csv]
        )
        assert code == 0
        cls.frame = pd.read_csv(cls.csv)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def erel(self, mode, r):
        rows = self.frame[(self.frame["mode"] == mode) & (self.frame["r"] == r)]
        return float(rows["erel_db"].iloc[0])

    def test_every_mode_reaches_every_order(self):
        self.assertEqual(len(self.frame), 3 * len(self.ORDERS))

    def test_mode_ranking_at_matched_order(self):
        for r in self.ORDERS:
            self.assertLessEqual(self.erel("dts", r), self.erel("least-common", r) + 1.0, msg=f"r={r}")
            self.assertLessEqual(self.erel("least-common", r), self.erel("none", r) + 1.0, msg=f"r={r}")

    def test_estimate_is_conservative(self):
        gap = self.frame["eest_db"] - self.frame["erel_db"]
        self.assertGreaterEqual(float(np.mean(gap >= 0.0)), 0.8, msg=gap.tolist())
        self.assertGreaterEqual(float(np.mean(gap <= 10.0)), 0.8, msg=gap.tolist())


class TestErrors(unittest.TestCase):
    """Error reporting on stderr."""

    def test_missing_input(self):
        tmp = Path(tempfile.mkdtemp())
        try:
            code, _, err = run(["reduce", "--in", tmp / "missing", "--out", tmp / "rom"])
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        self.assertEqual(code, 1)
        error = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(error["kind"], "FileNotFoundError")
        self.assertEqual(error["command"], "reduce")

    def test_domain_error_kind(self):
        tmp = Path(tempfile.mkdtemp())
        try:
            code, _, err = run(["eval", "--in", tmp / "x", "--rom", tmp / "y"])
            bad = tmp / "bad.json"
            bad.write_text(json.dumps({"format_version": 7, "kind": "ir"}))
            code_bad, _, err_bad = run(["delays", "--in", bad])
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        self.assertEqual(code, 1)
        self.assertEqual(code_bad, 1)
        self.assertEqual(json.loads(err_bad.strip().splitlines()[-1])["kind"], "format")


if __name__ == "__main__":
    unittest.main()
