"""
Study runners: determinism, thread invariance, output files and CSV ingestion.
Configs are kept tiny; the shipped configs/*.cfg are the full-size versions.
"""

import csv
import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from mixsel.exceptions import DataParseError, InvalidArgument
from mixsel.serializers.run_config import validate_run_config
from mixsel.services.artifacts import read_manifest, verify_manifest
from mixsel.services.experiments import (
    ExperimentSpec,
    ReplicateRecord,
    canonical_study,
    ingest_csv,
    paired_contrast,
    run_study,
)

TWO_COMPONENTS = {"weights": [0.5, 0.5], "locations": [-2.5, 2.5]}


def make_spec(out_dir=None, threads=1, **overrides):
    config = {
        "study": "consistency",
        "seed": 11,
        "truth": TWO_COMPONENTS,
        "n_grid": [150, 300],
        "replicates": 3,
        "penalties": ["bic"],
        "fit": {"starts": 2, "max_iter": 200},
        "q_cap": 3,
    }
    config.update(overrides)
    return ExperimentSpec.from_config(validate_run_config(config), threads=threads, output_dir=out_dir)


class OrderStudyTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_same_spec_same_table(self):
        a = run_study(make_spec())
        b = run_study(make_spec())
        self.assertEqual([r.as_csv() for r in a.rows], [r.as_csv() for r in b.rows])
        self.assertEqual([rec.scores for rec in a.records], [rec.scores for rec in b.records])

    def test_summary_is_byte_identical_across_thread_counts(self):
        run_study(make_spec(self.tmp / "one", threads=1))
        run_study(make_spec(self.tmp / "three", threads=3))
        self.assertEqual((self.tmp / "one" / "summary.csv").read_bytes(), (self.tmp / "three" / "summary.csv").read_bytes())

    def test_single_replicate_fractions(self):
        table = run_study(make_spec(replicates=1))
        self.assertEqual(len(table.rows), 2)
        for row in table.rows:
            self.assertIn(row.frac_correct, (0.0, 1.0))
            self.assertEqual(row.replicates, 1)

    def test_outputs_and_manifest(self):
        out = self.tmp / "run"
        table = run_study(make_spec(out))
        with (out / "summary.csv").open() as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(rows[0], ["study", "n", "penalty_id", "frac_under", "frac_correct", "frac_over", "replicates"])
        self.assertEqual(len(rows), 3)
        manifest = read_manifest(out / "manifest.json")
        self.assertEqual({e["file"] for e in manifest["files"]}, {"summary.csv", "records.csv"})
        self.assertEqual(manifest["spec"]["study"], "consistency")
        self.assertTrue(all(verify_manifest(out).values()))
        self.assertEqual(table.cell(150, "bic").replicates, 3)

    def test_paired_design_shares_scores(self):
        table = run_study(make_spec(penalties=["bic", "loglog:0.5"]))
        for rec in table.records:
            self.assertEqual(set(rec.q_hats), {"bic", "loglog:0.5"})
            # the lighter penalty never picks a smaller order on the same scores
            self.assertGreaterEqual(rec.q_hats["loglog:0.5"], rec.q_hats["bic"])

    def test_inconsistency_adds_bic_and_contrast(self):
        out = self.tmp / "inc"
        table = run_study(make_spec(out, study="inconsistency", penalties=["loglog:0.05"], replicates=2))
        self.assertEqual({r.penalty_id for r in table.rows}, {"bic", "loglog:0.05"})
        self.assertTrue((out / "contrast.csv").exists())
        self.assertEqual(len(table.extras["contrast"]), 2)


class ContrastTests(SimpleTestCase):
    def test_discordant_counts(self):
        spec = make_spec(penalties=["bic", "loglog:0.05"], n_grid=[100])
        records = [
            ReplicateRecord(0, 1, 100, {"bic": 2, "loglog:0.05": 3}, (), 0.0),
            ReplicateRecord(1, 2, 100, {"bic": 3, "loglog:0.05": 3}, (), 0.0),
            ReplicateRecord(2, 3, 100, {"bic": 2, "loglog:0.05": 2}, (), 0.0),
        ]
        (row,) = paired_contrast(spec, records)
        self.assertEqual((row.over_count, row.bic_over_count), (2, 1))
        self.assertEqual((row.discordant_plus, row.discordant_minus), (1, 0))
        self.assertEqual(row.frequency_ratio, 2.0)


class OtherStudyTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_lil_study(self):
        out = self.tmp / "lil"
        spec = make_spec(
            out,
            study="lil",
            replicates=2,
            n_grid=[],
            penalties=[],
            lil={"low_exponent": 4, "high_exponent": 7, "mixture_high_exponent": 6, "q": 3},
        )
        table = run_study(spec)
        self.assertEqual(len(table.extras["trajectories"]), 6)
        self.assertGreater(table.metric("strassen.cluster_radius"), 0.0)
        self.assertLessEqual(table.metric("strassen.cluster_radius"), 1.0)
        for name in ("trajectories.csv", "lil_stats.csv", "summary.csv", "manifest.json"):
            self.assertTrue((out / name).exists(), name)

    def test_geometry_study(self):
        out = self.tmp / "geo"
        spec = make_spec(
            out,
            study="geometry-figure",
            truth={"weights": [1.0], "locations": [0.5]},
            family={"kind": "gaussian-scaled", "sigma": 0.5, "dim": 1},
            n_grid=[],
            penalties=[],
            geometry={"box": {"q": 2, "dim": 1}, "n_samples": 1000, "epsilons": [0.05], "resolution": 11},
        )
        table = run_study(spec)
        self.assertGreater(table.metric("r_min"), 0.0)
        self.assertEqual(table.metric("sandwich.eps_0.05"), table.metric("sandwich_violations.eps_0.05") == 0)
        for name in ("ratios.csv", "levelset_h.csv", "levelset_N.csv", "summary.csv"):
            self.assertTrue((out / name).exists(), name)

    def test_empty_entropy_study_writes_empty_manifest(self):
        out = self.tmp / "ent"
        spec = make_spec(out, study="entropy", n_grid=[], penalties=[], entropy={"q_list": []})
        run_study(spec)
        manifest = json.loads((out / "manifest.json").read_text())
        self.assertEqual(manifest["files"], [])

    def test_small_entropy_study(self):
        out = self.tmp / "ent"
        spec = make_spec(
            out,
            study="entropy-study",
            truth={"weights": [1.0], "locations": [0.0]},
            n_grid=[],
            penalties=[],
            entropy={"q_list": [1], "epsilon": 0.3, "n_functions": 300, "delta_points": 6, "smallest_fraction": 0.05},
        )
        table = run_study(spec)
        self.assertIn("q1.eta_hat", dict(table.metrics))
        self.assertTrue(table.metric("q1.sandwich_holds"))
        self.assertTrue((out / "curve.csv").exists())

    def test_entropy_study_with_local_global_block(self):
        out = self.tmp / "ent-lg"
        spec = make_spec(
            out,
            study="entropy-study",
            truth={"weights": [1.0], "locations": [0.0]},
            n_grid=[],
            penalties=[],
            entropy={
                "q_list": [1],
                "epsilon": 0.3,
                "n_functions": 300,
                "delta_points": 8,
                "smallest_fraction": 0.05,
                "local_global": {"q": 2, "n_functions": 400, "pairs": [[0.2, 0.3]]},
            },
        )
        table = run_study(spec)
        self.assertIn("local_global.all_hold", dict(table.metrics))
        self.assertEqual(len(table.extras["local_global"]), 1)
        with (out / "local_global.csv").open(newline="") as fh:
            self.assertEqual(len(list(csv.reader(fh))), 2)
        self.assertTrue(all(verify_manifest(out).values()))

    def test_unknown_study(self):
        with self.assertRaises(InvalidArgument):
            canonical_study("figure-2")


class IngestTests(SimpleTestCase):
    def _write(self, text):
        handle = tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False)
        handle.write(text)
        handle.close()
        self.addCleanup(Path(handle.name).unlink)
        return handle.name

    def test_two_points(self):
        self.assertEqual(ingest_csv(self._write("0.1\n0.2\n"), 1).n, 2)

    def test_blank_lines_are_skipped(self):
        self.assertEqual(ingest_csv(self._write("0.1\n\n0.2\n"), 1).n, 2)

    def test_non_numeric_row(self):
        with self.assertRaises(DataParseError) as ctx:
            ingest_csv(self._write("a,b\n"), 2)
        self.assertEqual(ctx.exception.line, 1)

    def test_ragged_row_reports_line(self):
        with self.assertRaises(DataParseError) as ctx:
            ingest_csv(self._write("1,2\n3,4\n5\n"), 2)
        self.assertEqual(ctx.exception.line, 3)
        self.assertIn(":3:", str(ctx.exception))

    def test_invalid_utf8_reports_line(self):
        handle = tempfile.NamedTemporaryFile("wb", suffix=".csv", delete=False)
        handle.write(b"0.1\n\xff\n")
        handle.close()
        self.addCleanup(Path(handle.name).unlink)
        with self.assertRaises(DataParseError) as ctx:
            ingest_csv(handle.name, 1)
        self.assertEqual(ctx.exception.line, 2)
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_crlf_line_endings(self):
        self.assertEqual(ingest_csv(self._write("1,2\r\n3,4\r\n"), 2).n, 2)

    def test_missing_file(self):
        with self.assertRaises(DataParseError):
            ingest_csv("/nonexistent/mixsel.csv", 1)
