import json
import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase

from mixsel.exceptions import ConfigError, InvalidArgument
from mixsel.serializers.run_config import load_run_config, validate_run_config
from mixsel.services.experiments import ExperimentSpec
from mixsel.validators import validate_increasing, validate_penalty_text, validate_sieve_text, validate_study

CONFIG_DIR = Path(settings.BASE_DIR) / "configs"

BASE = {
    "study": "consistency",
    "seed": 1,
    "truth": {"weights": [0.5, 0.5], "locations": [-1.0, 1.0]},
    "n_grid": [200, 500],
    "penalties": ["bic"],
}


def with_changes(**changes):
    config = json.loads(json.dumps(BASE))
    config.update(changes)
    return config


class ShippedConfigTests(SimpleTestCase):
    def test_every_shipped_config_validates(self):
        paths = sorted(CONFIG_DIR.glob("*.cfg"))
        self.assertEqual(
            [p.name for p in paths],
            ["consistency.cfg", "entropy.cfg", "figure1.cfg", "inconsistency.cfg", "lil.cfg"],
        )
        for path in paths:
            config = load_run_config(path)
            spec = ExperimentSpec.from_config(config)
            self.assertEqual(spec.echo, config, path.name)

    def test_figure_config_uses_quarter_variance(self):
        spec = ExperimentSpec.from_config(load_run_config(CONFIG_DIR / "figure1.cfg"))
        self.assertEqual(spec.study, "geometry")
        self.assertEqual(spec.family.variance, 0.25)
        self.assertEqual(spec.options["resolution"], 101)


class RunConfigValidationTests(SimpleTestCase):
    def test_defaults_are_filled(self):
        config = validate_run_config(with_changes())
        self.assertEqual(config["family"], {"kind": "gaussian-standard", "dim": 1})
        self.assertEqual(config["sieve"], {"rule": "constant", "radius": 10.0})
        self.assertEqual(config["penalties"], [{"variant": "bic"}])
        self.assertEqual(config["q_cap"], settings.MIXSEL_Q_CAP)
        self.assertEqual(config["fit"]["starts"], settings.MIXSEL_DEFAULT_STARTS)

    def test_validated_config_validates_again(self):
        once = validate_run_config(with_changes(penalties=["bic", "loglog:0.5"]))
        self.assertEqual(validate_run_config(once), once)

    def test_unknown_keys_are_listed(self):
        with self.assertRaises(ConfigError) as ctx:
            validate_run_config(with_changes(colour="red", fit={"starts": 2, "tolerance": 1e-6}))
        self.assertIn("colour", ctx.exception.context["keys"])
        self.assertIn("fit.tolerance", ctx.exception.context["keys"])
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_study_alias(self):
        config = validate_run_config(with_changes(study="entropy-study", n_grid=[], penalties=[]))
        self.assertEqual(config["study"], "entropy")
        self.assertEqual(config["entropy"]["q_list"], [1, 2, 3])

    def test_order_study_needs_penalties(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(penalties=[]))

    def test_inconsistency_needs_loglog(self):
        with self.assertRaises(ConfigError) as ctx:
            validate_run_config(with_changes(study="inconsistency"))
        self.assertIn("penalties", ctx.exception.context["keys"])

    def test_geometry_needs_its_section(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(study="geometry", n_grid=[], penalties=[]))

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(family={"kind": "gaussian-standard", "dim": 2}))

    def test_n_grid_must_increase(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(n_grid=[500, 200]))

    def test_bad_penalty(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(penalties=["loglog:-1"]))

    def test_penalty_object_form(self):
        config = validate_run_config(
            with_changes(penalties=[{"variant": "linear-q", "rate": {"kind": "power", "a": 0.3}}])
        )
        self.assertEqual(config["penalties"][0]["rate"], {"kind": "power", "a": 0.3})

    def test_local_global_ratio_of_four_is_rejected(self):
        entropy = {"q_list": [1], "local_global": {"q": 2, "pairs": [[0.1, 0.15], [0.05, 0.2]]}}
        with self.assertRaises(ConfigError) as ctx:
            validate_run_config(with_changes(study="entropy", n_grid=[], penalties=[], entropy=entropy))
        keys = ctx.exception.context["keys"]
        self.assertTrue(any(k.startswith("entropy.local_global.pairs") for k in keys), keys)

    def test_local_global_pairs_below_the_cap_validate(self):
        entropy = {"q_list": [1], "local_global": {"q": 2, "pairs": [[0.1, 0.15], [0.05, 0.19]]}}
        config = validate_run_config(with_changes(study="entropy", n_grid=[], penalties=[], entropy=entropy))
        self.assertEqual(len(config["entropy"]["local_global"]["pairs"]), 2)

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ConfigError):
            validate_run_config(with_changes(truth={"weights": [0.5, 0.6], "locations": [-1.0, 1.0]}))


class LoadRunConfigTests(SimpleTestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_run_config("/nonexistent/run.cfg")

    def test_invalid_json_reports_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.cfg"
            path.write_text('{\n  "study": "lil",\n  "seed": \n}\n')
            with self.assertRaises(ConfigError) as ctx:
                load_run_config(path)
        self.assertIn(":4:", str(ctx.exception))


class ValidatorTests(SimpleTestCase):
    def test_study_names(self):
        self.assertEqual(validate_study(" Geometry-Figure "), "geometry")
        with self.assertRaises(InvalidArgument):
            validate_study("figure-9")

    def test_penalty_text(self):
        self.assertEqual(validate_penalty_text("loglog:2").C, 2.0)
        with self.assertRaises(InvalidArgument):
            validate_penalty_text("")

    def test_sieve_text(self):
        self.assertEqual(validate_sieve_text("constant:5").c, 5.0)
        self.assertEqual(validate_sieve_text("sqrt-loglog:2").rule, "sqrt-loglog")
        self.assertEqual(validate_sieve_text("sqrt-log-little-o:1:0.3").exponent, 0.3)
        for text in ("constant", "sqrt-loglog:x", "sqrt-log-little-o:1:0.7", "cubic:1"):
            with self.assertRaises(InvalidArgument):
                validate_sieve_text(text)

    def test_increasing(self):
        validate_increasing([1, 2, 3])
        with self.assertRaises(InvalidArgument):
            validate_increasing([1, 1])
