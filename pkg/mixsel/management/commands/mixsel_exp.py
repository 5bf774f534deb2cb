"""
mixsel_exp: run a seeded study from a RunConfig file.

    python manage.py mixsel_exp consistency --config configs/consistency.cfg --threads 4

CHANGE LOG
- 2026-08-24: Initial creation.
- 2026-09-02: Optional positional study overrides the config's study; unknown names exit 2.  # CHANGED:
- 2026-09-02: Completed runs are recorded in ExperimentRun; registry failures only warn.     # CHANGED:
"""

from __future__ import annotations

import logging
from pathlib import Path

from django.core.management.base import CommandParser

from mixsel.config import resolve_threads, setting
from mixsel.management.base import COMPUTE_ERROR, CONFIG_ERROR, MixselCommand
from mixsel.models import ExperimentRun
from mixsel.serializers.results import SummaryRowSerializer
from mixsel.serializers.run_config import load_run_config, validate_run_config
from mixsel.services.artifacts import sha256_file
from mixsel.services.experiments import ExperimentSpec, run_study
from mixsel.validators import validate_study

logger = logging.getLogger("mixsel.commands")


class Command(MixselCommand):
    help = "Run a Monte Carlo study (consistency, inconsistency, lil, geometry, entropy) from a config file."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("study", nargs="?", default=None, help="Study name; overrides the config's 'study'.")
        parser.add_argument("--config", required=True, help="RunConfig JSON file (see configs/*.cfg).")
        parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: config, then MIXSEL_THREADS).")
        parser.add_argument("--out", default=None, help="Output directory (default: config output_dir, then MIXSEL_OUTPUT_ROOT/<study>-<seed>).")

    def handle(self, *args, **opts) -> None:
        self.configure_logging(opts["verbosity"])
        with self.stage(CONFIG_ERROR):
            config = load_run_config(opts["config"])
            if opts.get("study"):
                config["study"] = validate_study(opts["study"])
                config = validate_run_config(config)
            threads = resolve_threads(opts["threads"] if opts.get("threads") is not None else config.get("threads"))
            out_dir = self._output_dir(opts, config)
            spec = ExperimentSpec.from_config(config, threads=threads, output_dir=out_dir)

        with self.stage(COMPUTE_ERROR):
            table = run_study(spec, progress=int(opts["verbosity"]) >= 2)

        self._register(spec, table)
        payload = table.to_dict()
        payload["rows"] = SummaryRowSerializer(table.rows, many=True).data
        payload["output_dir"] = str(out_dir)
        self.emit_json(payload)
        self.stderr.write(self.style.SUCCESS(f"OK • {spec.study} study written to {out_dir}"))

    def _output_dir(self, opts, config) -> Path:
        if opts.get("out"):
            return Path(opts["out"])
        if config.get("output_dir"):
            return Path(config["output_dir"])
        root = Path(setting("MIXSEL_OUTPUT_ROOT", Path("runs")))
        return root / f"{config['study']}-{config['seed']}"

    def _register(self, spec: ExperimentSpec, table) -> None:
        manifest = table.extras.get("manifest")
        try:
            ExperimentRun.objects.create(
                study=spec.study,
                master_seed=spec.master_seed,
                output_dir=str(spec.output_dir),
                manifest_sha256=sha256_file(manifest) if manifest else "",
                config=spec.echo,
                row_count=len(table.rows) or len(table.metrics),
                threads=spec.threads,
            )
        except Exception as exc:  # noqa: BLE001
            logger.warning("run registry write failed: %s", exc)
