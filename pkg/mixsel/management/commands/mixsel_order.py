"""
mixsel_order: penalized likelihood order estimate for one dataset.

    python manage.py mixsel_order --data mixsel/data/example_two_component.csv --penalty bic --seed 7

Prints the per-q table (aligned text, or JSON with --json) and writes order_table.csv.
"""

from __future__ import annotations

from pathlib import Path

from django.core.management.base import CommandParser

from mixsel.config import resolve_threads, setting
from mixsel.management.base import COMPUTE_ERROR, CONFIG_ERROR, MixselCommand
from mixsel.serializers.results import OrderEstimateSerializer
from mixsel.services.likelihood import FitOptions
from mixsel.services.order_select import estimate_order, write_order_table
from mixsel.validators import validate_penalty_text


class Command(MixselCommand):
    help = "Estimate the number of mixture components with a penalized likelihood criterion."

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_data_arguments(parser)
        parser.add_argument("--penalty", required=True, help="bic | loglog:C | linear:log|loglog|power:a|const:c")
        self.add_fit_arguments(parser)
        parser.add_argument("--q-cap", type=int, default=None, help="Upper limit for the order scan (default: MIXSEL_Q_CAP).")
        parser.add_argument("--out", default=None, help="Directory for order_table.csv (default: MIXSEL_OUTPUT_ROOT/order).")
        parser.add_argument("--json", action="store_true", help="Print the estimate as JSON instead of a table.")

    def handle(self, *args, **opts) -> None:
        self.configure_logging(opts["verbosity"])
        with self.stage(CONFIG_ERROR):
            penalty = validate_penalty_text(opts["penalty"])
            family = self.family_from(opts)
            sieve = self.sieve_from(opts)
            options = FitOptions(
                starts=self.starts_from(opts),
                tol=float(opts["tol"]),
                max_iter=int(opts["max_iter"]),
                threads=resolve_threads(opts.get("threads")),
            )
            out_dir = Path(opts["out"]) if opts.get("out") else Path(setting("MIXSEL_OUTPUT_ROOT", Path("runs"))) / "order"

        data = self.load_data(opts)
        with self.stage(CONFIG_ERROR):
            self.ball_for(sieve, data.n)

        with self.stage(COMPUTE_ERROR):
            estimate = estimate_order(data, family, penalty, sieve, options, seed=int(opts["seed"]), q_cap=opts.get("q_cap"))
            table_path = write_order_table(estimate, out_dir / "order_table.csv")

        if opts["json"]:
            payload = dict(OrderEstimateSerializer(estimate.to_dict()).data)
            payload["order_table"] = str(table_path)
            self.emit_json(payload)
            return
        self.stdout.write(estimate.format_table())
        self.stdout.write(f"q_hat={estimate.q_hat}")
        self.stderr.write(self.style.SUCCESS(f"OK • wrote {table_path}"))
