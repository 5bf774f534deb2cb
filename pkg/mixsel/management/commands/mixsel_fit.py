"""
mixsel_fit: constrained maximum likelihood for a fixed number of components.

    python manage.py mixsel_fit --data mixsel/data/example_two_component.csv --q 2 --radius 10 --seed 7

Prints the FitResult as JSON on stdout.
"""

from __future__ import annotations

from django.core.management.base import CommandParser

from mixsel.config import resolve_threads
from mixsel.management.base import COMPUTE_ERROR, CONFIG_ERROR, MixselCommand
from mixsel.serializers.results import FitResultSerializer
from mixsel.services.likelihood import fit_constrained


class Command(MixselCommand):
    help = "Fit a q-component location mixture by multi-start projected EM and print the result as JSON."

    def add_arguments(self, parser: CommandParser) -> None:
        self.add_data_arguments(parser)
        parser.add_argument("--q", type=int, required=True, help="Number of components.")
        self.add_fit_arguments(parser)

    def handle(self, *args, **opts) -> None:
        self.configure_logging(opts["verbosity"])
        with self.stage(CONFIG_ERROR):
            family = self.family_from(opts)
            sieve = self.sieve_from(opts)
            starts = self.starts_from(opts)
            threads = resolve_threads(opts.get("threads"))

        data = self.load_data(opts)
        with self.stage(CONFIG_ERROR):
            ball = self.ball_for(sieve, data.n)

        with self.stage(COMPUTE_ERROR):
            fit = fit_constrained(
                int(opts["q"]),
                data,
                family,
                ball,
                starts=starts,
                seed=int(opts["seed"]),
                tol=float(opts["tol"]),
                max_iter=int(opts["max_iter"]),
                threads=threads,
            )
        self.emit_json(FitResultSerializer(fit.to_dict()).data)
