"""
Shared plumbing for the mixsel_* management commands.

CHANGE LOG
- 2026-08-24: Initial creation. Exit-code contract for every command:  # CHANGED:
    2  configuration / usage errors (bad flags, bad RunConfig, unknown penalty)
    3  data errors (CSV parse failures, with line number)
    1  compute errors (fitting, grids, entropy)
  Results go to stdout as JSON or aligned text; logs go to stderr only.
"""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from typing import Any, Dict

from django.core.management.base import BaseCommand, CommandError, CommandParser

from ..config import setting
from ..exceptions import ConfigError, DataParseError, MixselError
from ..services.density import Dataset, LocationFamily, ParamBall, SieveSchedule, sieve_radius
from ..services.experiments import ingest_csv
from ..validators import validate_data_path, validate_sieve_text

CONFIG_ERROR = 2
DATA_ERROR = 3
COMPUTE_ERROR = 1

_VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}


class MixselCommand(BaseCommand):
    """BaseCommand with the mixsel exit-code contract and the flags shared by fit/order."""

    def configure_logging(self, verbosity: int) -> None:
        logging.getLogger("mixsel").setLevel(_VERBOSITY_LEVELS.get(int(verbosity), logging.DEBUG))

    @contextmanager
    def stage(self, returncode: int):
        """Translate library errors raised inside the block into CommandError(returncode=...)."""
        try:
            yield
        except (ConfigError, DataParseError) as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except MixselError as exc:
            raise CommandError(f"{exc.code}: {exc}", returncode=returncode) from exc

    def emit_json(self, payload: Any) -> None:
        self.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=_json_scalar))

    # ---- shared arguments -------------------------------------------------

    def add_data_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--data", required=True, help="Headerless numeric CSV, one observation per row.")
        parser.add_argument("--dim", type=int, default=1, help="Number of columns / dimension d (default: 1).")
        parser.add_argument("--sigma", type=float, default=None, help="Known component scale; omit for the standard Gaussian.")

    def add_fit_arguments(self, parser: CommandParser) -> None:
        ball = parser.add_mutually_exclusive_group()
        ball.add_argument("--radius", type=float, help="Constant parameter-ball radius T.")
        ball.add_argument(
            "--sieve",
            help="Sieve T(n): constant:T | sqrt-loglog:c | sqrt-log-little-o:c:a (default: constant:10).",
        )
        parser.add_argument("--seed", type=int, required=True, help="Master seed for the EM start streams.")
        parser.add_argument("--starts", type=int, default=None, help="EM starts per fit (default: MIXSEL_DEFAULT_STARTS).")
        parser.add_argument("--tol", type=float, default=1e-8, help="EM log-likelihood gain tolerance.")
        parser.add_argument("--max-iter", type=int, default=500, help="EM iteration cap per start.")
        parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: MIXSEL_THREADS).")

    # ---- shared parsing ---------------------------------------------------

    def family_from(self, opts: Dict[str, Any]) -> LocationFamily:
        if opts.get("sigma") is None:
            return LocationFamily.standard(int(opts["dim"]))
        return LocationFamily.scaled(float(opts["sigma"]), int(opts["dim"]))

    def sieve_from(self, opts: Dict[str, Any]) -> SieveSchedule:
        if opts.get("radius") is not None:
            return SieveSchedule.constant(float(opts["radius"]))
        return validate_sieve_text(opts.get("sieve") or "constant:10")

    def starts_from(self, opts: Dict[str, Any]) -> int:
        return int(opts["starts"] if opts.get("starts") is not None else setting("MIXSEL_DEFAULT_STARTS", 20))

    def load_data(self, opts: Dict[str, Any]) -> Dataset:
        with self.stage(DATA_ERROR):
            return ingest_csv(validate_data_path(opts["data"]), int(opts["dim"]))

    def ball_for(self, sieve: SieveSchedule, n: int) -> ParamBall:
        return ParamBall(sieve_radius(sieve, n))



def _json_scalar(value: Any) -> Any:
    # numpy scalars and Paths
    if hasattr(value, "item"):
        return value.item()
    return str(value)
