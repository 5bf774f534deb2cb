from django.core.management.base import CommandParser

from mixsel.management.base import MixselCommand


class Command(MixselCommand):
    help = "Parse a data CSV and print its row count (exit 3 with the line number on failure)."

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--data", required=True, help="Headerless numeric CSV.")
        parser.add_argument("--dim", type=int, default=1, help="Expected number of columns.")

    def handle(self, *args, **opts) -> None:
        self.configure_logging(opts["verbosity"])
        data = self.load_data(opts)
        self.emit_json({"path": str(opts["data"]), "rows": data.n, "dim": data.dim})
