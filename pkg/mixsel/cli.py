"""
Console entry point: `mixsel <subcommand> [options]`.

    mixsel fit ...           -> manage.py mixsel_fit
    mixsel order ...         -> manage.py mixsel_order
    mixsel exp ...           -> manage.py mixsel_exp
    mixsel ingest-check ...  -> manage.py mixsel_ingest_check
"""

import os
import sys

SUBCOMMANDS = {
    "fit": "mixsel_fit",
    "order": "mixsel_order",
    "exp": "mixsel_exp",
    "ingest-check": "mixsel_ingest_check",
}

USAGE = "usage: mixsel {fit,order,exp,ingest-check} [options]   (mixsel <subcommand> --help for details)"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE, file=sys.stderr)
        return 0 if argv else 2
    command = SUBCOMMANDS.get(argv[0])
    if command is None:
        print(f"mixsel: unknown subcommand {argv[0]!r}\n{USAGE}", file=sys.stderr)
        return 2

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "mixsel_site.settings")
    from django.core.management import execute_from_command_line

    execute_from_command_line(["mixsel", command, *argv[1:]])
    return 0


if __name__ == "__main__":
    sys.exit(main())
