# mixsel/validators.py
"""
Small input checks shared by the RunConfig serializers and the management commands.
All of them raise InvalidArgument (a ValueError) with a message fit for a CLI user.
"""

from pathlib import Path
from typing import Sequence

from .exceptions import InvalidArgument
from .services.density import SieveSchedule
from .services.experiments import canonical_study
from .services.order_select import Penalty, parse_penalty


def validate_study(raw: str) -> str:
    if not raw or not isinstance(raw, str):
        raise InvalidArgument("Missing study name")
    return canonical_study(raw.strip().lower())


def validate_penalty_text(raw: str) -> Penalty:
    """'bic', 'loglog:C' or 'linear:<rate>'; C must be positive."""
    if not raw or not isinstance(raw, str):
        raise InvalidArgument("Missing penalty")
    return parse_penalty(raw)


def validate_sieve_text(raw: str) -> SieveSchedule:
    """
    Sieve flag forms:
    - constant:T
    - sqrt-loglog:c
    - sqrt-log-little-o:c:a
    """
    parts = [p.strip() for p in (raw or "").split(":")]
    try:
        if parts[0] == "constant" and len(parts) == 2:
            return SieveSchedule.constant(float(parts[1]))
        if parts[0] == "sqrt-loglog" and len(parts) == 2:
            return SieveSchedule(rule="sqrt-loglog", c=float(parts[1]))
        if parts[0] == "sqrt-log-little-o" and len(parts) == 3:
            return SieveSchedule(rule="sqrt-log-little-o", c=float(parts[1]), exponent=float(parts[2]))
    except ValueError as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"bad number in sieve {raw!r}") from exc
    raise InvalidArgument(f"cannot parse sieve {raw!r}; expected constant:T, sqrt-loglog:c or sqrt-log-little-o:c:a")


def validate_increasing(values: Sequence[int], name: str = "n_grid") -> None:
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidArgument(f"{name} must be strictly increasing")


def validate_data_path(raw: str) -> Path:
    if not raw:
        raise InvalidArgument("Missing --data path")
    return Path(raw).expanduser()
