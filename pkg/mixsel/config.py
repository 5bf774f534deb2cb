"""
mixsel.config

Centralized, env-driven knobs for the mixsel tool. Merged into Django settings by
mixsel_site/settings.py via globals().update(get_mixsel_settings(...)).

ENV VARS
- MIXSEL_THREADS          (default: 1)      worker threads when --threads is absent
- MIXSEL_OUTPUT_ROOT      (default: BASE_DIR/runs)
- MIXSEL_Q_CAP            (default: 32)     hard upper limit for the order scan
- MIXSEL_DEFAULT_STARTS   (default: 20)     EM starts per fit
- MIXSEL_GRID_TOLERANCE   (default: 1e-9)   quadrature normalization tolerance
- MIXSEL_LOG_LEVEL        (default: INFO)

Invalid values never crash startup: they fall back to the default with a stderr note.

========= CHANGE LOG =========
2026-08-21 • ADD: get_mixsel_settings() + resolve_threads() helper for commands.  # CHANGED:
"""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Dict, Optional

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR"}


def _env(name: str, default: str = "") -> str:
    return (os.environ.get(name) or default).strip()


def _int_env(name: str, default: int, minimum: int = 1) -> int:
    raw = _env(name, str(default))
    try:
        value = int(raw)
    except ValueError:
        print(f"[settings_mixsel] {name}={raw!r} is not an integer; using {default}", file=sys.stderr)
        return default
    if value < minimum:
        print(f"[settings_mixsel] {name}={value} below {minimum}; using {default}", file=sys.stderr)
        return default
    return value


def _float_env(name: str, default: float) -> float:
    raw = _env(name, repr(default))
    try:
        value = float(raw)
    except ValueError:
        print(f"[settings_mixsel] {name}={raw!r} is not a number; using {default}", file=sys.stderr)
        return default
    if not value > 0:
        print(f"[settings_mixsel] {name} must be positive; using {default}", file=sys.stderr)
        return default
    return value


def get_mixsel_settings(base_dir: Path) -> Dict[str, object]:
    """
    Returns a dict of Django settings to merge into the settings module.
    """
    level = _env("MIXSEL_LOG_LEVEL", "INFO").upper()
    if level not in _LOG_LEVELS:
        print(f"[settings_mixsel] MIXSEL_LOG_LEVEL={level!r} unknown; using INFO", file=sys.stderr)
        level = "INFO"

    return {
        "MIXSEL_THREADS": _int_env("MIXSEL_THREADS", 1),
        "MIXSEL_OUTPUT_ROOT": Path(_env("MIXSEL_OUTPUT_ROOT", str(Path(base_dir) / "runs"))),
        "MIXSEL_Q_CAP": _int_env("MIXSEL_Q_CAP", 32),
        "MIXSEL_DEFAULT_STARTS": _int_env("MIXSEL_DEFAULT_STARTS", 20),
        "MIXSEL_GRID_TOLERANCE": _float_env("MIXSEL_GRID_TOLERANCE", 1e-9),
        "MIXSEL_LOG_LEVEL": level,
    }


def resolve_threads(flag_value: Optional[int]) -> int:
    """--threads flag, then MIXSEL_THREADS (already folded into settings), then 1."""
    if flag_value is not None:
        return max(1, int(flag_value))
    try:
        from django.conf import settings

        return max(1, int(getattr(settings, "MIXSEL_THREADS", 1)))
    except Exception:
        return _int_env("MIXSEL_THREADS", 1)


def setting(name: str, default):
    """Read a MIXSEL_* setting, tolerating use outside a configured Django process."""
    try:
        from django.conf import settings

        return getattr(settings, name, default)
    except Exception:
        return default
