"""
mixsel.exceptions

One hierarchy for every failure the library reports. Each class carries a short
machine code (used in logs and JSON error payloads) and the exit code the
management commands translate it into:

    2  configuration / usage (ConfigError, InvalidArgument raised while parsing flags)
    3  data (DataParseError)
    1  everything computed (grid, model, fit, entropy failures)
"""

from __future__ import annotations

from typing import Optional


class MixselError(Exception):
    code = "mixsel-error"
    exit_code = 1

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, **self.context}


class InvalidArgument(MixselError, ValueError):
    code = "invalid-argument"


class InvalidModel(MixselError, ValueError):
    code = "invalid-model"


class GridTooSmall(MixselError):
    code = "grid-too-small"


class DivergentIntegral(MixselError):
    code = "divergent"


class DegenerateWeighting(MixselError):
    code = "degenerate-weighting"


class UnsupportedFamily(MixselError):
    code = "unsupported-family"


class BallTooSmall(MixselError):
    code = "ball-too-small"


class InsufficientResolution(MixselError):
    code = "insufficient-resolution"


class ConfigError(MixselError):
    code = "config"
    exit_code = 2


class DataParseError(MixselError):
    code = "data"
    exit_code = 3

    def __init__(self, message: str, *, path: str = "", line: Optional[int] = None):
        super().__init__(message, path=path, line=line)
        self.path = path
        self.line = line

    def __str__(self) -> str:
        if self.line is not None:
            return f"{self.path}:{self.line}: {self.message}"
        return f"{self.path}: {self.message}"
