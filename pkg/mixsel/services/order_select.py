"""
mixsel.services.order_select

Penalties and the penalized likelihood order estimator

    q̂_n = argmax_q { sup_{f ∈ M_q^n} ℓ_n(f) − pen(n, q) }

with ties broken toward the smaller q. The scan over q stops at the first q_b whose
penalty gap over q = 1 exceeds n·log f₀(0) − score(1): no location mixture of a
bounded unimodal f₀ has ℓ_n above n·log f₀(0), so nothing beyond q_b can win.

Penalty mini-language (CLI):

    bic
    loglog:C                 C > 0
    linear:log | linear:loglog | linear:power:a | linear:const:c
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..config import setting
from ..exceptions import InvalidArgument
from .density import Dataset, LocationFamily, ParamBall, SieveSchedule, sieve_radius
from .likelihood import FitOptions, FitResult, extend_profile

logger = logging.getLogger(__name__)

PENALTY_VARIANTS = ("bic", "linear-q", "loglog", "eta-varpi")
RATE_KINDS = ("power", "log", "loglog", "constant")
ETA_KINDS = ("identity", "affine", "mixture-bound")

# (n, d) at which increasingness in q is verified when a penalty is built
_PROBE_N = 1000
_PROBE_DIMS = (1, 2, 3)


@dataclass(frozen=True)
class RateSpec:
    kind: str = "loglog"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise InvalidArgument(f"unknown rate {self.kind!r}; expected one of {RATE_KINDS}")
        if self.kind == "power" and not 0 < self.param < 1:
            raise InvalidArgument("power rate n^a needs 0 < a < 1")
        if self.kind == "constant" and not self.param > 0:
            raise InvalidArgument("constant rate must be positive")

    def value(self, n: float) -> float:
        if self.kind == "power":
            return float(n) ** self.param
        if self.kind == "log":
            if n < 2:
                raise InvalidArgument("log rate needs n ≥ 2")
            return math.log(n)
        if self.kind == "loglog":
            if n < 3:
                raise InvalidArgument("loglog rate needs n ≥ 3")
            return math.log(math.log(n))
        return float(self.param)

    def label(self) -> str:
        if self.kind == "power":
            return f"power:{self.param:g}"
        if self.kind == "constant":
            return f"const:{self.param:g}"
        return self.kind

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RateSpec":
        kind = data.get("kind", "loglog")
        param = data.get("a", data.get("c", data.get("param", 0.0)))
        return cls(kind=kind, param=float(param))

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "power":
            return {"kind": "power", "a": self.param}
        if self.kind == "constant":
            return {"kind": "constant", "c": self.param}
        return {"kind": self.kind}


@dataclass(frozen=True)
class EtaSpec:
    """η(q): strictly increasing with η(q) ≥ q."""

    kind: str = "identity"
    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self):
        if self.kind not in ETA_KINDS:
            raise InvalidArgument(f"unknown eta {self.kind!r}; expected one of {ETA_KINDS}")
        if self.kind == "affine" and (self.slope < 1 or self.intercept < 0):
            raise InvalidArgument("affine eta needs slope ≥ 1 and intercept ≥ 0 so that η(q) ≥ q")

    def value(self, q: int, d: int) -> float:
        if self.kind == "identity":
            return float(q)
        if self.kind == "affine":
            return self.slope * q + self.intercept
        return float(18 * (d + 1) * q + 1)

    def label(self) -> str:
        if self.kind == "affine":
            return f"affine({self.slope:g},{self.intercept:g})"
        return self.kind

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EtaSpec":
        return cls(
            kind=data.get("kind", "identity"),
            slope=float(data.get("slope", 1.0)),
            intercept=float(data.get("intercept", 0.0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "affine":
            return {"kind": "affine", "slope": self.slope, "intercept": self.intercept}
        return {"kind": self.kind}


@dataclass(frozen=True)
class Penalty:
    variant: str = "bic"
    C: Optional[float] = None
    rate: Optional[RateSpec] = None
    eta: Optional[EtaSpec] = None

    def __post_init__(self):
        if self.variant not in PENALTY_VARIANTS:
            raise InvalidArgument(f"unknown penalty {self.variant!r}; expected one of {PENALTY_VARIANTS}")
        if self.variant == "loglog" and not (self.C is not None and math.isfinite(self.C) and self.C > 0):
            raise InvalidArgument("loglog penalty needs C > 0")
        if self.variant in ("linear-q", "eta-varpi") and self.rate is None:
            raise InvalidArgument(f"{self.variant} penalty needs a rate")
        if self.variant == "eta-varpi" and self.eta is None:
            object.__setattr__(self, "eta", EtaSpec())
        for d in _PROBE_DIMS:
            values = [penalty_value(self, _PROBE_N, q, d) for q in (1, 2, 3)]
            if not values[0] < values[1] < values[2]:
                raise InvalidArgument(f"penalty {self.label} is not strictly increasing in q")

    @classmethod
    def bic(cls) -> "Penalty":
        return cls(variant="bic")

    @classmethod
    def loglog(cls, C: float) -> "Penalty":
        return cls(variant="loglog", C=float(C))

    @classmethod
    def linear(cls, rate: RateSpec) -> "Penalty":
        return cls(variant="linear-q", rate=rate)

    @property
    def label(self) -> str:
        if self.variant == "bic":
            return "bic"
        if self.variant == "loglog":
            return f"loglog:{self.C:g}"
        if self.variant == "linear-q":
            return f"linear:{self.rate.label()}"
        return f"eta-varpi:{self.eta.label()}:{self.rate.label()}"

    @classmethod
    def from_dict(cls, data: Union[str, Dict[str, Any]]) -> "Penalty":
        if isinstance(data, str):
            return parse_penalty(data)
        variant = data.get("variant", "bic")
        rate = RateSpec.from_dict(data["rate"]) if data.get("rate") else None
        eta = EtaSpec.from_dict(data["eta"]) if data.get("eta") else None
        C = data.get("C")
        return cls(variant=variant, C=None if C is None else float(C), rate=rate, eta=eta)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"variant": self.variant}
        if self.C is not None:
            out["C"] = self.C
        if self.rate is not None:
            out["rate"] = self.rate.to_dict()
        if self.eta is not None:
            out["eta"] = self.eta.to_dict()
        return out


def penalty_value(pen: Penalty, n: float, q: int, d: int) -> float:
    if q < 1:
        raise InvalidArgument("orders start at q = 1")
    if d < 1:
        raise InvalidArgument("dimension must be at least 1")
    if pen.variant == "bic":
        if n < 2:
            raise InvalidArgument("BIC needs n ≥ 2")
        return 0.5 * (d * q + q - 1) * math.log(n)
    if pen.variant == "loglog":
        if n < 3:
            raise InvalidArgument("loglog penalty needs n ≥ 3")
        return pen.C * q * math.log(math.log(n))
    if pen.variant == "linear-q":
        return q * pen.rate.value(n)
    return pen.eta.value(q, d) * pen.rate.value(n)


def parse_penalty(text: str) -> Penalty:
    parts = [p.strip() for p in str(text).strip().split(":")]
    head = parts[0].lower()
    try:
        if head == "bic" and len(parts) == 1:
            return Penalty.bic()
        if head == "loglog" and len(parts) == 2:
            return Penalty.loglog(float(parts[1]))
        if head == "linear" and len(parts) >= 2:
            kind = parts[1].lower()
            if kind in ("log", "loglog") and len(parts) == 2:
                return Penalty.linear(RateSpec(kind=kind))
            if kind == "power" and len(parts) == 3:
                return Penalty.linear(RateSpec(kind="power", param=float(parts[2])))
            if kind == "const" and len(parts) == 3:
                return Penalty.linear(RateSpec(kind="constant", param=float(parts[2])))
    except ValueError as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"bad number in penalty {text!r}") from exc
    raise InvalidArgument(f"cannot parse penalty {text!r}; expected bic, loglog:C or linear:<rate>")


def scan_bound(
    family: LocationFamily,
    pen: Penalty,
    n: int,
    d: int,
    score_1: float,
    q_cap: Optional[int] = None,
) -> int:
    """Smallest q_b with pen(n, q_b) − pen(n, 1) > n·log f₀(0) − score_1, capped at q_cap."""
    cap = int(q_cap if q_cap is not None else setting("MIXSEL_Q_CAP", 32))
    if cap < 1:
        raise InvalidArgument("q_cap must be at least 1")
    peak = family.max_log_density()
    if peak is None:
        if q_cap is None:
            raise InvalidArgument("unbounded base density: an explicit q_cap is required")
        return cap
    headroom = n * peak - score_1
    base = penalty_value(pen, n, 1, d)
    for q in range(2, cap + 1):
        if penalty_value(pen, n, q, d) - base > headroom:
            return q
    return cap


@dataclass(frozen=True)
class OrderRow:
    q: int
    score: float
    penalty: float
    criterion: float


@dataclass(frozen=True)
class OrderEstimate:
    q_hat: int
    rows: tuple
    scan_bound: int
    sieve_radius: Optional[float]
    penalty_id: str
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_hat": self.q_hat,
            "penalty": self.penalty_id,
            "n": self.n,
            "scan_bound": self.scan_bound,
            "sieve_radius": self.sieve_radius,
            "table": [row.__dict__.copy() for row in self.rows],
        }

    def format_table(self) -> str:
        lines = [f"{'q':>4}  {'score':>16}  {'penalty':>14}  {'criterion':>16}"]
        for row in self.rows:
            mark = "  <- q_hat" if row.q == self.q_hat else ""
            lines.append(f"{row.q:>4}  {row.score:>16.6f}  {row.penalty:>14.6f}  {row.criterion:>16.6f}{mark}")
        return "\n".join(lines)


def order_from_scores(
    scores: Sequence[float],
    pen: Penalty,
    n: int,
    d: int,
    bound: Optional[int] = None,
    radius: Optional[float] = None,
) -> OrderEstimate:
    """Apply ``pen`` to a shared score table (scores[q−1] = sup ℓ_n over M_q)."""
    if not scores:
        raise InvalidArgument("empty score table")
    rows: List[OrderRow] = []
    for q, score in enumerate(scores, start=1):
        p = penalty_value(pen, n, q, d)
        rows.append(OrderRow(q=q, score=float(score), penalty=p, criterion=float(score) - p))
    best = rows[0]
    for row in rows[1:]:
        if row.criterion > best.criterion:
            best = row
    return OrderEstimate(
        q_hat=best.q,
        rows=tuple(rows),
        scan_bound=int(bound if bound is not None else len(rows)),
        sieve_radius=radius,
        penalty_id=pen.label,
        n=int(n),
    )


def estimate_order(
    data: Dataset,
    family: LocationFamily,
    pen: Penalty,
    sieve: SieveSchedule,
    fit_options: Optional[FitOptions] = None,
    seed: int = 0,
    q_cap: Optional[int] = None,
) -> OrderEstimate:
    estimate, _ = estimate_order_with_fits(data, family, pen, sieve, fit_options, seed, q_cap)
    return estimate


def estimate_order_with_fits(
    data: Dataset,
    family: LocationFamily,
    pen: Penalty,
    sieve: SieveSchedule,
    fit_options: Optional[FitOptions] = None,
    seed: int = 0,
    q_cap: Optional[int] = None,
):
    if data is None or data.n < 1:
        raise InvalidArgument("cannot estimate the order of an empty dataset")
    radius = sieve_radius(sieve, data.n)
    ball = ParamBall(radius)
    fits: List[FitResult] = extend_profile([], data, family, ball, 1, fit_options, seed)
    bound = scan_bound(family, pen, data.n, data.dim, fits[0].loglik, q_cap)
    fits = extend_profile(fits, data, family, ball, bound, fit_options, seed)
    estimate = order_from_scores([f.loglik for f in fits], pen, data.n, data.dim, bound, radius)
    logger.info("order estimate: q_hat=%d (penalty %s, n=%d, scan bound %d)", estimate.q_hat, pen.label, data.n, bound)
    return estimate, fits


def write_order_table(estimate: OrderEstimate, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["q", "score", "penalty", "criterion"])
        for row in estimate.rows:
            writer.writerow([row.q, "%.17g" % row.score, "%.17g" % row.penalty, "%.17g" % row.criterion])
    return path
