"""
mixsel.services.density

Location families, mixture parameters, sampling, the parameter ball and sieve schedules.

A location mixture is f(x) = Σ_i π_i f₀(x − θ_i) on ℝ^d with Lebesgue reference measure.
Only Gaussian f₀ ships: every quantity the geometry code needs (f₀ and its first three
derivatives) has a closed form there.

Densities are never formed in raw probability space for q > 1; everything goes through
log-sum-exp so tail points do not underflow.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from ..exceptions import InvalidArgument, InvalidModel

logger = logging.getLogger(__name__)

FAMILY_KINDS = ("gaussian-standard", "gaussian-scaled")
SIEVE_RULES = ("constant", "sqrt-loglog", "sqrt-log-little-o")

WEIGHT_SUM_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Location family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocationFamily:
    """
    Gaussian location family f_θ(x) = f₀(x − θ) with f₀ = N(0, σ² I_d).

    The derivative helpers return derivatives with respect to θ, which is what the
    envelope functions need: ∂_θ f₀(x − θ) = (−1)^k D^k f₀(x − θ).
    """

    kind: str = "gaussian-standard"
    dim: int = 1
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise InvalidArgument(f"unknown family kind {self.kind!r}; expected one of {FAMILY_KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidArgument("family dimension must be a positive integer")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidArgument("sigma must be a positive real")
        if self.kind == "gaussian-standard" and self.sigma != 1.0:
            raise InvalidArgument("gaussian-standard has sigma = 1; use gaussian-scaled")

    @classmethod
    def standard(cls, dim: int = 1) -> "LocationFamily":
        return cls(kind="gaussian-standard", dim=dim, sigma=1.0)

    @classmethod
    def scaled(cls, sigma: float, dim: int = 1) -> "LocationFamily":
        return cls(kind="gaussian-scaled", dim=dim, sigma=float(sigma))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LocationFamily":
        kind = data.get("kind", "gaussian-standard")
        dim = int(data.get("dim", 1))
        if kind == "gaussian-standard":
            return cls.standard(dim)
        return cls.scaled(float(data.get("sigma", 1.0)), dim)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "dim": self.dim}
        if self.kind == "gaussian-scaled":
            out["sigma"] = self.sigma
        return out

    @property
    def is_gaussian(self) -> bool:
        return self.kind in FAMILY_KINDS

    @property
    def variance(self) -> float:
        return self.sigma * self.sigma

    @property
    def log_norm(self) -> float:
        return -0.5 * self.dim * math.log(2.0 * math.pi * self.variance)

    def max_log_density(self) -> Optional[float]:
        """log f₀(0): f₀ is bounded and unimodal with its maximum at the origin."""
        return self.log_norm

    def _as_rows(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            z = z.reshape(1, 1)
        elif z.ndim == 1:
            z = z.reshape(1, -1) if self.dim > 1 or z.shape[0] == 1 else z.reshape(-1, 1)
        if z.shape[-1] != self.dim:
            raise InvalidArgument(f"expected points with {self.dim} coordinates, got shape {z.shape}")
        return z

    def log_f0(self, z) -> np.ndarray:
        """log f₀ at rows of z (shape (..., d))."""
        z = np.asarray(z, dtype=float)
        return self.log_norm - 0.5 * np.sum(z * z, axis=-1) / self.variance

    def f0(self, z) -> np.ndarray:
        return np.exp(self.log_f0(z))

    def gradient(self, z) -> np.ndarray:
        """D₁f₀(z), shape (..., d)."""
        z = np.asarray(z, dtype=float)
        return -(z / self.variance) * self.f0(z)[..., None]

    def hessian(self, z) -> np.ndarray:
        """D₂f₀(z), shape (..., d, d)."""
        z = np.asarray(z, dtype=float)
        s2 = self.variance
        outer = z[..., :, None] * z[..., None, :] / (s2 * s2)
        eye = np.eye(self.dim) / s2
        return (outer - eye) * self.f0(z)[..., None, None]

    def third(self, z) -> np.ndarray:
        """D₃f₀(z), shape (..., d, d, d)."""
        z = np.asarray(z, dtype=float)
        s2 = self.variance
        eye = np.eye(self.dim)
        cube = z[..., :, None, None] * z[..., None, :, None] * z[..., None, None, :] / s2 ** 3
        mixed = (
            eye[:, :, None] * z[..., None, None, :]
            + eye[:, None, :] * z[..., None, :, None]
            + eye[None, :, :] * z[..., :, None, None]
        ) / (s2 * s2)
        return (mixed - cube) * self.f0(z)[..., None, None, None]

    def theta_derivative_maxabs(self, x, theta) -> np.ndarray:
        """
        max-entry magnitudes of the θ-derivatives of order 0..3 of f_θ(x), shape (..., 4).

        Sign flips from the chain rule do not matter under |·|.
        """
        z = np.asarray(x, dtype=float) - np.asarray(theta, dtype=float)
        f = self.f0(z)
        g = np.max(np.abs(self.gradient(z)), axis=-1)
        h = np.max(np.abs(self.hessian(z)).reshape(*z.shape[:-1], -1), axis=-1)
        t = np.max(np.abs(self.third(z)).reshape(*z.shape[:-1], -1), axis=-1)
        return np.stack([f, g, h, t], axis=-1)

    def sample_base(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim)) * self.sigma


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """An element of M_q: q weights on the simplex and q locations in ℝ^d."""

    weights: np.ndarray
    locations: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc.reshape(-1, 1) if loc.shape[0] == w.shape[0] else loc.reshape(1, -1)
        if w.shape[0] < 1:
            raise InvalidModel("a mixture needs at least one component")
        if loc.ndim != 2 or loc.shape[0] != w.shape[0]:
            raise InvalidModel(f"weights ({w.shape[0]}) and locations {loc.shape} disagree on q")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(loc)):
            raise InvalidModel("weights and locations must be finite")
        if np.any(w < 0):
            raise InvalidModel("weights must be nonnegative")
        if abs(float(np.sum(w)) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidModel(f"weights sum to {float(np.sum(w))!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "locations", _frozen(loc))

    @classmethod
    def build(cls, weights: Sequence[float], locations, normalize: bool = False) -> "MixtureParams":
        w = np.asarray(weights, dtype=float)
        if normalize:
            total = float(np.sum(w))
            if not total > 0:
                raise InvalidModel("cannot normalize weights with zero total")
            w = w / total
        return cls(weights=w, locations=np.asarray(locations, dtype=float))

    @classmethod
    def point_mass(cls, location) -> "MixtureParams":
        return cls(weights=np.ones(1), locations=np.asarray(location, dtype=float).reshape(1, -1))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MixtureParams":
        return cls.build(data["weights"], data["locations"])

    def to_dict(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "locations": self.locations.tolist()}

    @property
    def q(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.locations.shape[1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and self.locations.shape == other.locations.shape
            and self.weights.tobytes() == other.weights.tobytes()
            and self.locations.tobytes() == other.locations.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.weights.shape, self.locations.shape, self.weights.tobytes(), self.locations.tobytes()))

    def __repr__(self) -> str:
        return f"MixtureParams(q={self.q}, weights={self.weights.tolist()}, locations={self.locations.tolist()})"


@dataclass(frozen=True)
class ParamBall:
    """Θ(T) = {θ : ‖θ‖ ≤ T}."""

    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise InvalidArgument("ball radius must be a finite nonnegative real")

    def contains(self, theta, slack: float = 1e-12) -> bool:
        return bool(np.all(np.linalg.norm(np.atleast_2d(theta), axis=-1) <= self.radius + slack))


@dataclass(frozen=True)
class SieveSchedule:
    """
    T(n) rules:

    - constant(T)
    - sqrt-loglog(c):          c·√(ln ln n), n ≥ 3
    - sqrt-log-little-o(c, a): c·(ln n)^a with 0 < a < ½, n ≥ 2
    """

    rule: str = "constant"
    c: float = 10.0
    exponent: float = 0.4

    def __post_init__(self):
        if self.rule not in SIEVE_RULES:
            raise InvalidArgument(f"unknown sieve rule {self.rule!r}; expected one of {SIEVE_RULES}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise InvalidArgument("sieve parameter must be positive")
        if self.rule == "sqrt-log-little-o" and not (0 < self.exponent < 0.5):
            raise InvalidArgument("sqrt-log-little-o exponent must lie in (0, 1/2)")

    @classmethod
    def constant(cls, radius: float) -> "SieveSchedule":
        return cls(rule="constant", c=float(radius))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SieveSchedule":
        rule = data.get("rule", "constant")
        if rule == "constant":
            return cls.constant(float(data.get("radius", data.get("c", 10.0))))
        return cls(rule=rule, c=float(data.get("c", 1.0)), exponent=float(data.get("exponent", 0.4)))

    def to_dict(self) -> Dict[str, Any]:
        if self.rule == "constant":
            return {"rule": "constant", "radius": self.c}
        if self.rule == "sqrt-loglog":
            return {"rule": self.rule, "c": self.c}
        return {"rule": self.rule, "c": self.c, "exponent": self.exponent}


@dataclass(frozen=True)
class Provenance:
    kind: str  # "simulated" | "ingested"
    seed: Optional[int] = None
    path: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "seed": self.seed, "path": self.path}


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    provenance: Provenance = field(default_factory=lambda: Provenance(kind="simulated"))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgument("a dataset needs at least one observation")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("dataset coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def prefix(self, k: int) -> "Dataset":
        if not 1 <= k <= self.n:
            raise InvalidArgument(f"prefix length {k} outside [1, {self.n}]")
        return Dataset(points=self.points[:k], provenance=self.provenance)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.points.shape == other.points.shape and self.points.tobytes() == other.points.tobytes()

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _check_dims(mix: MixtureParams, family: LocationFamily) -> None:
    if mix.dim != family.dim:
        raise InvalidArgument(f"mixture dimension {mix.dim} does not match family dimension {family.dim}")


def component_log_terms(mix: MixtureParams, family: LocationFamily, points: np.ndarray) -> np.ndarray:
    """log π_i + log f₀(x − θ_i) for every (point, component); shape (n, q). Zero weights give −inf."""
    _check_dims(mix, family)
    pts = np.asarray(points, dtype=float)
    z = pts[:, None, :] - mix.locations[None, :, :]
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)
    return log_w[None, :] + family.log_f0(z)


def eval_log_density(mix: MixtureParams, family: LocationFamily, x) -> Union[float, np.ndarray]:
    """
    log Σ_i π_i f₀(x − θ_i).

    A single point (shape (d,) or a scalar when d = 1) returns a float; a (n, d) array
    returns a length-n array.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and (family.dim > 1 or arr.shape[0] == 1))
    pts = family._as_rows(arr) if single else (arr.reshape(-1, 1) if arr.ndim == 1 else arr)
    if pts.shape[-1] != family.dim:
        raise InvalidArgument(f"expected points with {family.dim} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidArgument("evaluation point must be finite")
    values = logsumexp(component_log_terms(mix, family, pts), axis=1)
    return float(values[0]) if single else values


def sample_with_rng(mix: MixtureParams, family: LocationFamily, n: int, rng: np.random.Generator) -> np.ndarray:
    if int(n) < 1:
        raise InvalidArgument("sample size must be at least 1")
    _check_dims(mix, family)
    labels = rng.choice(mix.q, size=int(n), p=mix.weights)
    return family.sample_base(rng, int(n)) + mix.locations[labels]


def sample(mix: MixtureParams, family: LocationFamily, n: int, seed: int) -> Dataset:
    """n i.i.d. draws: component by weight, then a location-shifted base draw."""
    rng = np.random.default_rng(seed)
    return Dataset(points=sample_with_rng(mix, family, n, rng), provenance=Provenance(kind="simulated", seed=int(seed)))


def project_to_ball(theta, ball: ParamBall) -> np.ndarray:
    """Metric projection onto {‖θ‖ ≤ T}; applies row-wise to (k, d) arrays."""
    th = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(np.atleast_1d(th), axis=-1, keepdims=th.ndim > 1)
    if ball.radius == 0:
        return np.zeros_like(th)
    scale = np.where(norms > ball.radius, ball.radius / np.where(norms > 0, norms, 1.0), 1.0)
    return th * scale


def sieve_radius(sched: SieveSchedule, n: float) -> float:
    if sched.rule == "constant":
        return float(sched.c)
    if sched.rule == "sqrt-loglog":
        if n < 3:
            raise InvalidArgument("sqrt-loglog sieve needs n ≥ 3")
        return float(sched.c * math.sqrt(math.log(math.log(n))))
    if n < 2:
        raise InvalidArgument("sqrt-log-little-o sieve needs n ≥ 2")
    return float(sched.c * math.log(n) ** sched.exponent)


def write_dataset_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    """One observation per row, d columns, no header, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in dataset.points:
            writer.writerow(["%.17g" % v for v in row])
    logger.debug("wrote %d rows to %s", dataset.n, path)
    return path


def concat(datasets: Iterable[Dataset]) -> Dataset:
    parts = [d.points for d in datasets]
    return Dataset(points=np.vstack(parts))


def uniform_in_ball(rng: np.random.Generator, shape: Sequence[int], dim: int, radius: float) -> np.ndarray:
    """Points uniform in {‖θ‖ ≤ radius}, shape (*shape, dim)."""
    direction = rng.standard_normal((*shape, dim))
    norms = np.linalg.norm(direction, axis=-1, keepdims=True)
    direction = direction / np.where(norms > 0, norms, 1.0)
    return direction * (radius * rng.uniform(size=(*shape, 1)) ** (1.0 / dim))
