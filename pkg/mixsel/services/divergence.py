"""
mixsel.services.divergence

Population integrals for location mixtures: a quadrature grid bound to a reference
density f*, and the divergences built on it.

Conventions
- h² = ∫(√f − √g)² dμ (no ½), so 0 ≤ h ≤ √2 and h² = 2(1 − BC) with BC = ∫√(fg) dμ.
- d_f = (√(f/f*) − 1)/h(f, f*), evaluated as expm1(½(log f − log f*))/h.
- ‖·‖₂ and ⟨·,·⟩ are taken in L²(f* dμ).

Grids are pure functions of their inputs and cached, so two calls with equal arguments
return the same object.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp, ndtr

from ..config import setting
from ..exceptions import DegenerateWeighting, DivergentIntegral, GridTooSmall, InvalidArgument
from .density import Dataset, LocationFamily, MixtureParams, ParamBall, eval_log_density, sample_with_rng

logger = logging.getLogger(__name__)

GRID_SCHEMES = ("uniform-grid", "tensor-gauss-hermite", "monte-carlo")
MAX_TAIL_MASS = 1e-10
_EXP_OVERFLOW = 700.0


@dataclass(frozen=True)
class GridSpec:
    scheme: str = "uniform-grid"
    step: float = 0.01
    order: int = 80
    size: int = 200_000
    seed: int = 0
    radius: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in GRID_SCHEMES:
            raise InvalidArgument(f"unknown grid scheme {self.scheme!r}; expected one of {GRID_SCHEMES}")
        if self.scheme == "uniform-grid" and not self.step > 0:
            raise InvalidArgument("grid step must be positive")
        if self.scheme == "tensor-gauss-hermite" and self.order < 2:
            raise InvalidArgument("Gauss-Hermite order must be at least 2")
        if self.scheme == "monte-carlo" and self.size < 100:
            raise InvalidArgument("Monte Carlo grids need at least 100 nodes")
        if self.radius is not None and not self.radius > 0:
            raise InvalidArgument("truncation radius must be positive")

    @classmethod
    def uniform(cls, step: float, radius: Optional[float] = None) -> "GridSpec":
        return cls(scheme="uniform-grid", step=float(step), radius=radius)

    @classmethod
    def gauss_hermite(cls, order: int, radius: Optional[float] = None) -> "GridSpec":
        return cls(scheme="tensor-gauss-hermite", order=int(order), radius=radius)

    @classmethod
    def monte_carlo(cls, size: int, seed: int) -> "GridSpec":
        return cls(scheme="monte-carlo", size=int(size), seed=int(seed))

    @classmethod
    def default_for(cls, family: LocationFamily) -> "GridSpec":
        if family.dim == 1:
            return cls.uniform(step=0.01 * family.sigma)
        if family.dim == 2:
            return cls.uniform(step=0.05 * family.sigma)
        return cls.monte_carlo(size=200_000, seed=0)

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(**{k: v for k, v in data.items() if k in {"scheme", "step", "order", "size", "seed", "radius"}})


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """
    Nodes and dμ-weights; ``Σ w·g(node)`` approximates ∫ g dμ.

    ``log_fstar`` caches log f* at the nodes, so ``expect(values)`` is ∫ g f* dμ.
    """

    nodes: np.ndarray
    weights: np.ndarray
    truncation_radius: float
    scheme: str
    fstar: MixtureParams
    family: LocationFamily
    log_fstar: np.ndarray
    tail_mass: float
    tolerance: float
    spec: GridSpec = field(default_factory=GridSpec)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def fstar_weights(self) -> np.ndarray:
        return self.weights * np.exp(self.log_fstar)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.fstar_weights, values))

    def l2_norm(self, values: np.ndarray) -> float:
        return math.sqrt(max(self.expect(np.asarray(values) ** 2), 0.0))

    def log_density(self, mix: MixtureParams) -> np.ndarray:
        if mix == self.fstar:
            return self.log_fstar
        return eval_log_density(mix, self.family, self.nodes)

    def standard_error(self, values: np.ndarray) -> float:
        """Standard error of ``integrate(values)``; zero for deterministic schemes."""
        if self.scheme != "monte-carlo":
            return 0.0
        terms = self.weights * np.asarray(values, dtype=float) * self.size
        return float(np.std(terms, ddof=1) / math.sqrt(self.size))


def _default_radius(fstar: MixtureParams, family: LocationFamily, ball: Optional[ParamBall]) -> float:
    reach = float(np.max(np.linalg.norm(fstar.locations, axis=1)))
    extra = ball.radius if ball is not None else 0.0
    return reach + extra + 10.0 * family.sigma


def tail_mass_outside_box(fstar: MixtureParams, family: LocationFamily, radius: float) -> float:
    """f*-mass outside [−R, R]^d, from Gaussian tail functions (no cancellation)."""
    s = family.sigma
    loc = fstar.locations
    per_axis = ndtr((-radius - loc) / s) + ndtr((loc - radius) / s)
    per_axis = np.clip(per_axis, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        inside_log = np.sum(np.log1p(-per_axis), axis=1)
    outside = -np.expm1(inside_log)
    return float(np.dot(fstar.weights, outside))


def _tensor(points_1d: np.ndarray, weights_1d: np.ndarray, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    mesh = np.meshgrid(*([points_1d] * dim), indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    wmesh = np.meshgrid(*([weights_1d] * dim), indexing="ij")
    weights = np.prod(np.stack([w.reshape(-1) for w in wmesh], axis=1), axis=1)
    return nodes, weights


@lru_cache(maxsize=64)
def build_grid(
    fstar: MixtureParams,
    family: LocationFamily,
    spec: Optional[GridSpec] = None,
    ball: Optional[ParamBall] = None,
    tolerance: Optional[float] = None,
) -> QuadratureGrid:
    """
    Build (and cache) the quadrature grid for integrals against dμ and f* dμ.

    Deterministic schemes refuse truncation radii leaving more than 1e-10 of f*-mass
    outside the box, and every scheme must integrate f* to 1 within ``tolerance``.
    """
    if fstar.dim != family.dim:
        raise InvalidArgument("reference mixture and family disagree on dimension")
    spec = spec or GridSpec.default_for(family)
    tol = float(tolerance if tolerance is not None else setting("MIXSEL_GRID_TOLERANCE", 1e-9))
    d = family.dim

    if spec.scheme == "monte-carlo":
        rng = np.random.default_rng(spec.seed)
        nodes = sample_with_rng(fstar, family, spec.size, rng)
        log_fs = eval_log_density(fstar, family, nodes)
        weights = np.exp(-log_fs) / spec.size
        radius = float(np.max(np.abs(nodes)))
        tail = 0.0
    else:
        radius = float(spec.radius if spec.radius is not None else _default_radius(fstar, family, ball))
        tail = tail_mass_outside_box(fstar, family, radius)
        if tail > MAX_TAIL_MASS:
            raise GridTooSmall(
                f"truncation radius {radius:g} leaves f*-mass {tail:.3e} outside the grid",
                radius=radius,
                tail_mass=tail,
            )
        if spec.scheme == "uniform-grid":
            count = int(round(2.0 * radius / spec.step)) + 1
            pts = np.linspace(-radius, radius, count)
            step = pts[1] - pts[0]
            w1 = np.full(count, step)
            w1[0] = w1[-1] = 0.5 * step
        else:
            t, w = hermegauss(spec.order)
            scale = radius / float(np.max(t))
            pts = t * scale
            w1 = w * scale * np.exp(0.5 * t * t)
        nodes, weights = _tensor(pts, w1, d)
        log_fs = eval_log_density(fstar, family, nodes)

    mass = float(np.dot(weights, np.exp(log_fs)))
    if abs(mass - 1.0) > tol + tail:
        raise GridTooSmall(
            f"grid integrates f* to {mass:.15f}; resolution too coarse for tolerance {tol:g}",
            mass=mass,
        )
    nodes.setflags(write=False)
    weights.setflags(write=False)
    log_fs = np.asarray(log_fs, dtype=float)
    log_fs.setflags(write=False)
    logger.debug("built %s grid: %d nodes, radius %.3f, tail %.2e", spec.scheme, weights.shape[0], radius, tail)
    return QuadratureGrid(
        nodes=nodes,
        weights=weights,
        truncation_radius=radius,
        scheme=spec.scheme,
        fstar=fstar,
        family=family,
        log_fstar=log_fs,
        tail_mass=tail,
        tolerance=tol,
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------


def hellinger_squared(f: MixtureParams, g: MixtureParams, grid: QuadratureGrid) -> float:
    lf = grid.log_density(f)
    lg = grid.log_density(g)
    diff = np.exp(0.5 * lf) - np.exp(0.5 * lg)
    return float(min(max(grid.integrate(diff * diff), 0.0), 2.0))


def hellinger(f: MixtureParams, g: MixtureParams, grid: QuadratureGrid) -> float:
    if f == g:
        return 0.0
    return math.sqrt(hellinger_squared(f, g, grid))


def chi_square(f: MixtureParams, fstar: MixtureParams, grid: QuadratureGrid) -> float:
    """‖f/f* − 1‖₂² in L²(f* dμ)."""
    if f == fstar:
        return 0.0
    log_ratio = grid.log_density(f) - grid.log_density(fstar)
    if not np.all(np.isfinite(log_ratio)) or float(np.max(log_ratio)) > _EXP_OVERFLOW / 2:
        raise DivergentIntegral("f/f* overflows at tail nodes; chi-square is not finite on this grid")
    excess = np.expm1(log_ratio)
    value = float(np.dot(grid.weights * np.exp(grid.log_density(fstar)), excess * excess))
    if not math.isfinite(value):
        raise DivergentIntegral("chi-square integral overflowed")
    return max(value, 0.0)


def kl(fstar: MixtureParams, f: MixtureParams, grid: QuadratureGrid) -> float:
    """D(f* ‖ f) = ∫ f* log(f*/f) dμ, cross-checked against D ≥ h²."""
    if f == fstar:
        return 0.0
    lfs = grid.log_density(fstar)
    value = float(np.dot(grid.weights * np.exp(lfs), lfs - grid.log_density(f)))
    h2 = hellinger_squared(f, fstar, grid)
    if value < h2 - 1e-9:
        logger.warning("KL cross-check failed: D=%.3e < h^2=%.3e (grid too coarse?)", value, h2)
    return max(value, 0.0)


def total_variation(f: MixtureParams, g: MixtureParams, grid: QuadratureGrid) -> float:
    """∫|f − g| dμ (the L¹ distance, between 0 and 2)."""
    return grid.integrate(np.abs(np.exp(grid.log_density(f)) - np.exp(grid.log_density(g))))


@dataclass(frozen=True, eq=False)
class WeightedDensity:
    f: MixtureParams
    fstar: MixtureParams
    grid: QuadratureGrid
    h: float

    def log_ratio(self, x) -> np.ndarray:
        family = self.grid.family
        pts = np.asarray(x, dtype=float).reshape(-1, family.dim)
        return eval_log_density(self.f, family, pts) - eval_log_density(self.fstar, family, pts)

    def __call__(self, x) -> np.ndarray:
        return np.expm1(0.5 * self.log_ratio(x)) / self.h

    @property
    def node_values(self) -> np.ndarray:
        cached = self.__dict__.get("_node_values")
        if cached is None:
            lr = self.grid.log_density(self.f) - self.grid.log_density(self.fstar)
            cached = np.expm1(0.5 * lr) / self.h
            object.__setattr__(self, "_node_values", cached)
        return cached

    def norm(self) -> float:
        return self.grid.l2_norm(self.node_values)

    def mean(self) -> float:
        """⟨1, d_f⟩ by quadrature; equals −h/2."""
        return self.grid.expect(self.node_values)


def weighted_density(f: MixtureParams, fstar: MixtureParams, grid: QuadratureGrid) -> WeightedDensity:
    h = hellinger(f, fstar, grid)
    if h <= grid.tolerance:
        raise DegenerateWeighting(f"h(f, f*) = {h:.3e} is below grid tolerance; d_f is undefined", h=h)
    return WeightedDensity(f=f, fstar=fstar, grid=grid, h=h)


def chi_square_direction_gap(f: MixtureParams, fstar: MixtureParams, grid: QuadratureGrid) -> float:
    """‖d_f − (f/f* − 1)/√χ²(f, f*)‖₂; tends to 0 as h(f, f*) → 0."""
    wd = weighted_density(f, fstar, grid)
    chi2 = chi_square(f, fstar, grid)
    lr = grid.log_density(f) - grid.log_density(fstar)
    linear = np.expm1(lr) / math.sqrt(chi2)
    return grid.l2_norm(wd.node_values - linear)


# ---------------------------------------------------------------------------
# Empirical processes
# ---------------------------------------------------------------------------


def _values(g: Callable, data: Dataset) -> np.ndarray:
    vals = np.asarray(g(data.points), dtype=float).reshape(-1)
    if vals.shape[0] != data.n:
        raise InvalidArgument("function returned the wrong number of values")
    return vals


def empirical_process(g: Callable, data: Dataset, mean_g: float) -> float:
    """ν_n(g) = n^{−1/2} Σ_k (g(X_k) − mean_g)."""
    return float(np.sum(_values(g, data) - mean_g) / math.sqrt(data.n))


def strassen_normalized(g: Callable, data: Dataset, mean_g: float) -> float:
    """I_n(g) = ν_n(g)/√(2 log log n)."""
    if data.n < 3:
        raise InvalidArgument("I_n needs n ≥ 3 so that log log n > 0")
    return empirical_process(g, data, mean_g) / math.sqrt(2.0 * math.log(math.log(data.n)))


@dataclass(frozen=True)
class LikelihoodBound:
    log_ratio: float      # ℓ_n(f) − ℓ_n(f*)
    nu_squared: float     # ν_n(d_f)²
    slack: float          # ν_n(d_f)² − (ℓ_n(f) − ℓ_n(f*)), nonnegative up to quadrature error


def likelihood_ratio_bound(f: MixtureParams, fstar: MixtureParams, data: Dataset, grid: QuadratureGrid) -> LikelihoodBound:
    family = grid.family
    wd = weighted_density(f, fstar, grid)
    log_ratio = float(np.sum(eval_log_density(f, family, data.points) - eval_log_density(fstar, family, data.points)))
    nu = empirical_process(wd, data, wd.mean())
    return LikelihoodBound(log_ratio=log_ratio, nu_squared=nu * nu, slack=nu * nu - log_ratio)


# ---------------------------------------------------------------------------
# Stacked mixtures (many f against one f*)
# ---------------------------------------------------------------------------


def batch_log_density(family: LocationFamily, weights: np.ndarray, locations: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """log f at nodes for a stack of mixtures: weights (S, q), locations (S, q, d) -> (S, m)."""
    z = nodes[None, :, None, :] - locations[:, None, :, :]
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return logsumexp(log_w[:, None, :] + family.log_f0(z), axis=-1)


def _sub_batch(grid: QuadratureGrid, weights: np.ndarray) -> int:
    return max(1, 4_000_000 // (grid.size * weights.shape[1]))


def batch_log_ratio(grid: QuadratureGrid, weights: np.ndarray, locations: np.ndarray) -> np.ndarray:
    """log(f/f*) at grid nodes for a stack of mixtures -> (S, m)."""
    sub = _sub_batch(grid, weights)
    parts = [
        batch_log_density(grid.family, weights[s:s + sub], locations[s:s + sub], grid.nodes) - grid.log_fstar[None, :]
        for s in range(0, weights.shape[0], sub)
    ]
    return np.concatenate(parts) if parts else np.empty((0, grid.size))


def batch_distances(grid: QuadratureGrid, weights: np.ndarray, locations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """h(f, f*) and ‖f − f*‖₁ for a stack of mixtures, in sub-batches of bounded memory."""
    lfs = grid.log_fstar[None, :]
    sub = _sub_batch(grid, weights)
    h_parts, l1_parts = [], []
    for start in range(0, weights.shape[0], sub):
        lf = batch_log_density(grid.family, weights[start:start + sub], locations[start:start + sub], grid.nodes)
        root = np.exp(0.5 * lf) - np.exp(0.5 * lfs)
        h_parts.append(np.sqrt(np.clip((root * root) @ grid.weights, 0.0, 2.0)))
        l1_parts.append(np.abs(np.exp(lf) - np.exp(lfs)) @ grid.weights)
    return np.concatenate(h_parts), np.concatenate(l1_parts)
