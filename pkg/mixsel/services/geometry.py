"""
mixsel.services.geometry

Local geometry of location mixtures around a nondegenerate f*:

- a partition of parameter space into small balls A_1..A_{q*} around the true
  locations (plus the complement A_0), built from a random rotation so that the
  projections of the balls on every direction are disjoint;
- the pseudodistance N(f), which is two-sided equivalent to h(f, f*) near f*;
- the envelope functions H_0..H_3 (sup over the parameter ball of the θ-derivatives
  of f_θ, divided by f*) and the envelopes S and D built from them;
- the h/N ratio study and its level-set grids.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp
from scipy.stats import linregress, special_ortho_group

from ..exceptions import InvalidArgument, InvalidModel, UnsupportedFamily
from .density import LocationFamily, MixtureParams, ParamBall, eval_log_density, project_to_ball
from .divergence import GridSpec, QuadratureGrid, batch_distances, build_grid, total_variation
from .seeding import stream

logger = logging.getLogger(__name__)

MAX_ROTATION_TRIES = 64
CENTER_TOL = 1e-12
RATIO_CHUNK = 1024
QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


# ---------------------------------------------------------------------------
# Partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Partition:
    centers: np.ndarray          # (q*, d)
    center_weights: np.ndarray   # (q*,)
    radius: float                # open-ball radius; inf when q* = 1
    directions: np.ndarray       # (d, d), rows u_1..u_d
    epsilon: float               # min over directions of the smallest center-projection gap

    @property
    def q_star(self) -> int:
        return int(self.centers.shape[0])

    def assign(self, locations: np.ndarray) -> np.ndarray:
        """Index of the set containing each location: 0 for A_0, i for A_i (1-based)."""
        loc = np.asarray(locations, dtype=float)
        dist = np.linalg.norm(loc[..., :, None, :] - self.centers, axis=-1)
        inside = dist < self.radius
        return np.where(inside.any(axis=-1), np.argmax(inside, axis=-1) + 1, 0)

    def is_disjoint(self) -> bool:
        if self.q_star == 1:
            return True
        proj = self.centers @ self.directions.T
        for k in range(proj.shape[1]):
            col = np.sort(proj[:, k])
            if np.any(np.diff(col) <= 2.0 * self.radius):
                return False
        return True

    def to_dict(self) -> Dict:
        return {
            "centers": self.centers.tolist(),
            "radius": None if math.isinf(self.radius) else self.radius,
            "directions": self.directions.tolist(),
            "epsilon": None if math.isinf(self.epsilon) else self.epsilon,
        }


def _check_nondegenerate(fstar: MixtureParams) -> None:
    if np.any(fstar.weights <= 0):
        raise InvalidModel("f* must have strictly positive weights")
    if fstar.q > 1:
        diff = fstar.locations[:, None, :] - fstar.locations[None, :, :]
        dist = np.linalg.norm(diff, axis=-1) + np.eye(fstar.q) * np.inf
        if float(np.min(dist)) <= CENTER_TOL:
            raise InvalidModel("f* has duplicate component locations")


def _projection_gap(centers: np.ndarray, directions: np.ndarray) -> float:
    proj = centers @ directions.T
    gaps = []
    for k in range(proj.shape[1]):
        col = np.sort(proj[:, k])
        gaps.append(float(np.min(np.diff(col))))
    return min(gaps)


def build_partition(fstar: MixtureParams, seed: int, radius: Optional[float] = None) -> Partition:
    """
    Directions come from a random rotation, redrawn until every direction separates
    all center projections; A_i is the open ball of radius ε/4 around θ_i* unless
    ``radius`` overrides it (the override must keep projections disjoint).
    """
    _check_nondegenerate(fstar)
    d = fstar.dim
    centers = fstar.locations

    if fstar.q == 1:
        directions = np.eye(d)
        eps = math.inf
    elif d == 1:
        directions = np.ones((1, 1))
        eps = _projection_gap(centers, directions)
    else:
        rng = np.random.default_rng(seed)
        for attempt in range(MAX_ROTATION_TRIES):
            directions = special_ortho_group.rvs(d, random_state=rng)
            eps = _projection_gap(centers, directions)
            if eps > CENTER_TOL:
                break
            logger.debug("rotation %d left coincident projections; redrawing", attempt)
        else:
            raise InvalidModel(f"no separating rotation found in {MAX_ROTATION_TRIES} draws")

    ball_radius = eps / 4.0 if radius is None else float(radius)
    if not ball_radius > 0:
        raise InvalidArgument("partition radius must be positive")
    part = Partition(
        centers=centers,
        center_weights=fstar.weights,
        radius=ball_radius,
        directions=np.asarray(directions, dtype=float),
        epsilon=eps,
    )
    if not part.is_disjoint():
        raise InvalidArgument(f"radius {ball_radius:g} makes the projected balls overlap (ε = {eps:g})")
    return part


def pseudodistance_batch(weights: np.ndarray, locations: np.ndarray, part: Partition) -> np.ndarray:
    """N for a stack of mixtures: weights (S, q), locations (S, q, d) -> (S,)."""
    w = np.asarray(weights, dtype=float)
    loc = np.asarray(locations, dtype=float)
    idx = part.assign(loc)
    total = np.sum(np.where(idx == 0, w, 0.0), axis=-1)
    for i in range(part.q_star):
        mask = np.where(idx == i + 1, w, 0.0)
        shift = loc - part.centers[i]
        mass = np.sum(mask, axis=-1)
        first = np.linalg.norm(np.sum(mask[..., None] * shift, axis=-2), axis=-1)
        second = 0.5 * np.sum(mask * np.sum(shift * shift, axis=-1), axis=-1)
        total = total + np.abs(mass - part.center_weights[i]) + first + second
    return total


def pseudodistance(f: MixtureParams, fstar: MixtureParams, part: Partition) -> float:
    if f.dim != fstar.dim:
        raise InvalidArgument("mixtures disagree on dimension")
    return float(pseudodistance_batch(f.weights[None, :], f.locations[None, :, :], part)[0])


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def _ray_directions(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    unit = np.zeros_like(x)
    unit[:, 0] = 1.0
    return np.where(norms > 0, x / np.where(norms > 0, norms, 1.0), unit)


def _envelope_log_sup(
    family: LocationFamily,
    x: np.ndarray,
    radius: float,
    ray_points: int = 129,
    refine: bool = True,
    chunk: int = 2048,
) -> np.ndarray:
    """
    log sup_θ m_k(x, θ) for k = 0..3, shape (m, 4), where m_k is the largest entry
    magnitude of the k-th θ-derivative of f_θ(x).

    k = 0 is exact (the Gaussian peak sits at the projection of x onto the ball);
    k ≥ 1 searches θ = t·x/‖x‖, t ∈ [−T, T], on a coarse grid and then refines
    interior maxima with bracketed golden-section search.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ball = ParamBall(radius)
    out = np.empty((x.shape[0], 4))
    with np.errstate(divide="ignore"):
        out[:, 0] = family.log_f0(x - project_to_ball(x, ball))
    if radius == 0:
        vals = family.theta_derivative_maxabs(x, np.zeros_like(x))
        with np.errstate(divide="ignore"):
            out[:, 1:] = np.log(vals[:, 1:])
        return out

    t = np.linspace(-radius, radius, ray_points)
    for start in range(0, x.shape[0], chunk):
        xs = x[start:start + chunk]
        u = _ray_directions(xs)
        thetas = t[None, :, None] * u[:, None, :]
        vals = family.theta_derivative_maxabs(xs[:, None, :], thetas)  # (c, P, 4)
        for k in (1, 2, 3):
            best = np.argmax(vals[:, :, k], axis=1)
            sup = vals[np.arange(xs.shape[0]), best, k]
            if refine:
                for row in range(xs.shape[0]):
                    b = int(best[row])
                    if b == 0 or b == ray_points - 1 or sup[row] <= 0:
                        continue
                    xr, ur = xs[row], u[row]

                    def negative(tt, xr=xr, ur=ur, k=k):
                        return -float(family.theta_derivative_maxabs(xr, tt * ur)[k])

                    try:
                        res = minimize_scalar(negative, bracket=(t[b - 1], t[b], t[b + 1]), method="golden")
                    except (ValueError, RuntimeError):
                        continue
                    if abs(res.x) <= radius and -res.fun > sup[row]:
                        sup[row] = -res.fun
            with np.errstate(divide="ignore"):
                out[start:start + xs.shape[0], k] = np.log(sup)
    return out


@dataclass(frozen=True, eq=False)
class EnvelopeSet:
    family: LocationFamily
    fstar: MixtureParams
    ball: ParamBall
    grid: QuadratureGrid
    log_sup_nodes: np.ndarray   # (m, 4) log sup_θ m_k at grid nodes
    norms: Dict[str, float]     # h0_4, h1_4, h2_4, h3_2
    ray_points: int = 129

    @property
    def assumption_a(self) -> bool:
        return all(math.isfinite(v) for v in self.norms.values())

    def node_values(self) -> np.ndarray:
        """H_k at grid nodes, shape (m, 4)."""
        return np.exp(self.log_sup_nodes - self.grid.log_fstar[:, None])

    def evaluate(self, x) -> np.ndarray:
        """H_0..H_3 at arbitrary points, shape (k, 4)."""
        pts = np.asarray(x, dtype=float).reshape(-1, self.family.dim)
        log_sup = _envelope_log_sup(self.family, pts, self.ball.radius, self.ray_points)
        return np.exp(log_sup - eval_log_density(self.fstar, self.family, pts)[:, None])


def _log_weighted_norm(grid: QuadratureGrid, log_values: np.ndarray, power: int) -> float:
    """log ‖exp(log_values)‖_p in L^p(f* dμ), computed without forming large values."""
    with np.errstate(divide="ignore"):
        log_w = np.log(grid.weights)
    total = logsumexp(power * log_values + grid.log_fstar + log_w)
    return float(total / power)


def build_envelopes(
    fstar: MixtureParams,
    family: LocationFamily,
    ball: ParamBall,
    grid: QuadratureGrid,
    ray_points: int = 129,
    refine: bool = True,
) -> EnvelopeSet:
    if not family.is_gaussian:
        raise UnsupportedFamily(f"envelopes need a closed-form sup; family {family.kind!r} is not supported")
    log_sup = _envelope_log_sup(family, grid.nodes, ball.radius, ray_points=ray_points, refine=refine)
    log_h = log_sup - grid.log_fstar[:, None]
    norms = {}
    for key, k, p in (("h0_4", 0, 4), ("h1_4", 1, 4), ("h2_4", 2, 4), ("h3_2", 3, 2)):
        log_norm = _log_weighted_norm(grid, log_h[:, k], p)
        norms[key] = math.exp(log_norm) if math.isfinite(log_norm) and log_norm < 700 else math.inf
    env = EnvelopeSet(family=family, fstar=fstar, ball=ball, grid=grid, log_sup_nodes=log_sup, norms=norms, ray_points=ray_points)
    if not env.assumption_a:
        logger.warning("Assumption A check failed: envelope norms %s", norms)
    else:
        logger.info("envelope norms (T=%.3g): %s", ball.radius, {k: round(v, 6) for k, v in norms.items()})
    return env


@dataclass(frozen=True, eq=False)
class EnvelopeBounds:
    """S = (H_0 + H_1 + H_2)·d/c* and D = 2S."""

    env: EnvelopeSet
    cstar: float

    def S(self, x) -> np.ndarray:
        h = self.env.evaluate(x)
        return (h[:, 0] + h[:, 1] + h[:, 2]) * self.env.family.dim / self.cstar

    def D(self, x) -> np.ndarray:
        return 2.0 * self.S(x)

    def s_norm4(self) -> float:
        h = self.env.node_values()
        s = (h[:, 0] + h[:, 1] + h[:, 2]) * self.env.family.dim / self.cstar
        return float(self.env.grid.expect(s ** 4) ** 0.25)

    def check_s_bound(self, f: MixtureParams, x) -> np.ndarray:
        """|f/f* − 1|/‖f/f* − 1‖₁ − S(x) at the given points; ≤ 0 where the bound holds."""
        pts = np.asarray(x, dtype=float).reshape(-1, self.env.family.dim)
        ratio = np.expm1(eval_log_density(f, self.env.family, pts) - eval_log_density(self.env.fstar, self.env.family, pts))
        l1 = total_variation(f, self.env.fstar, self.env.grid)
        return np.abs(ratio) / l1 - self.S(pts)

    def check_d_bound(self, weighted, x) -> np.ndarray:
        """|d_f(x)| − D(x); ≤ 0 where the bound holds."""
        pts = np.asarray(x, dtype=float).reshape(-1, self.env.family.dim)
        return np.abs(weighted(pts)) - self.D(pts)


def envelope_S_D(env: EnvelopeSet, cstar: float) -> EnvelopeBounds:
    if not (math.isfinite(cstar) and cstar > 0):
        raise InvalidArgument("c* must be a positive real")
    return EnvelopeBounds(env=env, cstar=float(cstar))


@dataclass(frozen=True)
class EnvelopeGrowth:
    rows: Tuple[Tuple[float, float, float, float, float], ...]  # (T, ‖H0‖4, ‖H1‖4, ‖H2‖4, ‖H3‖2)
    slope: float        # C in log max‖H‖ ≈ C·T² + b
    intercept: float
    r2: float


def envelope_norm_growth(
    fstar: MixtureParams,
    family: LocationFamily,
    radii: Sequence[float],
    spec: Optional[GridSpec] = None,
    ray_points: int = 65,
) -> EnvelopeGrowth:
    """Envelope norms across ball radii; Gaussian mixtures grow like e^{C T²}."""
    if len(radii) < 2:
        raise InvalidArgument("need at least two radii to fit a growth rate")
    rows = []
    for T in sorted(float(r) for r in radii):
        ball = ParamBall(T)
        grid = build_grid(fstar, family, spec, ball)
        env = build_envelopes(fstar, family, ball, grid, ray_points=ray_points)
        n = env.norms
        rows.append((T, n["h0_4"], n["h1_4"], n["h2_4"], n["h3_2"]))
    arr = np.asarray(rows)
    fit = linregress(arr[:, 0] ** 2, np.log(np.max(arr[:, 1:], axis=1)))
    return EnvelopeGrowth(rows=tuple(map(tuple, rows)), slope=float(fit.slope), intercept=float(fit.intercept), r2=float(fit.rvalue ** 2))


# ---------------------------------------------------------------------------
# Ratio study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerBox:
    """
    Uniform box over (π_1..π_{q−1}, θ_1..θ_q); π_q = 1 − Σ π_i, and draws with π_q < 0
    are rejected.
    """

    q: int
    dim: int
    weight_low: float = 0.0
    weight_high: float = 1.0
    theta_low: float = 0.0
    theta_high: float = 1.0

    def __post_init__(self):
        if self.q < 1 or self.dim < 1:
            raise InvalidArgument("sampler box needs q ≥ 1 and d ≥ 1")
        if not (0.0 <= self.weight_low <= self.weight_high <= 1.0):
            raise InvalidArgument("weight range must sit inside [0, 1]")
        if not self.theta_low <= self.theta_high:
            raise InvalidArgument("theta range is empty")

    @property
    def n_weight_axes(self) -> int:
        return self.q - 1

    @property
    def n_axes(self) -> int:
        return self.q - 1 + self.q * self.dim

    def axis_names(self) -> List[str]:
        if self.q == 2:
            names = ["p"]
        else:
            names = [f"p{i + 1}" for i in range(self.q - 1)]
        return names + [f"theta{j + 1}" for j in range(self.q * self.dim)]

    def lows(self) -> np.ndarray:
        return np.array([self.weight_low] * (self.q - 1) + [self.theta_low] * (self.q * self.dim))

    def highs(self) -> np.ndarray:
        return np.array([self.weight_high] * (self.q - 1) + [self.theta_high] * (self.q * self.dim))

    def unpack(self, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        coords = np.atleast_2d(coords)
        p = coords[:, : self.q - 1]
        weights = np.concatenate([p, 1.0 - np.sum(p, axis=1, keepdims=True)], axis=1)
        locations = coords[:, self.q - 1:].reshape(-1, self.q, self.dim)
        return weights, locations

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        rows: List[np.ndarray] = []
        have = 0
        while have < count:
            cand = rng.uniform(self.lows(), self.highs(), size=(max(count - have, 16), self.n_axes))
            weights, _ = self.unpack(cand)
            keep = cand[weights[:, -1] >= 0]
            rows.append(keep)
            have += keep.shape[0]
        return np.concatenate(rows)[:count]

    def shrink_toward(self, center: np.ndarray, factor: float) -> "SamplerBox":
        """Box scaled by ``factor`` about ``center`` (scalar weight and theta centers)."""
        w_c, t_c = float(center[0]), float(center[1])
        w_half = 0.5 * (self.weight_high - self.weight_low) * factor
        t_half = 0.5 * (self.theta_high - self.theta_low) * factor
        return SamplerBox(
            q=self.q,
            dim=self.dim,
            weight_low=max(0.0, w_c - w_half),
            weight_high=min(1.0, w_c + w_half),
            theta_low=t_c - t_half,
            theta_high=t_c + t_half,
        )


@dataclass
class GeometryReport:
    n_samples: int
    excluded: int
    axis_names: List[str]
    samples: np.ndarray          # (S, axes) parameter coordinates
    h: np.ndarray
    N: np.ndarray
    l1: np.ndarray
    r_min: float
    r_max: float
    quantiles: Dict[str, float]
    l1_ratio_min: float
    l1_ratio_max: float
    levelsets: Dict[str, np.ndarray] = field(default_factory=dict)   # "coords", "h", "N"
    epsilons: Tuple[float, ...] = ()
    sandwich: Dict[str, bool] = field(default_factory=dict)
    sandwich_violations: Dict[str, int] = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.N > 0, self.h / np.where(self.N > 0, self.N, 1.0), np.nan)

    @property
    def cstar(self) -> float:
        """Empirical c*: the smallest ‖f − f*‖₁/N seen."""
        return self.l1_ratio_min

    def summary(self) -> Dict:
        return {
            "n_samples": self.n_samples,
            "excluded": self.excluded,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "quantiles": self.quantiles,
            "l1_ratio_min": self.l1_ratio_min,
            "l1_ratio_max": self.l1_ratio_max,
            "sandwich": self.sandwich,
            "sandwich_violations": self.sandwich_violations,
        }

    def write(self, out_dir: Path) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        path = out_dir / "ratios.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.axis_names + ["h", "N", "ratio"])
            ratio = self.ratio
            for row, hv, nv, rv in zip(self.samples, self.h, self.N, ratio):
                writer.writerow(["%.10g" % v for v in row] + ["%.10g" % hv, "%.10g" % nv, "" if np.isnan(rv) else "%.10g" % rv])
        written.append(path)
        if self.levelsets:
            coords = self.levelsets["coords"]
            for kind in ("h", "N"):
                values = self.levelsets[kind]
                path = out_dir / f"levelset_{kind}.csv"
                with path.open("w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(self.axis_names + [f"eps_{eps:g}" for eps in self.epsilons])
                    for row, v in zip(coords, values):
                        writer.writerow(["%.6g" % c for c in row] + [int(v <= eps) for eps in self.epsilons])
                written.append(path)
        return written


def _chunk_counts(total: int, size: int) -> List[int]:
    return [min(size, total - start) for start in range(0, total, size)]


def ratio_study(
    fstar: MixtureParams,
    family: LocationFamily,
    part: Partition,
    box: SamplerBox,
    n_samples: int,
    seed: int,
    grid: Optional[QuadratureGrid] = None,
    epsilons: Sequence[float] = (),
    levelset_resolution: int = 101,
    threads: int = 1,
    progress: Optional[Callable[[int], None]] = None,
) -> GeometryReport:
    """
    Sample (π, θ) uniformly in ``box`` and compare h(f, f*) with N(f).

    Draws are split into fixed-size chunks, chunk c drawing from stream(seed, "ratio-study", c),
    so the report does not depend on ``threads``. Samples with N = 0 are excluded from the
    ratio and counted. With ``epsilons`` and at most three box axes, membership grids of
    {h ≤ ε} and {N ≤ ε} are evaluated at ``levelset_resolution`` points per axis.
    """
    if n_samples < 1000:
        raise InvalidArgument("ratio study needs at least 10^3 samples")
    if box.dim != fstar.dim:
        raise InvalidArgument("sampler box and f* disagree on dimension")
    if grid is None:
        grid = build_grid(fstar, family, None, ParamBall(max(abs(box.theta_low), abs(box.theta_high))))

    def run_chunk(index_count):
        index, count = index_count
        rng = stream(seed, "ratio-study", index)
        coords = box.draw(rng, count)
        weights, locations = box.unpack(coords)
        h, l1 = batch_distances(grid, weights, locations)
        n_val = pseudodistance_batch(weights, locations, part)
        if progress:
            progress(count)
        return coords, h, n_val, l1

    jobs = list(enumerate(_chunk_counts(n_samples, RATIO_CHUNK)))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(run_chunk, jobs))

    samples = np.concatenate([p[0] for p in parts])
    h = np.concatenate([p[1] for p in parts])
    n_val = np.concatenate([p[2] for p in parts])
    l1 = np.concatenate([p[3] for p in parts])

    degenerate = n_val <= CENTER_TOL
    if np.any(degenerate & (h > 1e-9)):
        logger.warning("%d samples have N = 0 but h > 0", int(np.sum(degenerate & (h > 1e-9))))
    keep = ~degenerate
    ratio = h[keep] / n_val[keep]
    l1_ratio = l1[keep] / n_val[keep]
    if ratio.size == 0:
        raise InvalidArgument("every sample was excluded (N = 0)")
    quant = {f"q{int(round(100 * a)):02d}": float(np.quantile(ratio, a)) for a in QUANTILES}
    report = GeometryReport(
        n_samples=int(n_samples),
        excluded=int(np.sum(degenerate)),
        axis_names=box.axis_names(),
        samples=samples,
        h=h,
        N=n_val,
        l1=l1,
        r_min=float(np.min(ratio)),
        r_max=float(np.max(ratio)),
        quantiles=quant,
        l1_ratio_min=float(np.min(l1_ratio)),
        l1_ratio_max=float(np.max(l1_ratio)),
    )
    if epsilons and box.n_axes <= 3:
        _attach_levelsets(report, grid, family, part, box, tuple(float(e) for e in epsilons), levelset_resolution, threads)
    elif epsilons:
        logger.info("level sets skipped: box has %d axes (at most 3 supported)", box.n_axes)
    logger.info("ratio study: r_min=%.4g r_max=%.4g excluded=%d", report.r_min, report.r_max, report.excluded)
    return report


def _attach_levelsets(report, grid, family, part, box: SamplerBox, epsilons, resolution: int, threads: int) -> None:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lows(), box.highs())]
    coords = np.array(list(itertools.product(*axes)))
    weights, locations = box.unpack(coords)
    valid = weights[:, -1] >= -1e-12
    coords, weights, locations = coords[valid], np.clip(weights[valid], 0.0, None), locations[valid]

    def run(start):
        sl = slice(start, start + RATIO_CHUNK)
        h, _ = batch_distances(grid, weights[sl], locations[sl])
        return h, pseudodistance_batch(weights[sl], locations[sl], part)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        chunks = list(pool.map(run, range(0, coords.shape[0], RATIO_CHUNK)))
    h = np.concatenate([c[0] for c in chunks])
    n_val = np.concatenate([c[1] for c in chunks])

    report.levelsets = {"coords": coords, "h": h, "N": n_val}
    report.epsilons = epsilons
    for eps in epsilons:
        holds, violations = levelset_sandwich(h, n_val, eps, report.r_min, report.r_max)
        report.sandwich[f"{eps:g}"] = holds
        report.sandwich_violations[f"{eps:g}"] = violations
        if not holds:
            logger.info("level-set sandwich at ε=%g broken at %d grid point(s)", eps, violations)


def levelset_sandwich(h: np.ndarray, n_val: np.ndarray, eps: float, r_lo: float, r_hi: float) -> Tuple[bool, int]:
    """
    Check {N ≤ ε/r_hi} ⊆ {h ≤ ε} ⊆ {N ≤ ε/r_lo} on grid values, with r_lo, r_hi the
    ratio bounds seen in the random samples. Returns (holds, number of violating points).
    """
    if not (r_lo > 0 and r_hi >= r_lo):
        raise InvalidArgument("ratio bounds need 0 < r_lo ≤ r_hi")
    in_h = h <= eps
    inner = n_val <= eps / r_hi
    outer = n_val <= eps / r_lo
    violations = int(np.sum(inner & ~in_h) + np.sum(in_h & ~outer))
    return violations == 0, violations
