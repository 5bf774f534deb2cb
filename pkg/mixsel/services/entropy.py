"""
mixsel.services.entropy

Empirical entropy of mixture classes in L²(f* dμ).

Bracketing numbers are not computable, so packing numbers of sampled function clouds
stand in for them. A maximal δ-packing is a δ-cover and fits inside a δ/2-cover, so
every comparison with a bracketing bound carries a factor-2 slack in the width.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import linregress

from ..exceptions import BallTooSmall, InsufficientResolution, InvalidArgument
from .density import LocationFamily, MixtureParams, ParamBall, uniform_in_ball
from .divergence import QuadratureGrid, batch_log_ratio
from .seeding import stream

logger = logging.getLogger(__name__)

CLASS_KINDS = ("hellinger-ball", "weighted-class")
CANDIDATE_CHUNK = 4096
MIN_ACCEPTANCE = 1e-4
MIN_DRAWS_BEFORE_GIVING_UP = 100_000
PACKING_SLACK = 2.0


def exponent_upper_bound(q: int, d: int) -> int:
    """18(d+1)q + 1, the exponent of the known local entropy bound for location mixtures."""
    return 18 * (d + 1) * q + 1


@dataclass(frozen=True, eq=False)
class FunctionCloud:
    values: np.ndarray        # (M, m) function values at grid nodes
    norm_weights: np.ndarray  # (m,) f* dμ weights
    weights: np.ndarray       # (M, q) generating mixture weights
    locations: np.ndarray     # (M, q, d) generating locations
    hellinger: np.ndarray     # (M,) h(f, f*) of each generating mixture
    kind: str
    q: int
    epsilon: Optional[float]
    acceptance: float

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    def params(self, row: int) -> MixtureParams:
        return MixtureParams(weights=self.weights[row], locations=self.locations[row])

    def row_norms(self) -> np.ndarray:
        return np.sqrt((self.values ** 2) @ self.norm_weights)

    def distance_matrix(self) -> np.ndarray:
        cached = self.__dict__.get("_distances")
        if cached is None:
            scaled = self.values * np.sqrt(self.norm_weights)[None, :]
            cached = squareform(pdist(scaled)) if self.size > 1 else np.zeros((1, 1))
            object.__setattr__(self, "_distances", cached)
        return cached

    def restrict(self, mask: np.ndarray, epsilon: Optional[float] = None) -> "FunctionCloud":
        """Sub-cloud keeping row order (used for nested Hellinger balls)."""
        return FunctionCloud(
            values=self.values[mask],
            norm_weights=self.norm_weights,
            weights=self.weights[mask],
            locations=self.locations[mask],
            hellinger=self.hellinger[mask],
            kind=self.kind,
            q=self.q,
            epsilon=self.epsilon if epsilon is None else epsilon,
            acceptance=self.acceptance,
        )


def _draw_candidates(rng: np.random.Generator, q: int, d: int, radius: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    weights = rng.dirichlet(np.ones(q), size=count)
    return weights, uniform_in_ball(rng, (count, q), d, radius)


def sample_class(
    q: int,
    kind: str,
    fstar: MixtureParams,
    family: LocationFamily,
    ball: ParamBall,
    epsilon: Optional[float],
    n_functions: int,
    seed: int,
    grid: QuadratureGrid,
    threads: int = 1,
) -> FunctionCloud:
    """
    Rejection-sample mixtures uniformly over simplex × Θ^q.

    hellinger-ball keeps h(f, f*) ≤ ε and stores √(f/f*); weighted-class keeps every
    f ≠ f* and stores d_f. Candidates come in fixed chunks, chunk c drawing from
    stream(seed, "entropy-cloud", c), and accepted rows are taken in chunk order, so
    the cloud does not depend on ``threads``.
    """
    if kind not in CLASS_KINDS:
        raise InvalidArgument(f"unknown class kind {kind!r}; expected one of {CLASS_KINDS}")
    if q < 1:
        raise InvalidArgument("q must be at least 1")
    if n_functions < 100:
        raise InvalidArgument("a function cloud needs at least 100 functions")
    if kind == "hellinger-ball" and not (epsilon is not None and epsilon > 0):
        raise InvalidArgument("hellinger-ball clouds need ε > 0")
    d = family.dim

    def run_chunk(index: int):
        rng = stream(seed, "entropy-cloud", index)
        weights, locations = _draw_candidates(rng, q, d, ball.radius, CANDIDATE_CHUNK)
        log_ratio = batch_log_ratio(grid, weights, locations)
        root = np.exp(0.5 * log_ratio)
        h = np.sqrt(np.clip(((root - 1.0) ** 2) @ grid.fstar_weights, 0.0, 2.0))
        if kind == "hellinger-ball":
            keep = h <= epsilon
            rows = root[keep]
        else:
            keep = h > grid.tolerance
            rows = np.expm1(0.5 * log_ratio[keep]) / h[keep, None]
        return rows, weights[keep], locations[keep], h[keep]

    accepted: List[Tuple[np.ndarray, ...]] = []
    have = drawn = 0
    next_index = 0
    workers = max(1, threads)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while have < n_functions:
            indices = list(range(next_index, next_index + workers))
            next_index += workers
            # chunks are consumed in index order; the give-up test runs after each one
            for part in pool.map(run_chunk, indices):
                if have >= n_functions:
                    break
                accepted.append(part)
                have += part[0].shape[0]
                drawn += CANDIDATE_CHUNK
                if have < n_functions and drawn >= MIN_DRAWS_BEFORE_GIVING_UP and have / drawn < MIN_ACCEPTANCE:
                    raise BallTooSmall(
                        f"acceptance {have}/{drawn} below {MIN_ACCEPTANCE:g}; ε = {epsilon} is unreachable by rejection",
                        acceptance=have / drawn,
                        drawn=drawn,
                    )

    values = np.concatenate([a[0] for a in accepted])[:n_functions]
    cloud = FunctionCloud(
        values=values,
        norm_weights=grid.fstar_weights,
        weights=np.concatenate([a[1] for a in accepted])[:n_functions],
        locations=np.concatenate([a[2] for a in accepted])[:n_functions],
        hellinger=np.concatenate([a[3] for a in accepted])[:n_functions],
        kind=kind,
        q=q,
        epsilon=epsilon,
        acceptance=have / drawn,
    )
    logger.debug("sampled %s cloud q=%d eps=%s: %d rows, acceptance %.4g", kind, q, epsilon, cloud.size, cloud.acceptance)
    return cloud


def greedy_packing(cloud: FunctionCloud, delta: float) -> int:
    """Size of a maximal δ-separated subset, scanning rows in order."""
    if not delta > 0:
        raise InvalidArgument("δ must be positive")
    dist = cloud.distance_matrix()
    blocked = np.zeros(cloud.size, dtype=bool)
    count = 0
    for i in range(cloud.size):
        if blocked[i]:
            continue
        count += 1
        blocked |= dist[i] <= delta
    return count


def greedy_covering(cloud: FunctionCloud, delta: float) -> int:
    """
    Number of closed δ-balls (centered at cloud rows) covering the cloud: the smaller
    of a greedy max-coverage set cover and the greedy packing, which is itself a cover.
    """
    if not delta > 0:
        raise InvalidArgument("δ must be positive")
    covers = cloud.distance_matrix() <= delta
    counts = covers.sum(axis=1)
    uncovered = np.ones(cloud.size, dtype=bool)
    picks = 0
    while uncovered.any():
        j = int(np.argmax(counts))
        newly = covers[j] & uncovered
        counts = counts - covers[:, newly].sum(axis=1)
        uncovered &= ~newly
        picks += 1
    return min(picks, greedy_packing(cloud, delta))


@dataclass(frozen=True)
class PackingResult:
    deltas: Tuple[float, ...]
    counts: Tuple[int, ...]
    order_seed: int
    cloud_size: int


@dataclass(frozen=True)
class ExponentFit:
    eta_hat: float
    log_k_hat: float
    r2: float
    residual: float
    delta_range: Tuple[float, float]
    points: int


@dataclass(frozen=True)
class EntropyCurve:
    q: int
    epsilon: float
    packing: PackingResult
    fit: ExponentFit
    bound_exceeded: bool


def packing_counts(cloud: FunctionCloud, deltas: Sequence[float]) -> Tuple[int, ...]:
    """
    Greedy packing counts, made nonincreasing in δ: a δ'-packing is also a δ-packing for
    δ < δ', so the count at δ is the best over all δ' ≥ δ.
    """
    raw = [greedy_packing(cloud, float(dlt)) for dlt in deltas]
    order = np.argsort(deltas)[::-1]
    best = 0
    out = [0] * len(raw)
    for idx in order:
        best = max(best, raw[idx])
        out[idx] = best
    return tuple(out)


def _check_geometric(deltas: Sequence[float], epsilon: float) -> None:
    arr = np.asarray(deltas, dtype=float)
    if arr.size < 2:
        raise InvalidArgument("δ-grid needs at least two points")
    if np.any(arr <= 0) or np.any(arr > epsilon * (1 + 1e-12)):
        raise InvalidArgument("δ-grid must lie in (0, ε]")
    ratios = arr[1:] / arr[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise InvalidArgument("δ-grid must be geometrically spaced")


def geometric_deltas(epsilon: float, smallest_fraction: float, points: int) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(epsilon * smallest_fraction, epsilon, points))


def fit_exponent(deltas: Sequence[float], counts: Sequence[int], epsilon: float, cloud_size: int) -> ExponentFit:
    """log M(δ) ≈ η̂·log(ε/δ) + log K̂ over the points below saturation."""
    d_arr = np.asarray(deltas, dtype=float)
    c_arr = np.asarray(counts, dtype=float)
    usable = c_arr < cloud_size
    if usable.sum() < 4 or np.unique(c_arr[usable]).size < 2:
        raise InsufficientResolution(
            f"only {int(usable.sum())} unsaturated δ-points with distinct counts; refine the δ-grid or enlarge the cloud"
        )
    x = np.log(epsilon / d_arr[usable])
    y = np.log(c_arr[usable])
    fit = linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    return ExponentFit(
        eta_hat=float(fit.slope),
        log_k_hat=float(fit.intercept),
        r2=float(fit.rvalue ** 2),
        residual=float(np.sqrt(np.mean(resid ** 2))),
        delta_range=(float(d_arr[usable].min()), float(d_arr[usable].max())),
        points=int(usable.sum()),
    )


def entropy_curve(
    cloud: FunctionCloud,
    deltas: Sequence[float],
    epsilon: Optional[float] = None,
    order_seed: int = 0,
) -> EntropyCurve:
    eps = float(epsilon if epsilon is not None else cloud.epsilon)
    _check_geometric(deltas, eps)
    if np.allclose(cloud.values, cloud.values[0]):
        raise InsufficientResolution("all functions in the cloud are identical")
    counts = packing_counts(cloud, deltas)
    fit = fit_exponent(deltas, counts, eps, cloud.size)
    d = cloud.locations.shape[-1]
    bound = exponent_upper_bound(cloud.q, d)
    exceeded = fit.eta_hat > bound
    if exceeded:
        logger.warning("entropy exponent %.3f exceeds the bound %d for q=%d, d=%d", fit.eta_hat, bound, cloud.q, d)
    return EntropyCurve(
        q=cloud.q,
        epsilon=eps,
        packing=PackingResult(deltas=tuple(float(v) for v in deltas), counts=counts, order_seed=order_seed, cloud_size=cloud.size),
        fit=fit,
        bound_exceeded=exceeded,
    )


def packing_sandwich(cloud: FunctionCloud, delta: float) -> Dict[str, int]:
    """covering(δ) ≤ packing(δ) ≤ covering(δ/2)."""
    return {
        "covering": greedy_covering(cloud, delta),
        "packing": greedy_packing(cloud, delta),
        "covering_half": greedy_covering(cloud, delta / 2.0),
    }


def nested_ball_counts(cloud: FunctionCloud, epsilons: Sequence[float], delta: float) -> Dict[float, int]:
    """M(ℋ(ε), δ) for nested sub-balls of one cloud; nondecreasing in ε."""
    out: Dict[float, int] = {}
    best = 0
    for eps in sorted(float(e) for e in epsilons):
        mask = cloud.hellinger <= eps
        count = greedy_packing(cloud.restrict(mask, eps), delta) if mask.any() else 0
        best = max(best, count)
        out[eps] = best
    return out


# ---------------------------------------------------------------------------
# Local-from-global check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalGlobalReport:
    q: int
    delta: float
    rho: float
    r_norm: float
    c0: float
    exponent: float
    eps0: float
    c1: float
    packing: int
    bound: float
    slack: float
    holds: bool

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def local_global_precondition(delta: float, rho: float, r_norm: float) -> None:
    if not (delta > 0 and rho > 0):
        raise InvalidArgument("δ and ρ must be positive")
    limit = min(4.0, 2.0 * r_norm)
    if not rho / delta < limit:
        raise InvalidArgument(f"ρ/δ = {rho / delta:.6g} violates ρ/δ < min(4, 2‖R‖₂) = {limit:.6g}")


def global_constants(curve: EntropyCurve) -> Tuple[float, float, float]:
    """
    (C₀, exponent, ε₀) with M(𝒟, ε) ≤ (C₀/ε)^exponent at every measured ε ≤ ε₀.

    The exponent is the fitted slope (at least 1); C₀ is the smallest constant making
    the bound hold at every measured point.
    """
    exponent = max(1.0, curve.fit.eta_hat)
    deltas = np.asarray(curve.packing.deltas)
    counts = np.asarray(curve.packing.counts, dtype=float)
    c0 = max(1.0, float(np.max(deltas * counts ** (1.0 / exponent))))
    return c0, exponent, float(deltas.max())


def check_local_global(
    q: int,
    delta: float,
    rho: float,
    r_norm: float,
    global_curve: EntropyCurve,
    local_cloud: FunctionCloud,
) -> LocalGlobalReport:
    """
    Compare the packing of ℋ(δ) at width ρ with (C₁δ/ρ)^{exponent+1}, where
    C₁ = 8C₀·max(1, ‖R‖₂/(4ε₀)) comes from the weighted-class curve. The check
    allows the factor-2 packing/bracketing slack: packing(ρ) ≤ (2C₁δ/ρ)^{exponent+1}.
    """
    local_global_precondition(delta, rho, r_norm)
    c0, exponent, eps0 = global_constants(global_curve)
    c1 = 8.0 * c0 * max(1.0, r_norm / (4.0 * eps0))
    packing = greedy_packing(local_cloud, rho)
    bound = (c1 * delta / rho) ** (exponent + 1)
    slack_bound = (PACKING_SLACK * c1 * delta / rho) ** (exponent + 1)
    holds = packing <= slack_bound
    if not holds:
        logger.warning("local-global bound violated: packing %d > %.4g (q=%d, δ=%g, ρ=%g)", packing, slack_bound, q, delta, rho)
    return LocalGlobalReport(
        q=q, delta=float(delta), rho=float(rho), r_norm=float(r_norm), c0=c0, exponent=exponent,
        eps0=eps0, c1=c1, packing=packing, bound=bound, slack=slack_bound, holds=holds,
    )


def write_curves(curves: Sequence[EntropyCurve], out_dir: Path) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = out_dir / "curve.csv"
    with curve_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["q", "epsilon", "delta", "packing_count"])
        for c in curves:
            for dlt, count in zip(c.packing.deltas, c.packing.counts):
                writer.writerow([c.q, "%.10g" % c.epsilon, "%.10g" % dlt, count])
    fit_path = out_dir / "fit.csv"
    with fit_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["q", "eta_hat", "logK_hat", "r2"])
        for c in curves:
            writer.writerow([c.q, "%.10g" % c.fit.eta_hat, "%.10g" % c.fit.log_k_hat, "%.10g" % c.fit.r2])
    return [curve_path, fit_path]
