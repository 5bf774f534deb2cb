"""
mixsel.services.likelihood

Constrained maximum likelihood over location mixtures with locations in a ball.

fit_constrained() runs projected EM from several starts and keeps the best. With an
isotropic Gaussian f₀ the weighted-mean M-step maximizes a radially symmetric
quadratic, so projecting it onto the ball is still the constrained maximizer; the
decrease check below only catches floating-point trouble.

Start policy for q components:
- starts 0 .. ⌈starts/2⌉−1 : k-means++ seeds drawn from the data
- remaining starts          : locations uniform in the ball
- optional warm start       : the best (q−1)-component fit with its heaviest
                              component split into two identical halves

All starts begin with uniform weights (except the warm start) and draw from
stream(seed, "em-start-q<q>", s), so a fit does not depend on the thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from ..exceptions import InvalidArgument
from .density import (
    Dataset,
    LocationFamily,
    MixtureParams,
    ParamBall,
    eval_log_density,
    project_to_ball,
    sample_with_rng,
    uniform_in_ball,
)
from .divergence import strassen_normalized
from .seeding import stream

logger = logging.getLogger(__name__)

LIL_MIN_N = 16
LIL_MODELS = ("mixture", "regular", "strassen")


@dataclass(frozen=True)
class FitOptions:
    starts: int = 20
    tol: float = 1e-8
    max_iter: int = 500
    threads: int = 1

    def __post_init__(self):
        if self.starts < 1:
            raise InvalidArgument("EM needs at least one start")
        if not self.tol > 0:
            raise InvalidArgument("EM tolerance must be positive")
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be at least 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitOptions":
        return cls(
            starts=int(data.get("starts", 20)),
            tol=float(data.get("tol", 1e-8)),
            max_iter=int(data.get("max_iter", 500)),
            threads=int(data.get("threads", 1)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"starts": self.starts, "tol": self.tol, "max_iter": self.max_iter}


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    loglik: float
    iterations: int
    converged: bool
    starts_used: int
    best_start_index: int
    frozen: bool = False

    @property
    def q(self) -> int:
        return self.params.q

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.params.q,
            "weights": self.params.weights.tolist(),
            "locations": self.params.locations.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "starts_used": self.starts_used,
            "best_start_index": self.best_start_index,
        }


def log_likelihood(mix: MixtureParams, family: LocationFamily, data: Dataset) -> float:
    """ℓ_n(f) = Σ_k log f(X_k)."""
    if data.n < 1:
        raise InvalidArgument("log-likelihood of an empty dataset")
    return float(np.sum(eval_log_density(mix, family, data.points)))


# ---------------------------------------------------------------------------
# EM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Run:
    index: int
    weights: np.ndarray
    locations: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    frozen: bool


def _log_terms(x: np.ndarray, family: LocationFamily, weights: np.ndarray, locations: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_w[None, :] + family.log_f0(x[:, None, :] - locations[None, :, :])


def _em_run(
    index: int,
    x: np.ndarray,
    family: LocationFamily,
    ball: ParamBall,
    weights: np.ndarray,
    locations: np.ndarray,
    tol: float,
    max_iter: int,
) -> _Run:
    terms = _log_terms(x, family, weights, locations)
    row_ll = logsumexp(terms, axis=1)
    ll = float(np.sum(row_ll))
    converged = frozen = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        resp = np.exp(terms - row_ll[:, None])
        mass = resp.sum(axis=0)
        new_w = mass / mass.sum()
        safe = np.where(mass > 0, mass, 1.0)[:, None]
        new_loc = np.where(mass[:, None] > 0, (resp.T @ x) / safe, locations)
        new_loc = project_to_ball(new_loc, ball)

        new_terms = _log_terms(x, family, new_w, new_loc)
        new_row_ll = logsumexp(new_terms, axis=1)
        new_ll = float(np.sum(new_row_ll))
        if new_ll < ll:
            # keep the previous iterate; a drop within tol is rounding at the optimum
            frozen = (ll - new_ll) > tol
            converged = not frozen
            break
        gain = new_ll - ll
        weights, locations, terms, row_ll, ll = new_w, new_loc, new_terms, new_row_ll, new_ll
        if gain < tol:
            converged = True
            break
    return _Run(index, weights, locations, ll, iterations, converged, frozen)


def _kmeans_pp(rng: np.random.Generator, x: np.ndarray, q: int) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, q):
        total = float(closest.sum())
        pick = rng.integers(n) if total <= 0 else rng.choice(n, p=closest / total)
        centers.append(x[pick])
        closest = np.minimum(closest, np.sum((x - x[pick]) ** 2, axis=1))
    return np.array(centers)


def split_heaviest(mix: MixtureParams, q: int) -> MixtureParams:
    """Grow ``mix`` to q components by halving its heaviest component; the density is unchanged."""
    if q < mix.q:
        raise InvalidArgument(f"cannot split a {mix.q}-component mixture down to {q}")
    weights = mix.weights.copy()
    locations = mix.locations.copy()
    while weights.shape[0] < q:
        j = int(np.argmax(weights))
        weights[j] *= 0.5
        weights = np.append(weights, weights[j])
        locations = np.vstack([locations, locations[j]])
    return MixtureParams(weights=weights, locations=locations)


def _initial_points(
    q: int, x: np.ndarray, ball: ParamBall, starts: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    n_data_seeded = math.ceil(starts / 2)
    inits = []
    for s in range(starts):
        rng = stream(seed, f"em-start-q{q}", s)
        if s < n_data_seeded:
            loc = _kmeans_pp(rng, x, q)
        else:
            loc = uniform_in_ball(rng, (q,), x.shape[1], ball.radius)
        inits.append((np.full(q, 1.0 / q), project_to_ball(loc, ball)))
    return inits


def fit_constrained(
    q: int,
    data: Dataset,
    family: LocationFamily,
    ball: ParamBall,
    starts: int = 20,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 500,
    threads: int = 1,
    warm_start: Optional[MixtureParams] = None,
) -> FitResult:
    """Best of ``starts`` projected EM runs (plus the warm start, if given) over M_q with ‖θ_i‖ ≤ T."""
    if q < 1:
        raise InvalidArgument("q must be at least 1")
    if starts < 1:
        raise InvalidArgument("EM needs at least one start")
    if data is None or data.n < 1:
        raise InvalidArgument("cannot fit an empty dataset")
    if data.dim != family.dim:
        raise InvalidArgument(f"data has {data.dim} columns, family dimension is {family.dim}")

    x = data.points
    inits = _initial_points(q, x, ball, starts, seed)
    if warm_start is not None:
        if warm_start.dim != family.dim:
            raise InvalidArgument("warm start dimension does not match the family")
        grown = split_heaviest(warm_start, q)
        inits.append((grown.weights.copy(), project_to_ball(grown.locations, ball)))

    def run(job):
        idx, (w0, loc0) = job
        return _em_run(idx, x, family, ball, w0, loc0, tol, max_iter)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        runs = list(pool.map(run, enumerate(inits)))

    best = max(runs, key=lambda r: (r.loglik, -r.index))
    if best.frozen:
        logger.warning("q=%d: best EM run (start %d) stopped on a projected decrease", q, best.index)
    params = MixtureParams(weights=best.weights, locations=best.locations)
    loglik = log_likelihood(params, family, data)
    if abs(loglik - best.loglik) > 1e-6 * max(1.0, abs(loglik)):
        logger.warning("q=%d: recomputed loglik %.10g differs from EM value %.10g", q, loglik, best.loglik)
    logger.debug("q=%d: loglik=%.6f start=%d iterations=%d", q, loglik, best.index, best.iterations)
    return FitResult(
        params=params,
        loglik=loglik,
        iterations=best.iterations,
        converged=best.converged,
        starts_used=len(runs),
        best_start_index=best.index,
        frozen=best.frozen,
    )


def profile_scores(
    data: Dataset,
    family: LocationFamily,
    ball: ParamBall,
    q_max: int,
    options: Optional[FitOptions] = None,
    seed: int = 0,
    warm: bool = True,
) -> List[FitResult]:
    """Fits for q = 1..q_max, each warm-started from the previous one, so the scores never decrease."""
    return extend_profile([], data, family, ball, q_max, options, seed, warm)


def extend_profile(
    fits: Sequence[FitResult],
    data: Dataset,
    family: LocationFamily,
    ball: ParamBall,
    q_max: int,
    options: Optional[FitOptions] = None,
    seed: int = 0,
    warm: bool = True,
) -> List[FitResult]:
    """Continue a q = 1..k profile chain up to q_max; existing fits are reused as-is."""
    options = options or FitOptions()
    fits = list(fits)
    previous: Optional[MixtureParams] = fits[-1].params if fits else None
    for q in range(len(fits) + 1, q_max + 1):
        fit = fit_constrained(
            q,
            data,
            family,
            ball,
            starts=options.starts,
            seed=seed,
            tol=options.tol,
            max_iter=options.max_iter,
            threads=options.threads,
            warm_start=previous if warm else None,
        )
        fits.append(fit)
        previous = fit.params
    return fits


def _clamped_difference(high: float, low: float, q: int, q_ref: int) -> float:
    stat = high - low
    if stat < 0:
        logger.warning("negative likelihood ratio %.3e for q=%d vs q=%d; clamped to 0", stat, q, q_ref)
        return 0.0
    return stat


def lr_statistic(
    q: int,
    q_ref: int,
    data: Dataset,
    family: LocationFamily,
    ball: ParamBall,
    options: Optional[FitOptions] = None,
    seed: int = 0,
    fits: Optional[Sequence[FitResult]] = None,
) -> float:
    """sup over M_q minus sup over M_{q_ref}, clamped at 0 (nesting makes the true value nonnegative)."""
    if q < q_ref or q_ref < 1:
        raise InvalidArgument("lr_statistic needs q ≥ q_ref ≥ 1")
    if q == q_ref:
        return 0.0
    if fits is None or len(fits) < q:
        fits = profile_scores(data, family, ball, q, options, seed)
    return _clamped_difference(fits[q - 1].loglik, fits[q_ref - 1].loglik, q, q_ref)


def nested_mean_lr(data: Dataset, ball: ParamBall, family: LocationFamily) -> float:
    """
    Likelihood ratio of N(θ, σ²I) with ‖θ‖ ≤ T against the known N(0, σ²I).

    The constrained MLE is the projection of the sample mean, giving
    n/(2σ²)·(‖x̄‖² − ‖x̄ − proj(x̄)‖²).
    """
    xbar = data.points.mean(axis=0)
    theta = project_to_ball(xbar, ball)
    gap = float(np.sum((xbar - theta) ** 2))
    return data.n * (float(np.sum(xbar * xbar)) - gap) / (2.0 * family.variance)


# ---------------------------------------------------------------------------
# LIL trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LilTrajectory:
    n_values: Tuple[int, ...]
    w_values: Tuple[float, ...]
    lr_values: Tuple[float, ...]
    model: str = "mixture"
    q: Optional[int] = None
    q_star: Optional[int] = None

    def __post_init__(self):
        if self.model not in LIL_MODELS:
            raise InvalidArgument(f"unknown trajectory model {self.model!r}")
        if len(self.n_values) != len(self.w_values):
            raise InvalidArgument("trajectory sizes and values disagree")
        _check_schedule(self.n_values, dyadic=False)

    @property
    def max_w(self) -> float:
        return float(max(self.w_values))

    def rows(self, replicate: int) -> List[Tuple[int, str, int, float]]:
        return [(replicate, self.model, n, w) for n, w in zip(self.n_values, self.w_values)]


def _check_schedule(n_schedule: Sequence[int], dyadic: bool = True) -> Tuple[int, ...]:
    sizes = tuple(int(n) for n in n_schedule)
    if not sizes:
        raise InvalidArgument("empty sample-size schedule")
    if min(sizes) < LIL_MIN_N:
        raise InvalidArgument(f"trajectory sample sizes must be at least {LIL_MIN_N}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidArgument("trajectory sample sizes must be strictly increasing")
    if dyadic and any(n & (n - 1) for n in sizes):
        raise InvalidArgument("trajectory sample sizes must be powers of two")
    return sizes


def dyadic_schedule(low_exponent: int, high_exponent: int) -> Tuple[int, ...]:
    return _check_schedule([2 ** k for k in range(int(low_exponent), int(high_exponent) + 1)])


def _loglog(n: int) -> float:
    return math.log(math.log(n))


def lil_path(stream_seed: int, truth: MixtureParams, family: LocationFamily, n: int, index: int = 0) -> Dataset:
    """One sample path of length n; every trajectory entry reads a prefix of it."""
    points = sample_with_rng(truth, family, n, stream(stream_seed, "lil-path", index))
    return Dataset(points=points)


def lil_trajectory(
    stream_seed: int,
    q: int,
    q_star: int,
    n_schedule: Sequence[int],
    truth: MixtureParams,
    family: LocationFamily,
    ball: ParamBall,
    fit_options: Optional[FitOptions] = None,
    model: str = "mixture",
    path: Optional[Dataset] = None,
) -> LilTrajectory:
    """
    W_n = LR_n / log log n along one growing sample path.

    ``mixture``: LR_n = score(q) − score(q*) from warm-started profile fits.
    ``regular``: LR_n = nested_mean_lr, the closed-form nested Gaussian-mean model.
    """
    sizes = _check_schedule(n_schedule)
    if model not in ("mixture", "regular"):
        raise InvalidArgument(f"lil_trajectory handles 'mixture' and 'regular', not {model!r}")
    if model == "mixture" and q <= q_star:
        raise InvalidArgument("the mixture trajectory compares q > q*")
    path = path if path is not None else lil_path(stream_seed, truth, family, sizes[-1], LIL_MODELS.index(model))
    if path.n < sizes[-1]:
        raise InvalidArgument(f"sample path has {path.n} points, schedule needs {sizes[-1]}")

    lrs: List[float] = []
    for n in sizes:
        prefix = path.prefix(n)
        if model == "regular":
            lrs.append(nested_mean_lr(prefix, ball, family))
        else:
            fits = profile_scores(prefix, family, ball, q, fit_options, seed=stream_seed)
            lrs.append(_clamped_difference(fits[q - 1].loglik, fits[q_star - 1].loglik, q, q_star))
    ws = tuple(lr / _loglog(n) for lr, n in zip(lrs, sizes))
    return LilTrajectory(n_values=sizes, w_values=ws, lr_values=tuple(lrs), model=model, q=q, q_star=q_star)


def strassen_trajectory(g, mean_g: float, points: Dataset, n_schedule: Sequence[int]) -> LilTrajectory:
    """I_n(g) = ν_n(g)/√(2 log log n) along prefixes of one path; its limsup is ‖g − E g‖₂."""
    sizes = _check_schedule(n_schedule, dyadic=False)
    if points.n < sizes[-1]:
        raise InvalidArgument(f"sample path has {points.n} points, schedule needs {sizes[-1]}")
    values = tuple(strassen_normalized(g, points.prefix(n), mean_g) for n in sizes)
    return LilTrajectory(n_values=sizes, w_values=values, lr_values=values, model="strassen")
