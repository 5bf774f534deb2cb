"""
mixsel.services.experiments

Seeded Monte Carlo studies and dataset ingestion.

Every study is a pure function of its ExperimentSpec: replicate r draws from streams
keyed by derived_seed(master_seed, <label>, r), work is fanned out over replicates
with a thread pool and gathered back by replicate index, so outputs do not depend on
the thread count. Order studies fit each replicate's dataset once and apply every
penalty to the shared score table afterwards (paired design).

Studies
- consistency     fraction of q̂ = q* per (n, penalty)
- inconsistency   the same table plus a paired over-estimation contrast against BIC
- lil             W_n trajectories for the mixture, regular and Strassen models
- geometry        h/N ratio study, level sets and envelope norms
- entropy         packing curves, exponent fits and the local-from-global check
"""

from __future__ import annotations

import csv
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import linregress
from tqdm import tqdm

from ..exceptions import DataParseError, InvalidArgument
from . import artifacts
from .density import (
    Dataset,
    LocationFamily,
    MixtureParams,
    ParamBall,
    Provenance,
    SieveSchedule,
    sample_with_rng,
    sieve_radius,
)
from .divergence import GridSpec, build_grid, weighted_density
from .entropy import (
    check_local_global,
    entropy_curve,
    geometric_deltas,
    packing_sandwich,
    sample_class,
    write_curves,
)
from .geometry import SamplerBox, build_envelopes, build_partition, envelope_norm_growth, envelope_S_D, ratio_study
from .likelihood import FitOptions, LilTrajectory, dyadic_schedule, extend_profile, lil_path, lil_trajectory, strassen_trajectory
from .order_select import Penalty, order_from_scores, scan_bound
from .seeding import derived_seed, stream

logger = logging.getLogger(__name__)

STUDIES = ("consistency", "inconsistency", "lil", "geometry", "entropy")
STUDY_ALIASES = {"geometry-figure": "geometry", "entropy-study": "entropy"}
ORDER_STUDIES = ("consistency", "inconsistency")
SIGNIFICANCE = 0.05


def canonical_study(name: str) -> str:
    study = STUDY_ALIASES.get(name, name)
    if study not in STUDIES:
        raise InvalidArgument(f"unknown study {name!r}; expected one of {STUDIES}")
    return study


# ---------------------------------------------------------------------------
# Spec / records / tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    study: str
    truth: MixtureParams
    family: LocationFamily
    master_seed: int
    n_grid: Tuple[int, ...] = ()
    replicates: int = 1
    penalties: Tuple[Penalty, ...] = ()
    sieve: SieveSchedule = field(default_factory=lambda: SieveSchedule.constant(10.0))
    fit: FitOptions = field(default_factory=FitOptions)
    q_cap: int = 32
    threads: int = 1
    output_dir: Optional[Path] = None
    grid: Optional[GridSpec] = None
    options: Dict[str, Any] = field(default_factory=dict)
    echo: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "study", canonical_study(self.study))
        if self.master_seed is None or int(self.master_seed) < 0:
            raise InvalidArgument("a nonnegative master seed is required")
        if self.replicates < 1:
            raise InvalidArgument("replicates must be at least 1")
        sizes = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InvalidArgument("n-grid must be strictly increasing")
        object.__setattr__(self, "n_grid", sizes)
        if self.study in ORDER_STUDIES:
            if not sizes:
                raise InvalidArgument(f"{self.study} study needs a nonempty n-grid")
            if not self.penalties:
                raise InvalidArgument(f"{self.study} study needs at least one penalty")
        if self.truth.dim != self.family.dim:
            raise InvalidArgument("truth and family disagree on dimension")

    @property
    def q_star(self) -> int:
        return self.truth.q

    @classmethod
    def from_config(cls, config: Dict[str, Any], threads: Optional[int] = None, output_dir: Optional[Path] = None) -> "ExperimentSpec":
        """Build from a RunConfig document that has already passed schema validation."""
        family = LocationFamily.from_dict(config.get("family", {}))
        truth = MixtureParams.from_dict(config["truth"])
        grid = GridSpec.from_dict(config["grid"]) if config.get("grid") else None
        study = canonical_study(config["study"])
        out = output_dir or (Path(config["output_dir"]) if config.get("output_dir") else None)
        return cls(
            study=study,
            truth=truth,
            family=family,
            master_seed=int(config["seed"]),
            n_grid=tuple(config.get("n_grid", ())),
            replicates=int(config.get("replicates", 1)),
            penalties=tuple(Penalty.from_dict(p) for p in config.get("penalties", ())),
            sieve=SieveSchedule.from_dict(config.get("sieve", {"rule": "constant", "radius": 10.0})),
            fit=FitOptions.from_dict(config.get("fit", {})),
            q_cap=int(config.get("q_cap", 32)),
            threads=int(threads if threads is not None else config.get("threads", 1)),
            output_dir=out,
            grid=grid,
            options=dict(config.get(study, {}) or {}),
            echo=dict(config),
        )


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    seed: int
    n: int
    q_hats: Dict[str, int]
    scores: Tuple[float, ...]
    wall_time: float

    def rows(self) -> List[Tuple]:
        scores = ";".join("%.10g" % s for s in self.scores)
        return [
            (self.replicate, self.seed, self.n, pid, q_hat, scores, "%.3f" % self.wall_time)
            for pid, q_hat in self.q_hats.items()
        ]


@dataclass(frozen=True)
class SummaryRow:
    study: str
    n: int
    penalty_id: str
    under: int
    correct: int
    over: int

    @property
    def replicates(self) -> int:
        return self.under + self.correct + self.over

    @property
    def frac_under(self) -> float:
        return self.under / self.replicates

    @property
    def frac_correct(self) -> float:
        return self.correct / self.replicates

    @property
    def frac_over(self) -> float:
        return self.over / self.replicates

    def as_csv(self) -> Tuple:
        return (self.study, self.n, self.penalty_id, self.frac_under, self.frac_correct, self.frac_over, self.replicates)


@dataclass
class SummaryTable:
    study: str
    rows: List[SummaryRow] = field(default_factory=list)
    metrics: List[Tuple[str, Any]] = field(default_factory=list)
    records: List[ReplicateRecord] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)
    seeds: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def cell(self, n: int, penalty_id: str) -> SummaryRow:
        for row in self.rows:
            if row.n == n and row.penalty_id == penalty_id:
                return row
        raise KeyError((n, penalty_id))

    def metric(self, name: str) -> Any:
        return dict(self.metrics)[name]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "study": self.study,
            "rows": [dict(zip(artifacts.SUMMARY_HEADER, row.as_csv())) for row in self.rows],
            "metrics": {k: v for k, v in self.metrics},
            "files": [p.name for p in self.files],
        }


def _progress_bar(total: int, desc: str, enabled: bool):
    return tqdm(total=total, desc=desc, disable=not enabled, file=sys.stderr, leave=False)


# ---------------------------------------------------------------------------
# Order studies
# ---------------------------------------------------------------------------


def _order_replicate(spec: ExperimentSpec, r: int) -> List[ReplicateRecord]:
    seed_r = derived_seed(spec.master_seed, "replicate", r)
    fit_options = FitOptions(starts=spec.fit.starts, tol=spec.fit.tol, max_iter=spec.fit.max_iter, threads=1)
    records = []
    for n in spec.n_grid:
        started = time.perf_counter()
        points = sample_with_rng(spec.truth, spec.family, n, stream(seed_r, "dataset", n))
        data = Dataset(points=points, provenance=Provenance(kind="simulated", seed=seed_r))
        ball = ParamBall(sieve_radius(spec.sieve, n))
        fits = extend_profile([], data, spec.family, ball, 1, fit_options, seed_r)
        bounds = {pen.label: scan_bound(spec.family, pen, n, data.dim, fits[0].loglik, spec.q_cap) for pen in spec.penalties}
        fits = extend_profile(fits, data, spec.family, ball, max(bounds.values()), fit_options, seed_r)
        scores = [f.loglik for f in fits]
        q_hats = {}
        for pen in spec.penalties:
            b = bounds[pen.label]
            q_hats[pen.label] = order_from_scores(scores[:b], pen, n, data.dim, b, ball.radius).q_hat
        records.append(
            ReplicateRecord(replicate=r, seed=seed_r, n=n, q_hats=q_hats, scores=tuple(scores), wall_time=time.perf_counter() - started)
        )
    return records


def _run_order_replicates(spec: ExperimentSpec, progress: bool) -> List[ReplicateRecord]:
    records: List[ReplicateRecord] = []
    with ThreadPoolExecutor(max_workers=max(1, spec.threads)) as pool, _progress_bar(spec.replicates, spec.study, progress) as bar:
        for batch in pool.map(lambda r: _order_replicate(spec, r), range(spec.replicates)):
            records.extend(batch)
            bar.update(1)
    return records


def _tabulate(spec: ExperimentSpec, records: Sequence[ReplicateRecord]) -> List[SummaryRow]:
    rows = []
    for n in spec.n_grid:
        at_n = [rec for rec in records if rec.n == n]
        for pen in spec.penalties:
            picks = [rec.q_hats[pen.label] for rec in at_n]
            under = sum(1 for q in picks if q < spec.q_star)
            over = sum(1 for q in picks if q > spec.q_star)
            rows.append(SummaryRow(spec.study, n, pen.label, under, len(picks) - under - over, over))
    return rows


def _order_table(spec: ExperimentSpec, progress: bool) -> SummaryTable:
    records = _run_order_replicates(spec, progress)
    table = SummaryTable(study=spec.study, rows=_tabulate(spec, records), records=records)
    table.seeds = {"master": spec.master_seed, "replicates": {str(r): derived_seed(spec.master_seed, "replicate", r) for r in range(spec.replicates)}}
    return table


def _write_order_outputs(spec: ExperimentSpec, table: SummaryTable) -> None:
    out = spec.output_dir
    table.files.append(artifacts.write_csv(out / "summary.csv", artifacts.SUMMARY_HEADER, (row.as_csv() for row in table.rows)))
    table.files.append(
        artifacts.write_csv(out / "records.csv", artifacts.RECORD_HEADER, (row for rec in table.records for row in rec.rows()))
    )


def run_consistency(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    table = _order_table(spec, progress)
    if spec.output_dir is not None:
        _write_order_outputs(spec, table)
        _finish(spec, table)
    return table


@dataclass(frozen=True)
class ContrastRow:
    n: int
    penalty_id: str
    over_count: int
    bic_over_count: int
    discordant_plus: int    # penalty over-estimates, BIC does not
    discordant_minus: int   # BIC over-estimates, penalty does not

    @property
    def frequency_ratio(self) -> float:
        if self.bic_over_count == 0:
            return math.inf if self.over_count else math.nan
        return self.over_count / self.bic_over_count

    def as_csv(self) -> Tuple:
        return (self.n, self.penalty_id, self.over_count, self.bic_over_count, self.discordant_plus, self.discordant_minus, self.frequency_ratio)


CONTRAST_HEADER = ("n", "penalty_id", "over_count", "bic_over_count", "discordant_plus", "discordant_minus", "frequency_ratio")


def paired_contrast(spec: ExperimentSpec, records: Sequence[ReplicateRecord], reference: str = "bic") -> List[ContrastRow]:
    rows = []
    for n in spec.n_grid:
        at_n = [rec for rec in records if rec.n == n]
        ref_over = [rec.q_hats[reference] > spec.q_star for rec in at_n]
        for pen in spec.penalties:
            if pen.label == reference:
                continue
            over = [rec.q_hats[pen.label] > spec.q_star for rec in at_n]
            rows.append(
                ContrastRow(
                    n=n,
                    penalty_id=pen.label,
                    over_count=sum(over),
                    bic_over_count=sum(ref_over),
                    discordant_plus=sum(1 for a, b in zip(over, ref_over) if a and not b),
                    discordant_minus=sum(1 for a, b in zip(over, ref_over) if b and not a),
                )
            )
    return rows


def run_inconsistency(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    if not any(p.variant == "loglog" for p in spec.penalties):
        raise InvalidArgument("the inconsistency study needs a loglog:C penalty")
    if not any(p.variant == "bic" for p in spec.penalties):
        spec = replace(spec, penalties=(Penalty.bic(),) + tuple(spec.penalties))
    table = _order_table(spec, progress)
    contrast = paired_contrast(spec, table.records)
    table.extras["contrast"] = contrast
    for row in contrast:
        table.metrics.append((f"n{row.n}.{row.penalty_id}.discordant_excess", row.discordant_plus - row.discordant_minus))
    if spec.output_dir is not None:
        _write_order_outputs(spec, table)
        table.files.append(artifacts.write_csv(spec.output_dir / "contrast.csv", CONTRAST_HEADER, (r.as_csv() for r in contrast)))
        _finish(spec, table)
    return table


# ---------------------------------------------------------------------------
# LIL study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryStats:
    replicate: int
    model: str
    max_w: float
    slope: float
    slope_p_value: float   # one-sided, H1: slope > 0

    def as_csv(self) -> Tuple:
        return (self.replicate, self.model, self.max_w, self.slope, self.slope_p_value)


def trajectory_stats(replicate: int, traj: LilTrajectory) -> TrajectoryStats:
    """Max W and the least-squares slope of W on log n with a one-sided p-value."""
    if len(traj.n_values) < 3:
        return TrajectoryStats(replicate, traj.model, traj.max_w, math.nan, math.nan)
    fit = linregress(np.log(np.asarray(traj.n_values, dtype=float)), np.asarray(traj.w_values))
    half = 0.5 * float(fit.pvalue)
    p = half if fit.slope > 0 else 1.0 - half
    return TrajectoryStats(replicate, traj.model, traj.max_w, float(fit.slope), float(p))


def _lil_models(spec: ExperimentSpec) -> Tuple[str, ...]:
    return tuple(spec.options.get("models", ("mixture", "regular", "strassen")))


def _lil_replicate(spec: ExperimentSpec, r: int, strassen_g=None) -> List[Tuple[LilTrajectory, TrajectoryStats]]:
    opts = spec.options
    seed_r = derived_seed(spec.master_seed, "lil", r)
    fit_options = FitOptions(starts=spec.fit.starts, tol=spec.fit.tol, max_iter=spec.fit.max_iter, threads=1)
    low = int(opts.get("low_exponent", 8))
    high = int(opts.get("high_exponent", 16))
    models = _lil_models(spec)
    out = []

    if "mixture" in models:
        q = int(opts.get("q", spec.q_star + 1))
        schedule = dyadic_schedule(low, int(opts.get("mixture_high_exponent", high)))
        traj = lil_trajectory(
            seed_r, q, spec.q_star, schedule, spec.truth, spec.family, ParamBall(float(opts.get("radius", 10.0))), fit_options, "mixture"
        )
        out.append(traj)
    if "regular" in models:
        origin = MixtureParams.point_mass(np.zeros(spec.family.dim))
        traj = lil_trajectory(
            seed_r, 1, 0, dyadic_schedule(low, high), origin, spec.family, ParamBall(float(opts.get("regular_radius", 10.0))), model="regular"
        )
        out.append(traj)
    if "strassen" in models:
        schedule = dyadic_schedule(low, high)
        path = lil_path(seed_r, spec.truth, spec.family, schedule[-1], index=2)
        out.append(strassen_trajectory(strassen_g, strassen_g.mean(), path, schedule))
    return [(t, trajectory_stats(r, t)) for t in out]


def strassen_function(spec: ExperimentSpec):
    """d_f for f = f* shifted by ``strassen_shift``·σ along the first axis; ‖d_f − E d_f‖₂ = √(1 − h²/4)."""
    shift = np.zeros(spec.family.dim)
    shift[0] = float(spec.options.get("strassen_shift", 0.5)) * spec.family.sigma
    alt = MixtureParams(weights=spec.truth.weights, locations=spec.truth.locations + shift)
    return weighted_density(alt, spec.truth, build_grid(spec.truth, spec.family, spec.grid))


def run_lil(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    g = strassen_function(spec) if "strassen" in _lil_models(spec) else None
    results: List[Tuple[LilTrajectory, TrajectoryStats]] = []
    with ThreadPoolExecutor(max_workers=max(1, spec.threads)) as pool, _progress_bar(spec.replicates, "lil", progress) as bar:
        for batch in pool.map(lambda r: _lil_replicate(spec, r, g), range(spec.replicates)):
            results.extend(batch)
            bar.update(1)

    table = SummaryTable(study="lil")
    table.seeds = {"master": spec.master_seed, "replicates": {str(r): derived_seed(spec.master_seed, "lil", r) for r in range(spec.replicates)}}
    stats = [s for _, s in results]
    table.extras["trajectories"] = [t for t, _ in results]
    table.extras["stats"] = stats
    for model in sorted({s.model for s in stats}):
        mine = [s for s in stats if s.model == model]
        table.metrics.append((f"{model}.max_w", max(s.max_w for s in mine)))
        table.metrics.append((f"{model}.mean_max_w", float(np.mean([s.max_w for s in mine]))))
        table.metrics.append((f"{model}.frac_significant_growth", sum(1 for s in mine if s.slope_p_value < SIGNIFICANCE) / len(mine)))
    if g is not None:
        table.metrics.append(("strassen.cluster_radius", math.sqrt(max(0.0, 1.0 - g.h * g.h / 4.0))))

    if spec.output_dir is not None:
        out = spec.output_dir
        traj_rows = []
        for (traj, st) in results:
            traj_rows.extend(traj.rows(st.replicate))
        table.files.append(artifacts.write_csv(out / "trajectories.csv", ("replicate", "model", "n", "w"), traj_rows))
        table.files.append(artifacts.write_csv(out / "lil_stats.csv", ("replicate", "model", "max_w", "slope", "slope_p_value"), (s.as_csv() for s in stats)))
        table.files.append(artifacts.write_csv(out / "summary.csv", artifacts.METRIC_HEADER, (("lil", k, v) for k, v in table.metrics)))
        _finish(spec, table)
    return table


# ---------------------------------------------------------------------------
# Geometry and entropy studies
# ---------------------------------------------------------------------------


def run_geometry_figure(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    opts = spec.options
    box = SamplerBox(**opts.get("box", {"q": 2, "dim": spec.family.dim}))
    part = build_partition(spec.truth, derived_seed(spec.master_seed, "partition", 0), opts.get("partition_radius"))
    ball = ParamBall(max(abs(box.theta_low), abs(box.theta_high)))
    grid = build_grid(spec.truth, spec.family, spec.grid, ball)
    n_samples = int(opts.get("n_samples", 100_000))

    with _progress_bar(n_samples, "ratio study", progress) as bar:
        report = ratio_study(
            spec.truth,
            spec.family,
            part,
            box,
            n_samples,
            spec.master_seed,
            grid=grid,
            epsilons=tuple(opts.get("epsilons", (0.05,))),
            levelset_resolution=int(opts.get("resolution", 101)),
            threads=spec.threads,
            progress=bar.update,
        )
    table = SummaryTable(study="geometry")
    table.seeds = {"master": spec.master_seed, "partition": derived_seed(spec.master_seed, "partition", 0)}
    table.extras["report"] = report
    table.metrics.extend(
        [
            ("r_min", report.r_min),
            ("r_max", report.r_max),
            ("r_spread", report.r_max / report.r_min),
            ("l1_ratio_min", report.l1_ratio_min),
            ("excluded", report.excluded),
            ("partition_radius", part.radius),
        ]
    )
    for eps, ok in sorted(report.sandwich.items()):
        table.metrics.append((f"sandwich.eps_{eps}", ok))
        table.metrics.append((f"sandwich_violations.eps_{eps}", report.sandwich_violations[eps]))

    envelope_rows = []
    env_opts = opts.get("envelopes")
    if env_opts:
        T = float(env_opts.get("radius", ball.radius))
        env_ball = ParamBall(T)
        env = build_envelopes(spec.truth, spec.family, env_ball, build_grid(spec.truth, spec.family, spec.grid, env_ball), ray_points=int(env_opts.get("ray_points", 65)))
        bounds = envelope_S_D(env, report.cstar)
        n = env.norms
        envelope_rows.append((T, n["h0_4"], n["h1_4"], n["h2_4"], n["h3_2"], bounds.s_norm4(), report.cstar))
        table.metrics.append(("envelope.s_norm4", bounds.s_norm4()))
        table.metrics.append(("envelope.assumption_a", env.assumption_a))
    growth = None
    if opts.get("growth_radii"):
        growth = envelope_norm_growth(spec.truth, spec.family, opts["growth_radii"], spec.grid)
        table.metrics.append(("envelope.growth_slope", growth.slope))
        table.metrics.append(("envelope.growth_r2", growth.r2))

    if spec.output_dir is not None:
        out = spec.output_dir
        table.files.extend(report.write(out))
        if envelope_rows:
            table.files.append(artifacts.write_csv(out / "envelopes.csv", ("T", "h0_4", "h1_4", "h2_4", "h3_2", "s_norm4", "cstar"), envelope_rows))
        if growth is not None:
            table.files.append(artifacts.write_csv(out / "envelope_growth.csv", ("T", "h0_4", "h1_4", "h2_4", "h3_2"), growth.rows))
        table.files.append(artifacts.write_csv(out / "summary.csv", artifacts.METRIC_HEADER, (("geometry", k, v) for k, v in table.metrics)))
        _finish(spec, table)
    return table


LOCAL_GLOBAL_HEADER = ("q", "delta", "rho", "r_norm", "c0", "exponent", "eps0", "c1", "packing", "bound", "slack_bound", "holds")


def _empirical_envelope_norm(cloud, grid) -> float:
    """‖R‖₂ for R = max over the cloud of |d_f|, an envelope of the sampled weighted class."""
    return grid.l2_norm(np.max(np.abs(cloud.values), axis=0))


def run_entropy_study(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    opts = spec.options
    q_list = [int(q) for q in opts.get("q_list", (1, 2, 3))]
    table = SummaryTable(study="entropy")
    table.seeds = {"master": spec.master_seed}
    if not q_list:
        logger.info("entropy study: empty q list, nothing to do")
        if spec.output_dir is not None:
            _finish(spec, table)
        return table

    eps = float(opts.get("epsilon", 0.2))
    ball = ParamBall(float(opts.get("radius", 2.0)))
    n_functions = int(opts.get("n_functions", 2000))
    points = int(opts.get("delta_points", 8))
    smallest = float(opts.get("smallest_fraction", 0.05))
    grid = build_grid(spec.truth, spec.family, spec.grid, ball)
    deltas = geometric_deltas(eps, smallest, points)

    curves = []
    with _progress_bar(len(q_list), "entropy", progress) as bar:
        for q in q_list:
            seed_q = derived_seed(spec.master_seed, "entropy", q)
            table.seeds[f"q{q}"] = seed_q
            cloud = sample_class(q, "hellinger-ball", spec.truth, spec.family, ball, eps, n_functions, seed_q, grid, spec.threads)
            curve = entropy_curve(cloud, deltas, eps, order_seed=seed_q)
            curves.append(curve)
            mid = deltas[len(deltas) // 2]
            sandwich = packing_sandwich(cloud, mid)
            table.metrics.extend(
                [
                    (f"q{q}.eta_hat", curve.fit.eta_hat),
                    (f"q{q}.r2", curve.fit.r2),
                    (f"q{q}.bound_exceeded", curve.bound_exceeded),
                    (f"q{q}.sandwich_holds", sandwich["covering"] <= sandwich["packing"] <= sandwich["covering_half"]),
                ]
            )
            bar.update(1)
    table.extras["curves"] = curves

    reports = []
    lg = opts.get("local_global")
    if lg:
        q = int(lg.get("q", 2))
        lg_functions = int(lg.get("n_functions", n_functions))
        seed_w = derived_seed(spec.master_seed, "entropy-weighted", q)
        weighted = sample_class(q, "weighted-class", spec.truth, spec.family, ball, None, lg_functions, seed_w, grid, spec.threads)
        global_curve = entropy_curve(weighted, geometric_deltas(1.0, smallest, points), 1.0, order_seed=seed_w)
        r_norm = float(lg["r_norm"]) if lg.get("r_norm") else _empirical_envelope_norm(weighted, grid)
        for k, (delta, rho) in enumerate(lg.get("pairs", ())):
            local = sample_class(
                q, "hellinger-ball", spec.truth, spec.family, ball, float(delta), lg_functions,
                derived_seed(spec.master_seed, "entropy-local", k), grid, spec.threads,
            )
            reports.append(check_local_global(q, float(delta), float(rho), r_norm, global_curve, local))
        table.metrics.append(("local_global.all_hold", all(r.holds for r in reports)))
    table.extras["local_global"] = reports

    if spec.output_dir is not None:
        out = spec.output_dir
        table.files.extend(write_curves(curves, out))
        if reports:
            rows = [(r.q, r.delta, r.rho, r.r_norm, r.c0, r.exponent, r.eps0, r.c1, r.packing, r.bound, r.slack, r.holds) for r in reports]
            table.files.append(artifacts.write_csv(out / "local_global.csv", LOCAL_GLOBAL_HEADER, rows))
        table.files.append(artifacts.write_csv(out / "summary.csv", artifacts.METRIC_HEADER, (("entropy", k, v) for k, v in table.metrics)))
        _finish(spec, table)
    return table


# ---------------------------------------------------------------------------
# Dispatch, manifest, ingestion
# ---------------------------------------------------------------------------


RUNNERS: Dict[str, Callable[..., SummaryTable]] = {
    "consistency": run_consistency,
    "inconsistency": run_inconsistency,
    "lil": run_lil,
    "geometry": run_geometry_figure,
    "entropy": run_entropy_study,
}


def run_study(spec: ExperimentSpec, progress: bool = False) -> SummaryTable:
    logger.info("running %s study (seed %d, %d replicate(s), %d thread(s))", spec.study, spec.master_seed, spec.replicates, spec.threads)
    return RUNNERS[spec.study](spec, progress=progress)


def _finish(spec: ExperimentSpec, table: SummaryTable) -> None:
    manifest = artifacts.write_manifest(spec.output_dir, spec.echo, table.seeds, table.files)
    table.extras["manifest"] = manifest


def _decoded_lines(path: Path):
    with path.open("rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                yield raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DataParseError(f"invalid UTF-8 byte at offset {exc.start}", path=str(path), line=line_no) from None


def ingest_csv(path: Union[str, Path], d: int) -> Dataset:
    """
    Parse a headerless numeric CSV with ``d`` columns. Blank lines are skipped; any
    other malformed row (including undecodable bytes) raises DataParseError carrying
    its 1-based line number.
    """
    path = Path(path)
    if d < 1:
        raise InvalidArgument("dimension must be at least 1")
    if not path.is_file():
        raise DataParseError("file not found", path=str(path))
    rows: List[List[float]] = []
    reader = csv.reader(_decoded_lines(path))
    for row in reader:
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != d:
            raise DataParseError(f"expected {d} column(s), found {len(row)}", path=str(path), line=line_no)
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            raise DataParseError(f"non-numeric cell in {row!r}", path=str(path), line=line_no) from None
        if not all(math.isfinite(v) for v in values):
            raise DataParseError("non-finite value", path=str(path), line=line_no)
        rows.append(values)
    if not rows:
        raise DataParseError("no observations", path=str(path))
    logger.info("ingested %d row(s) from %s", len(rows), path)
    return Dataset(points=np.asarray(rows, dtype=float), provenance=Provenance(kind="ingested", path=str(path)))
