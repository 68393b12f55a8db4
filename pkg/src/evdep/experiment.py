"""Monte Carlo comparison of unconstrained and constrained exponent-measure estimators.

Trivariate logistic samples are drawn repeatedly.  At every point of a
product grid of unit Frechet quantiles, the Hall-Tajvidi estimates and the
jointly constrained estimates are compared with the true exponent
measures through pointwise RMSE and an integrated squared deviation
(midpoint rule on the grid).

Pair estimates of the unconstrained estimator depend only on the projected
point, so each is computed once per pair grid point.  Constrained pair
estimates depend on the whole trivariate point; their errors are pooled
over the 7 trivariate points sharing a projection.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .constrain import SolverError, SolverOptions, build_batch, pickands_variables, solve_batch
from .estimate import pickands_on_points
from .lattice import Subset
from .models import LogisticModel, RngStream, _logistic_V, frechet_quantile, sample_logistic

log = logging.getLogger(__name__)

QUADRATURE = "midpoint-voronoi"
QUADRATURE_NOTE = (
    "each grid coordinate owns the interval between the midpoints to its "
    "neighbours, clipped to [x_p1, x_pK]; cell volume = product of widths"
)
PAIR_POOLING_NOTE = (
    "constrained pair errors are pooled over the trivariate grid points "
    "sharing the pair projection"
)


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    alphas: tuple = (0.2, 0.5, 0.8)
    n: int = 50
    replications: int = 500
    p_first: float = 0.05
    p_step: float = 0.15
    n_points: int = 7
    seed: int = 20110701
    m: int = 3

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.m != 3:
            raise ValueError("the experiment is defined for m = 3")
        if not self.alphas or any(not 0 < a <= 1 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1]")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n_points < 2 or self.p_step <= 0:
            raise ValueError("the grid needs at least two points and a positive step")
        probs = self.probabilities
        if probs[0] <= 0 or probs[-1] >= 1:
            raise ValueError("grid probabilities must lie strictly inside (0, 1)")

    @property
    def probabilities(self) -> np.ndarray:
        return np.round(self.p_first + self.p_step * np.arange(self.n_points), 12)


@dataclass(frozen=True, eq=False)
class Grid:
    """Quantile grid, its product grids and midpoint-rule cell volumes."""

    probs: np.ndarray
    x: np.ndarray
    widths: np.ndarray
    pair_index: np.ndarray  # (K^2, 2) coordinate indices
    triple_index: np.ndarray  # (K^3, 3)
    pairs: list = field(default_factory=list)

    @property
    def pair_points(self) -> np.ndarray:
        return self.x[self.pair_index]

    @property
    def triple_points(self) -> np.ndarray:
        return self.x[self.triple_index]

    @property
    def pair_volumes(self) -> np.ndarray:
        return np.prod(self.widths[self.pair_index], axis=1)

    @property
    def triple_volumes(self) -> np.ndarray:
        return np.prod(self.widths[self.triple_index], axis=1)

    def projection(self, B: Subset) -> np.ndarray:
        """For each trivariate point, the row of its projection in the pair grid."""
        i, j = B.indices
        K = len(self.x)
        return self.triple_index[:, i] * K + self.triple_index[:, j]


def cell_widths(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    edges = np.concatenate([[x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]])
    return np.diff(edges)


def build_grid(config: ExperimentConfig | None = None) -> Grid:
    config = config or ExperimentConfig()
    probs = config.probabilities
    x = np.array([frechet_quantile(p) for p in probs])
    K = len(x)
    pair_index = np.array(list(itertools.product(range(K), repeat=2)))
    triple_index = np.array(list(itertools.product(range(K), repeat=3)))
    pairs = [S for S in pickands_variables(3) if S.size == 2]
    return Grid(probs, x, cell_widths(x), pair_index, triple_index, pairs)


def integrated_square_deviation(estimate, truth, volumes) -> float:
    """Midpoint-rule integral of the squared deviation over the grid's hull."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if estimate.shape != volumes.shape or truth.shape != volumes.shape:
        raise ValueError("estimates, truth and cell volumes must cover the same grid")
    return float(np.sum(volumes * (estimate - truth) ** 2))


def rmse(errors) -> np.ndarray:
    """Root mean square over the first axis (replications)."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0 or errors.shape[0] == 0:
        raise ValueError("no replications accumulated")
    return np.sqrt(np.mean(errors**2, axis=0))


@dataclass(frozen=True, eq=False)
class ReplicationResult:
    pair_u: np.ndarray  # (3, K^2)
    pair_c: np.ndarray  # (3, K^3) pair estimate at each trivariate point
    triple_u: np.ndarray  # (K^3,)
    triple_c: np.ndarray  # (K^3,)
    changed: np.ndarray  # (K^3,) bool


class _Context:
    """Per-process cache of grid-dependent but sample-independent data."""

    def __init__(self, grid: Grid, opts: SolverOptions):
        self.grid = grid
        self.opts = opts
        self.batch = build_batch(grid.triple_points)
        self.proj = {B: grid.projection(B) for B in grid.pairs}
        self.s_pairs = {B: np.sum(1.0 / grid.pair_points, axis=1) for B in grid.pairs}
        self.s_triple = np.sum(1.0 / grid.triple_points, axis=1)


def run_replication(alpha: float, n: int, rng: RngStream, grid: Grid | None = None,
                    opts: SolverOptions | None = None, _ctx: _Context | None = None):
    ctx = _ctx or _Context(grid or build_grid(), opts or SolverOptions())
    g = ctx.grid
    sample = sample_logistic(LogisticModel(alpha, 3), n, rng)
    pair_u = np.empty((3, len(g.pair_index)))
    inv = np.empty((len(g.triple_index), 4))
    for k, B in enumerate(g.pairs):
        _, a_tilde, inv_sums = pickands_on_points(sample, B, g.pair_points)
        pair_u[k] = ctx.s_pairs[B] * a_tilde
        inv[:, k] = inv_sums[ctx.proj[B]]
    full = Subset(0b111, 3)
    _, a_tilde, inv_sums = pickands_on_points(sample, full, g.triple_points)
    triple_u = ctx.s_triple * a_tilde
    inv[:, 3] = inv_sums
    try:
        out = solve_batch(ctx.batch, n, inv, ctx.opts)
    except SolverError as exc:
        raise ExperimentError(f"constrained solve failed for alpha={alpha}, {rng}: {exc}") from exc
    v_c = out["a"] * ctx.batch["s"]
    return ReplicationResult(pair_u, v_c[:, :3].T.copy(), triple_u, v_c[:, 3].copy(),
                             out["changed"])


@dataclass
class AlphaSummary:
    """Per-alpha accumulators, folded in replication order."""

    alpha: float
    reps: int = 0
    sq_pair_u: np.ndarray = None
    sq_pair_c: np.ndarray = None
    sq_triple_u: np.ndarray = None
    sq_triple_c: np.ndarray = None
    t_u: np.ndarray = None  # summed over replications, order: pairs then triple
    t_c: np.ndarray = None
    reps_changed: int = 0
    points_changed: int = 0


@dataclass(frozen=True, eq=False)
class GridResult:
    config: ExperimentConfig
    grid: Grid
    summaries: list

    def rmse_rows(self):
        """``(alpha, B, y, rmse_u, rmse_c)`` per grid point; pair y has None at the unused slot."""
        g = self.grid
        K = len(g.x)
        for s in self.summaries:
            R = s.reps
            for k, B in enumerate(g.pairs):
                ru = np.sqrt(s.sq_pair_u[k] / R)
                rc = np.sqrt(s.sq_pair_c[k] / (R * K))
                for p, idx in enumerate(g.pair_index):
                    y = [None, None, None]
                    for coord, xi in zip(B.indices, idx):
                        y[coord] = g.x[xi]
                    yield s.alpha, B, y, ru[p], rc[p]
            ru = np.sqrt(s.sq_triple_u / R)
            rc = np.sqrt(s.sq_triple_c / R)
            full = Subset(0b111, 3)
            for p, idx in enumerate(g.triple_index):
                yield s.alpha, full, list(g.x[idx]), ru[p], rc[p]

    def tdev_rows(self):
        subsets = self.grid.pairs + [Subset(0b111, 3)]
        for s in self.summaries:
            for k, B in enumerate(subsets):
                yield s.alpha, B, s.t_u[k] / s.reps, s.t_c[k] / s.reps

    def changed_rows(self):
        K3 = len(self.grid.triple_index)
        for s in self.summaries:
            yield s.alpha, 100.0 * s.reps_changed / s.reps, 100.0 * s.points_changed / (s.reps * K3)

    def table(self) -> dict:
        """``{alpha: {label: (T_u, T_c)}}``."""
        out = {}
        for a, B, tu, tc in self.tdev_rows():
            out.setdefault(a, {})[B.label] = (tu, tc)
        return out

    def percent_changed(self) -> dict:
        return {a: (pr, pp) for a, pr, pp in self.changed_rows()}

    def ratios(self, alpha: float, label: str) -> np.ndarray:
        return np.array([rc / ru for a, B, _, ru, rc in self.rmse_rows()
                         if a == alpha and B.label == label and ru > 0])


def _fold(summary: AlphaSummary, rep: ReplicationResult, truth: dict, grid: Grid):
    K = len(grid.x)
    pv, tv = grid.pair_volumes, grid.triple_volumes
    eu = rep.pair_u - truth["pair"]  # (3, K^2)
    ec = rep.pair_c - truth["pair_lift"]  # (3, K^3)
    tu = rep.triple_u - truth["triple"]
    tc = rep.triple_c - truth["triple"]
    # pooled lifted errors per pair grid point
    ec_sq = np.stack([np.bincount(grid.projection(B), weights=ec[k] ** 2, minlength=K * K)
                      for k, B in enumerate(grid.pairs)])
    t_u = np.concatenate([eu**2 @ pv, [np.sum(tv * tu**2)]])
    t_c = np.concatenate([(ec_sq @ pv) / K, [np.sum(tv * tc**2)]])
    if summary.reps == 0:
        summary.sq_pair_u = eu**2
        summary.sq_pair_c = ec_sq
        summary.sq_triple_u = tu**2
        summary.sq_triple_c = tc**2
        summary.t_u, summary.t_c = t_u, t_c
    else:
        summary.sq_pair_u = summary.sq_pair_u + eu**2
        summary.sq_pair_c = summary.sq_pair_c + ec_sq
        summary.sq_triple_u = summary.sq_triple_u + tu**2
        summary.sq_triple_c = summary.sq_triple_c + tc**2
        summary.t_u = summary.t_u + t_u
        summary.t_c = summary.t_c + t_c
    summary.reps += 1
    summary.reps_changed += int(rep.changed.any())
    summary.points_changed += int(rep.changed.sum())


def true_values(alpha: float, grid: Grid) -> dict:
    pair = np.stack([_logistic_V(alpha, grid.pair_points) for _ in grid.pairs])
    lift = np.stack([pair[k][grid.projection(B)] for k, B in enumerate(grid.pairs)])
    return dict(pair=pair, pair_lift=lift, triple=_logistic_V(alpha, grid.triple_points))


_worker_ctx: _Context | None = None


def _init_worker(grid, opts):
    global _worker_ctx
    _worker_ctx = _Context(grid, opts)


def _run_task(task):
    alpha, n, seed, stream = task
    return run_replication(alpha, n, RngStream(seed, stream), _ctx=_worker_ctx)


def run_experiment(config: ExperimentConfig | None = None, threads: int = 1,
                   opts: SolverOptions | None = None, progress=None) -> GridResult:
    """Run every (alpha, replication) pair and aggregate in a fixed order.

    Replication ``r`` at the ``k``-th alpha draws from stream ``(k, r)`` of
    the master seed, so the result does not depend on ``threads``.
    """
    config = config or ExperimentConfig()
    opts = opts or SolverOptions()
    grid = build_grid(config)
    tasks = [(a, config.n, config.seed, (k, r))
             for k, a in enumerate(config.alphas) for r in range(config.replications)]
    summaries = {a: AlphaSummary(a) for a in config.alphas}
    truths = {a: true_values(a, grid) for a in config.alphas}

    if threads <= 1:
        _init_worker(grid, opts)
        results = map(_run_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(grid, opts))
        results = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * threads)))
    try:
        for task, rep in zip(tasks, results):
            a = task[0]
            _fold(summaries[a], rep, truths[a], grid)
            if progress is not None:
                progress(task)
    finally:
        if pool is not None:
            pool.shutdown()
    return GridResult(config, grid, [summaries[a] for a in config.alphas])


def config_echo(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["alphas"] = list(config.alphas)
    d["probabilities"] = [float(p) for p in config.probabilities]
    return d
