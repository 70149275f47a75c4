"""Experiment harness: failure-fraction sweeps, algorithm comparison,
threshold estimation.

A sweep trial plants a (rank+1)-regular bipartite graph, adds independent
extra edges with probability c/n each, draws a fresh rank-r instance with
factor entries uniform on [-1, 1] and a fresh random initialization from the
same box, and runs one algorithm against the failure criterion: the trial
fails if the reconstruction error never drops below the threshold within the
iteration cap (divergence included, tallied separately).

Every trial's random streams derive from (master seed, algorithm code,
c index, trial index), so sweep results are bitwise identical no matter how
trials are scheduled across workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import gen_er_edges, gen_random_regular_bipartite, max_degree, union
from .instance import InitSpec, Instance, gen_rank_r_instance, make_init
from .solver import FactorState, MessageState, SolveConfig, run
from .textio import fmt

__all__ = [
    "SweepConfig",
    "SweepCell",
    "run_sweep",
    "write_sweep_csv",
    "read_sweep_csv",
    "estimate_threshold",
    "ThresholdEstimate",
    "bootstrap_threshold",
    "compare_algorithms",
    "CompareResult",
    "write_compare_csv",
    "read_compare_csv",
]

_ALG_CODES = {"vls": 0, "els": 1}

SWEEP_CSV_HEADER = ("algorithm,r,n,c,trials,failures,diverged,"
                    "failure_fraction,mean_success_iters")
COMPARE_CSV_HEADER = "algorithm,iteration,normalized_index,rms"


@dataclass(frozen=True)
class SweepConfig:
    """Grid and budget for one failure-fraction sweep."""

    rank: int = 2
    n: int = 100
    c_grid: tuple = tuple(float(c) for c in range(21))
    planted_degree: int | None = None  # default rank + 1
    trials: int = 200
    failure_rms: float = 1e-3
    iteration_cap: int = 500
    algorithms: tuple = ("vls", "els")
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.c_grid:
            raise ValueError("c_grid must be non-empty")
        if min(self.c_grid) < 0:
            raise ValueError("c_grid entries must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.iteration_cap < 0:
            raise ValueError("iteration_cap must be >= 0")
        for alg in self.algorithms:
            if alg not in _ALG_CODES:
                raise ValueError(f"unknown algorithm {alg!r}")

    @property
    def degree(self) -> int:
        return self.rank + 1 if self.planted_degree is None else self.planted_degree


@dataclass(frozen=True)
class SweepCell:
    """Aggregated outcomes for one (algorithm, c) grid point."""

    algorithm: str
    rank: int
    n: int
    c: float
    trials: int
    failures: int
    diverged: int
    mean_success_iters: float

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.trials


def _run_trial(algorithm: str, rank: int, n: int, degree: int, c: float,
               failure_rms: float, iteration_cap: int, master_seed: int,
               c_index: int, trial_index: int):
    """One trial.  Returns (converged, diverged, iterations)."""
    if math.isinf(failure_rms):
        # Any finite initial error already satisfies the criterion.
        return True, False, 0
    key = [master_seed, _ALG_CODES[algorithm], c_index, trial_index]
    g = gen_random_regular_bipartite(n, degree, key + [0])
    if c > 0:
        g = union(g, gen_er_edges(n, c, key + [1]))
    inst = gen_rank_r_instance(n, rank, g, key + [2])
    rng = np.random.default_rng(key + [3])
    if algorithm == "vls":
        init = FactorState(rng.uniform(-1.0, 1.0, (n, rank)),
                           rng.uniform(-1.0, 1.0, (n, rank)))
    else:
        E = g.n_edges
        init = MessageState(rng.uniform(-1.0, 1.0, (E, rank)),
                            rng.uniform(-1.0, 1.0, (E, rank)))
    cfg = SolveConfig(algorithm=algorithm, max_iterations=iteration_cap,
                      rms_tolerance=failure_rms,
                      divergence_cap=max(1e6, 1e3 * failure_rms))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, trace = run(inst, init, cfg)
    return (trace.status == "converged", trace.status == "diverged",
            trace.iterations)


def _trial_task(args):
    alg, c_index, trial_index, cfg_fields = args
    rank, n, degree, c_grid, failure_rms, cap, master_seed = cfg_fields
    out = _run_trial(alg, rank, n, degree, c_grid[c_index], failure_rms, cap,
                     master_seed, c_index, trial_index)
    return alg, c_index, trial_index, out


def run_sweep(config: SweepConfig, workers: int = 1):
    """All trials of the sweep, aggregated per (algorithm, c).

    ``workers`` > 1 runs trials in a process pool; aggregation is by trial
    index, so the output is identical for any worker count.
    """
    cfg_fields = (config.rank, config.n, config.degree, tuple(config.c_grid),
                  config.failure_rms, config.iteration_cap, config.master_seed)
    tasks = [(alg, ci, ti, cfg_fields)
             for alg in config.algorithms
             for ci in range(len(config.c_grid))
             for ti in range(config.trials)]
    outcomes = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for alg, ci, ti, out in pool.map(_trial_task, tasks,
                                             chunksize=max(1, len(tasks) // (8 * workers))):
                outcomes[(alg, ci, ti)] = out
    else:
        for task in tasks:
            alg, ci, ti, out = _trial_task(task)
            outcomes[(alg, ci, ti)] = out

    cells = []
    for alg in config.algorithms:
        for ci, c in enumerate(config.c_grid):
            trial_outcomes = [outcomes[(alg, ci, ti)] for ti in range(config.trials)]
            failures = sum(1 for conv, _, _ in trial_outcomes if not conv)
            diverged = sum(1 for _, div, _ in trial_outcomes if div)
            success_iters = [it for conv, _, it in trial_outcomes if conv]
            mean_iters = (sum(success_iters) / len(success_iters)
                          if success_iters else float("nan"))
            cells.append(SweepCell(alg, config.rank, config.n, float(c),
                                   config.trials, failures, diverged, mean_iters))
    return cells


def write_sweep_csv(cells, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for cell in cells:
            fh.write(
                f"{cell.algorithm},{cell.rank},{cell.n},{fmt(cell.c)},"
                f"{cell.trials},{cell.failures},{cell.diverged},"
                f"{fmt(cell.failure_fraction)},{fmt(cell.mean_success_iters)}\n")


def read_sweep_csv(path):
    cells = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != SWEEP_CSV_HEADER:
            raise ValueError(f"unexpected sweep header {header!r} in {path}")
        for line in fh:
            alg, r, n, c, trials, failures, diverged, _frac, mean_iters = \
                line.strip().split(",")
            cells.append(SweepCell(alg, int(r), int(n), float(c), int(trials),
                                   int(failures), int(diverged),
                                   float(mean_iters)))
    return cells


def estimate_threshold(c_values, fractions) -> float | None:
    """c at which linearly interpolated failure fraction crosses 0.5.

    Scans the grid in increasing c for the first drop from >= 0.5 to < 0.5;
    returns None when the curve never crosses.
    """
    order = np.argsort(np.asarray(c_values, dtype=float))
    cs = np.asarray(c_values, dtype=float)[order]
    fs = np.asarray(fractions, dtype=float)[order]
    for k in range(len(cs) - 1):
        if fs[k] >= 0.5 > fs[k + 1]:
            return float(cs[k] + (fs[k] - 0.5) / (fs[k] - fs[k + 1])
                         * (cs[k + 1] - cs[k]))
    return None


@dataclass(frozen=True)
class ThresholdEstimate:
    """Point estimate and bootstrap confidence interval for the critical c."""

    algorithm: str
    estimate: float | None
    ci_low: float | None
    ci_high: float | None
    crossing_rate: float  # fraction of bootstrap resamples with a crossing


def bootstrap_threshold(cells, resamples: int = 1000, seed: int = 0,
                        level: float = 0.95) -> ThresholdEstimate:
    """Threshold estimate for one algorithm's sweep cells, with a bootstrap
    CI obtained by resampling each grid point's trial outcomes."""
    cells = sorted(cells, key=lambda cell: cell.c)
    if not cells:
        raise ValueError("no sweep cells given")
    algs = {cell.algorithm for cell in cells}
    if len(algs) != 1:
        raise ValueError(f"cells mix algorithms {sorted(algs)}")
    cs = [cell.c for cell in cells]
    fs = [cell.failure_fraction for cell in cells]
    point = estimate_threshold(cs, fs)
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(resamples):
        resampled = [rng.binomial(cell.trials, cell.failure_fraction) / cell.trials
                     for cell in cells]
        est = estimate_threshold(cs, resampled)
        if est is not None:
            draws.append(est)
    rate = len(draws) / resamples
    if point is None or not draws:
        return ThresholdEstimate(cells[0].algorithm, point, None, None, rate)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail])
    return ThresholdEstimate(cells[0].algorithm, point, float(lo), float(hi), rate)


@dataclass(frozen=True)
class CompareResult:
    """Both algorithms on one instance from the same initialization seed.

    ``rows`` are (algorithm, iteration, normalized index, rms) per recorded
    point.  The normalized index is iteration / T for the vertex algorithm
    and max_degree * iteration / T for the edge algorithm (whose sweeps cost
    about a max_degree factor more), with T fixed to the larger of the two
    runs' final iteration counts so both curves share one denominator.
    """

    rows: tuple
    traces: dict
    max_degree: int
    total_iterations: int

    def first_crossing(self, algorithm: str, threshold: float) -> float | None:
        """Smallest normalized index at which rms drops to the threshold."""
        for alg, _, idx, value in self.rows:
            if alg == algorithm and value <= threshold:
                return idx
        return None


def compare_algorithms(inst: Instance, init_spec: InitSpec,
                       config: SolveConfig | None = None) -> CompareResult:
    """Run VLS and ELS on the same instance and initialization seed."""
    base = config if config is not None else SolveConfig()
    delta = max_degree(inst.graph)
    traces = {}
    for alg, kind in (("vls", "vertex"), ("els", "message")):
        cfg = SolveConfig(algorithm=alg, max_iterations=base.max_iterations,
                          rms_tolerance=base.rms_tolerance,
                          divergence_cap=base.divergence_cap, seed=base.seed,
                          record_every=base.record_every)
        init = make_init(inst, init_spec, kind=kind)
        _, traces[alg] = run(inst, init, cfg)
    T = max(traces["vls"].iterations, traces["els"].iterations, 1)
    rows = []
    for alg, scale in (("vls", 1.0), ("els", float(delta))):
        for t, value, _ in traces[alg].records:
            rows.append((alg, t, scale * t / T, value))
    return CompareResult(tuple(rows), traces, delta, T)


def write_compare_csv(result: CompareResult, path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(COMPARE_CSV_HEADER + "\n")
        for alg, t, idx, value in result.rows:
            fh.write(f"{alg},{t},{fmt(idx)},{fmt(value)}\n")


def read_compare_csv(path):
    """Rows of a comparison CSV as (algorithm, iteration, index, rms)."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != COMPARE_CSV_HEADER:
            raise ValueError(f"unexpected comparison header {header!r} in {path}")
        for line in fh:
            alg, t, idx, value = line.strip().split(",")
            rows.append((alg, int(t), float(idx), float(value)))
    return rows
