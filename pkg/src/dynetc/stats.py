"""Batch experiments: inter-execution statistics over initial-condition sets.

A table cell is one generator record run from every initial condition.
Intervals from all runs of a cell are pooled into one sample; the interval
cut off by the horizon is never counted because only gaps between recorded
executions enter the pool.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .plant import LinearPlant, NonlinearProblem
from .sim import (SimConfig, SimulationError, Trajectory, excess_total_variation,
                  max_rise, performance_bound_check, simulate, w_max_increase)
from .triggers import DynamicGenerator, Generator, StaticGenerator

BENCHMARK_SIGMAS = (0.001, 0.01, 0.1)
BENCHMARK_THETAS = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class RunStats:
    mean: float
    sd: float
    cv: float
    count: int
    min: float


@dataclass(frozen=True)
class CellKey:
    generator: str
    sigma: float
    theta: float

    def sort_key(self):
        return (self.sigma, self.generator != "static", self.theta)


@dataclass(frozen=True)
class RunMonitor:
    """Per-trajectory invariant margins kept instead of the full trajectory."""

    x0: tuple
    n_samples: int
    n_events: int
    status: str
    min_eta: float
    max_eta: float
    min_trigger: float
    w_max_increase: float
    w0: float
    bound_violation: float
    max_v_minus_w: float
    v_final_ratio: float


@dataclass
class Cell:
    key: CellKey
    generator: Generator
    stats: RunStats | None = None
    monitors: list[RunMonitor] = field(default_factory=list)
    error: str | None = None


def circle_initial_conditions(radius: float, count: int, dim: int = 2) -> list[np.ndarray]:
    """``[r cos(2 pi i / N), r sin(2 pi i / N)]`` for ``i = 1..N``."""
    if dim != 2:
        raise StatsError("circle initial conditions need a 2-state plant; "
                         "give an explicit list instead")
    if count < 1 or not radius > 0:
        raise StatsError("count must be >= 1 and radius > 0")
    return [np.array([radius * math.cos(2 * math.pi * i / count),
                      radius * math.sin(2 * math.pi * i / count)])
            for i in range(1, count + 1)]


def pooled_intervals(trajectories: Iterable[Trajectory]) -> np.ndarray:
    chunks = [np.diff(tr.execution_times) for tr in trajectories]
    return np.concatenate(chunks) if chunks else np.empty(0)


def interval_stats(intervals: np.ndarray) -> RunStats:
    if len(intervals) == 0:
        raise StatsError("no inter-execution intervals to pool")
    mean = float(np.mean(intervals))
    sd = float(np.std(intervals))  # population formula
    cv = sd / mean if mean > 0 else math.nan
    return RunStats(mean=mean, sd=sd, cv=cv, count=len(intervals), min=float(np.min(intervals)))


def inter_execution_stats(trajectories: Sequence[Trajectory]) -> RunStats:
    return interval_stats(pooled_intervals(trajectories))


def cell_key(gen: Generator) -> CellKey:
    return CellKey(gen.kind, float(gen.sigma), float(gen.theta))


def benchmark_grid(sigmas=BENCHMARK_SIGMAS, thetas=BENCHMARK_THETAS, static: bool = True) -> list[Generator]:
    """Static plus dynamic generators with ``lambda = (1 - sigma) kappa``."""
    out: list[Generator] = []
    for s in sigmas:
        if static:
            out.append(StaticGenerator(s))
        out.extend(DynamicGenerator(s, th) for th in thetas)
    return out


@dataclass
class BatchSpec:
    plant: LinearPlant | NonlinearProblem
    generators: list[Generator]
    initial_conditions: list[np.ndarray]
    config: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if not self.initial_conditions:
            raise StatsError("at least one initial condition is required")
        if not self.generators:
            raise StatsError("at least one generator is required")


def monitor(traj: Trajectory, plant, gen: Generator, x0) -> RunMonitor:
    kappa = getattr(plant, "kappa", None)
    if kappa is not None:
        bc = performance_bound_check(traj, gen.sigma, kappa)
        viol, vw = bc.max_violation, bc.max_v_minus_w
    else:
        viol, vw = math.nan, float(np.max(traj.V_values - traj.W_values))
    V0 = traj.V_values[0]
    return RunMonitor(
        x0=tuple(float(v) for v in x0),
        n_samples=len(traj.times),
        n_events=traj.n_events,
        status=traj.status,
        min_eta=float(np.min(traj.etas)),
        max_eta=float(np.max(traj.etas)),
        min_trigger=float(np.min(traj.trigger_values)),
        w_max_increase=w_max_increase(traj),
        w0=float(traj.W_values[0]),
        bound_violation=viol,
        max_v_minus_w=vw,
        v_final_ratio=float(traj.V_values[-1] / V0) if V0 > 0 else 0.0,
    )


def run_cell(plant, gen: Generator, initial_conditions, config: SimConfig) -> Cell:
    if isinstance(gen, DynamicGenerator):
        gen = gen.bind(plant)
    cell = Cell(key=cell_key(gen), generator=gen)
    intervals = []
    try:
        for x0 in initial_conditions:
            traj = simulate(plant, gen, x0, config)
            intervals.append(np.diff(traj.execution_times))
            cell.monitors.append(monitor(traj, plant, gen, x0))
        cell.stats = interval_stats(np.concatenate(intervals))
    except (SimulationError, StatsError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _run_cell_args(args):
    return run_cell(*args)


def run_table(spec: BatchSpec, jobs: int = 1,
              on_cell: Callable[[Cell], None] | None = None) -> dict[CellKey, Cell]:
    """Run every generator over every initial condition.

    Cells are independent; with ``jobs > 1`` they fan out to a process pool.
    ``on_cell`` sees cells in completion order, the returned mapping is in
    key order either way.
    """
    work = [(spec.plant, g, spec.initial_conditions, spec.config) for g in spec.generators]
    keys = [cell_key(g) for g in spec.generators]
    if len(set(keys)) != len(keys):
        raise StatsError("duplicate (generator, sigma, theta) cells in grid")
    cells = []
    if isinstance(spec.plant, NonlinearProblem):
        jobs = 1  # registry closures do not pickle
    if jobs <= 1:
        for w in work:
            cell = run_cell(*w)
            cells.append(cell)
            if on_cell:
                on_cell(cell)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell_args, w) for w in work]
            for fut in as_completed(futures):
                cell = fut.result()
                cells.append(cell)
                if on_cell:
                    on_cell(cell)
    return {c.key: c for c in sorted(cells, key=lambda c: c.key.sort_key())}


@dataclass
class FigureSeries:
    label: str
    generator: Generator
    trajectory: Trajectory

    @property
    def t(self):
        return self.trajectory.times

    @property
    def V(self):
        return self.trajectory.V_values

    @property
    def W(self):
        return self.trajectory.W_values

    def excess_variation(self) -> float:
        return excess_total_variation(self.V)

    def max_rise(self) -> float:
        return max_rise(self.V)


def figure_generators(sigma: float = 0.001, thetas=(0.0, 0.1, 1.0),
                      static: bool = True) -> list[Generator]:
    gens: list[Generator] = [StaticGenerator(sigma)] if static else []
    gens.extend(DynamicGenerator(sigma, th) for th in thetas)
    return gens


def generator_label(gen: Generator) -> str:
    if isinstance(gen, StaticGenerator):
        return f"static_sigma{gen.sigma:g}"
    return f"dynamic_sigma{gen.sigma:g}_theta{gen.theta:g}"


def figure_series(plant, generators: Sequence[Generator], x0,
                  config: SimConfig | None = None) -> list[FigureSeries]:
    out = []
    for gen in generators:
        traj = simulate(plant, gen, x0, config)
        out.append(FigureSeries(generator_label(gen), traj.generator, traj))
    return out


TABLE_HEADER = ["generator", "sigma", "theta", "lambda", "mean", "sd", "cv", "min", "count"]


def table_row(cell: Cell) -> list[str]:
    gen = cell.generator
    lam = getattr(gen, "lam", None)
    f = lambda v: format(float(v), ".17g")
    head = [cell.key.generator, f(cell.key.sigma), f(cell.key.theta),
            f(lam) if lam is not None else ""]
    if cell.stats is None:
        return head + ["nan"] * 4 + ["0"]
    s = cell.stats
    return head + [f(s.mean), f(s.sd), f(s.cv), f(s.min), str(s.count)]
