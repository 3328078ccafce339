"""Closed-loop simulation with event detection.

The augmented state ``y = [x; eta]`` is integrated with classical RK4 at a
fixed base step while the sampled state ``x(t_i)`` is frozen.  After every
step the trigger value is evaluated; a sign change (positive to ``<= 0``)
is localized by bisection, re-integrating from the start of the step to
each midpoint.  The execution is applied at the lower end of the final
bracket, i.e. the last instant where the trigger was still positive.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernel
from .plant import LinearPlant, NonlinearProblem, closed_loop_field_linear
from .triggers import (DynamicGenerator, Generator, StaticGenerator,
                       dynamic_trigger_value, eta_derivative,
                       static_trigger_value_linear, static_trigger_value_nonlinear)

COMPLETED = "completed"
STABILIZED = "finite-time-stabilized"
MAX_EVENTS = "max-events-exceeded"

STAB_RTOL = 1e-9


class SimulationError(RuntimeError):
    pass


class NumericalBlowup(SimulationError):
    def __init__(self, last_time: float):
        super().__init__(f"non-finite state after t={last_time:.17g}")
        self.last_time = last_time


class EventLogicError(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    horizon: float = 10.0
    event_tol: float = 1e-10
    max_events: int = 10**7
    record_stride: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.event_tol < self.dt:
            raise ValueError("event_tol must be smaller than dt")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")
        if not self.horizon > self.dt:
            raise ValueError("horizon must exceed dt")
        if self.max_events < 1 or self.record_stride < 1:
            raise ValueError("max_events and record_stride must be >= 1")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "horizon": self.horizon, "event_tol": self.event_tol,
                "max_events": self.max_events, "record_stride": self.record_stride}


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    etas: np.ndarray
    V_values: np.ndarray
    W_values: np.ndarray
    trigger_values: np.ndarray
    execution_times: np.ndarray
    execution_states: np.ndarray
    status: str
    end_time: float
    generator: Generator | None = field(default=None, repr=False)

    @property
    def n_events(self) -> int:
        return len(self.execution_times) - 1

    def inter_execution_times(self) -> np.ndarray:
        return np.diff(self.execution_times)


# --- generic building blocks -------------------------------------------------

def rk4_step(field: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``dy/dt = field(y)``."""
    k1 = field(y)
    k2 = field(y + 0.5 * dt * k1)
    k3 = field(y + 0.5 * dt * k2)
    k4 = field(y + dt * k3)
    out = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup(float("nan"))
    return out


def locate_event(trigger: Callable[[float], float], t_lo: float, t_hi: float,
                 event_tol: float, open_lower: bool = False) -> tuple[float, float]:
    """Bisect a bracket with ``trigger(t_lo) > 0 >= trigger(t_hi)``.

    Returns the final ``(lo, hi)`` bracket, ``hi - lo <= event_tol``.  With
    ``open_lower`` the lower end is an execution instant whose own value is
    not required to be positive (it is excluded from the search).
    """
    if not open_lower and not trigger(t_lo) > 0:
        raise EventLogicError(f"trigger not positive at bracket start t={t_lo}")
    if not trigger(t_hi) <= 0:
        raise EventLogicError(f"no sign change in [{t_lo}, {t_hi}]")
    lo, hi = t_lo, t_hi
    while hi - lo > event_tol:
        mid = 0.5 * (lo + hi)
        if trigger(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return lo, hi


# --- system adapters ----------------------------------------------------------

class _System:
    """Augmented derivative, trigger and V for one (plant, generator) pair."""

    def __init__(self, plant: LinearPlant | NonlinearProblem, gen: Generator,
                 flip_error_term: bool = False):
        self.plant = plant
        self.gen = gen
        self.dynamic = isinstance(gen, DynamicGenerator)
        self.n = plant.n
        if isinstance(plant, LinearPlant):
            pbk = -plant.PBK if flip_error_term else plant.PBK
            self._pbk = pbk

            def static(x, e):
                return float(gen.sigma * (x @ plant.Q @ x) - 2.0 * (x @ pbk @ e))

            self.static = static if flip_error_term else (
                lambda x, e: static_trigger_value_linear(plant, gen.sigma, x, e))
            self.fieldx = lambda x, e: closed_loop_field_linear(plant, x, e)
            self.V = lambda x: float(x @ plant.P @ x)
        else:
            if flip_error_term:
                raise ValueError("fault injection is only wired for linear plants")
            self.static = lambda x, e: static_trigger_value_nonlinear(plant, gen, x, e)
            self.fieldx = plant.field
            self.V = plant.V

    def deriv(self, y: np.ndarray, xs: np.ndarray) -> np.ndarray:
        x = y[:self.n]
        e = xs - x
        out = np.empty_like(y)
        out[:self.n] = self.fieldx(x, e)
        if self.dynamic:
            # one evaluation of the static value feeds d(eta)/dt
            out[self.n] = eta_derivative(self.gen, y[self.n], self.static(x, e))
        else:
            out[self.n] = 0.0
        return out

    def trigger(self, y: np.ndarray, xs: np.ndarray) -> float:
        x = y[:self.n]
        s = self.static(x, xs - x)
        if self.dynamic:
            return dynamic_trigger_value(self.gen, y[self.n], s)
        return s


def _simulate_py(system: _System, x0: np.ndarray, eta0: float, cfg: SimConfig,
                 stop_first: bool):
    """Reference loop; same control flow as ``_kernel.run_linear``."""
    n = system.n
    y = np.concatenate([x0, [eta0]])
    xs = x0.copy()
    t = 0.0
    rec = [(t, y.copy(), system.trigger(y, xs))]
    ev = [(0.0, y.copy())]
    x0norm = float(np.linalg.norm(x0))
    if x0norm == 0.0:
        return rec, ev, STABILIZED, t
    end_tol = 1e-12 * max(1.0, cfg.horizon)
    just_exec = True
    k = 0
    status = COMPLETED

    def step(y0, h):
        try:
            return rk4_step(lambda z: system.deriv(z, xs), y0, h)
        except NumericalBlowup:
            raise NumericalBlowup(t) from None

    while cfg.horizon - t > end_tol:
        last = cfg.horizon - t <= cfg.dt
        h = cfg.horizon - t if last else cfg.dt
        yn = step(y, h)
        g = system.trigger(yn, xs)
        if g <= 0.0:
            y_start = y
            lo, _ = locate_event(lambda s: system.trigger(step(y_start, s), xs),
                                 0.0, h, cfg.event_tol, open_lower=True)
            if lo == 0.0:
                if just_exec:
                    raise SimulationError(f"dt too coarse: trigger non-positive within "
                                          f"one step of the execution at t={t:.17g}")
                ye = y.copy()
            else:
                ye = step(y, lo)
            te = t + lo
            rec.append((te, ye.copy(), system.trigger(ye, xs)))
            xs = ye[:n].copy()
            rec.append((te, ye.copy(), system.trigger(ye, xs)))
            ev.append((te, ye.copy()))
            y = ye
            t = te
            just_exec = True
            if stop_first:
                break
            if np.linalg.norm(xs) < STAB_RTOL * x0norm:
                status = STABILIZED
                break
            if len(ev) - 1 >= cfg.max_events:
                status = MAX_EVENTS
                break
        else:
            y = yn
            t = cfg.horizon if last else t + h
            k += 1
            just_exec = False
            if k % cfg.record_stride == 0 or last:
                rec.append((t, y.copy(), g))
    return rec, ev, status, t


_STATUS = {
    _kernel.COMPLETED: COMPLETED,
    _kernel.STABILIZED: STABILIZED,
    _kernel.MAX_EVENTS: MAX_EVENTS,
}


def _simulate_linear_fast(plant: LinearPlant, gen: Generator, x0: np.ndarray, eta0: float,
                          cfg: SimConfig, stop_first: bool, flip_error_term: bool):
    dynamic = isinstance(gen, DynamicGenerator)
    lam = gen.lam if dynamic else 0.0
    theta = gen.theta if dynamic else 0.0
    pbk = -plant.PBK if flip_error_term else plant.PBK
    rec, ev, code, t = _kernel.run_linear(
        np.ascontiguousarray(x0), float(eta0),
        np.ascontiguousarray(plant.A), np.ascontiguousarray(plant.BK),
        np.ascontiguousarray(plant.Q), np.ascontiguousarray(pbk),
        float(gen.sigma), float(lam), float(theta), dynamic,
        cfg.dt, cfg.horizon, cfg.event_tol, int(cfg.max_events), int(cfg.record_stride),
        stop_first, STAB_RTOL)
    if code == _kernel.BLOWUP:
        raise NumericalBlowup(t)
    if code == _kernel.TOO_COARSE:
        raise SimulationError(f"dt too coarse: trigger non-positive within one step of "
                              f"the execution at t={t:.17g}")
    return rec, ev, _STATUS[code], t


def _pack(rec, ev, status, t_end, n, V, gen) -> Trajectory:
    if isinstance(rec, np.ndarray):
        times = rec[:, 0].copy()
        Y = rec[:, 1:n + 2]
        trig = rec[:, n + 2].copy()
        et = ev[:, 0].copy()
        ex = ev[:, 1:n + 1].copy()
    else:
        times = np.array([r[0] for r in rec])
        Y = np.array([r[1] for r in rec])
        trig = np.array([r[2] for r in rec])
        et = np.array([e[0] for e in ev])
        ex = np.array([e[1][:n] for e in ev])
    states = np.ascontiguousarray(Y[:, :n])
    etas = Y[:, n].copy()
    Vs = V(states)
    return Trajectory(times=times, states=states, etas=etas, V_values=Vs, W_values=Vs + etas,
                      trigger_values=trig, execution_times=et, execution_states=ex,
                      status=status, end_time=float(t_end), generator=gen)


def _V_batch(plant: LinearPlant | NonlinearProblem):
    if isinstance(plant, LinearPlant):
        P = plant.P
        return lambda X: np.einsum("ij,jk,ik->i", X, P, X)
    return lambda X: np.array([plant.V(x) for x in X])


def simulate(plant: LinearPlant | NonlinearProblem, generator: Generator, x0,
             config: SimConfig | None = None, *, eta0: float = 0.0,
             engine: str = "auto", stop_at_first_event: bool = False,
             flip_error_term: bool = False) -> Trajectory:
    """Simulate the event-triggered closed loop from ``x0`` (with ``eta(0) = eta0``).

    ``engine`` selects the JIT loop (``"fast"``, linear plants only), the
    reference loop (``"python"``) or picks automatically.
    ``flip_error_term`` negates the cross term of the trigger; it exists only
    for fault-injection tests of the check suite.
    """
    cfg = config or SimConfig()
    x0 = np.array(x0, dtype=float)
    if x0.shape != (plant.n,):
        raise ValueError(f"x0 must have length {plant.n}, got shape {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if eta0 < 0:
        raise ValueError("eta0 must be nonnegative")
    gen = generator.bind(plant) if isinstance(generator, DynamicGenerator) else generator
    if isinstance(gen, StaticGenerator) and eta0 != 0:
        raise ValueError("static generators carry no internal variable")

    linear = isinstance(plant, LinearPlant)
    use_fast = engine == "fast" or (engine == "auto" and linear)
    if use_fast and not linear:
        raise ValueError("the fast engine handles linear plants only")
    if use_fast and isinstance(gen, DynamicGenerator) and gen.beta is not None:
        use_fast = engine == "fast"
        if use_fast:
            raise ValueError("the fast engine needs a linear beta (lambda)")
    if use_fast:
        rec, ev, status, t = _simulate_linear_fast(plant, gen, x0, eta0, cfg,
                                                   stop_at_first_event, flip_error_term)
    else:
        system = _System(plant, gen, flip_error_term)
        rec, ev, status, t = _simulate_py(system, x0, eta0, cfg, stop_at_first_event)
    return _pack(rec, ev, status, t, plant.n, _V_batch(plant), gen)


@dataclass(frozen=True)
class FirstExecution:
    time: float
    fired: bool


def first_execution_time(plant, generator: Generator, x0, eta0: float = 0.0,
                         config: SimConfig | None = None, **kw) -> FirstExecution:
    """Time of the first event from a fresh sample at ``x0`` with ``eta(0) = eta0``."""
    if not np.any(np.asarray(x0, dtype=float) != 0):
        raise ValueError("x0 must be nonzero")
    traj = simulate(plant, generator, x0, config, eta0=eta0, stop_at_first_event=True, **kw)
    if traj.n_events >= 1:
        return FirstExecution(float(traj.execution_times[1]), True)
    return FirstExecution(float(traj.end_time), False)


@dataclass(frozen=True)
class BoundCheck:
    max_violation: float     # max of (V(t) - V(0) e^{(sigma-1) kappa t}) / V(0)
    max_v_minus_w: float     # max of V - W; <= 0 when eta >= 0
    lambda_matches: bool     # False makes the check advisory


def performance_bound_check(traj: Trajectory, sigma: float, kappa: float) -> BoundCheck:
    """Compare V along ``traj`` with the exponential envelope ``V(0) e^{(sigma-1) kappa t}``."""
    V0 = traj.V_values[0]
    if V0 == 0:
        return BoundCheck(0.0, 0.0, True)
    env = V0 * np.exp((sigma - 1.0) * kappa * traj.times)
    viol = float(np.max((traj.V_values - env) / V0))
    vw = float(np.max(traj.V_values - traj.W_values))
    gen = traj.generator
    matches = True
    if isinstance(gen, DynamicGenerator):
        matches = gen.lam is not None and math.isclose(gen.lam, (1 - sigma) * kappa,
                                                       rel_tol=1e-12)
    return BoundCheck(viol, vw, matches)


# --- monitors -------------------------------------------------------------------

def w_max_increase(traj: Trajectory) -> float:
    """Largest increase of W between consecutive recorded samples."""
    if len(traj.W_values) < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(traj.W_values))))


def excess_total_variation(values: np.ndarray) -> float:
    """Total variation minus net decrease; zero for a non-increasing series."""
    d = np.diff(values)
    return float(np.sum(np.abs(d)) - (values[0] - values[-1]))


def max_rise(values: np.ndarray) -> float:
    """Largest rise over a run of consecutive non-decreasing samples."""
    best = 0.0
    start = values[0]
    for a, b in zip(values[:-1], values[1:]):
        if b < a:
            start = b
        else:
            best = max(best, b - start)
    return float(best)


# --- export -----------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"x{i + 1}" for i in range(n)], "eta", "V", "W", "trigger"])
        for k in range(len(traj.times)):
            w.writerow([_fmt(traj.times[k]), *map(_fmt, traj.states[k]), _fmt(traj.etas[k]),
                        _fmt(traj.V_values[k]), _fmt(traj.W_values[k]),
                        _fmt(traj.trigger_values[k])])


def write_executions_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t_i"])
        for i, t in enumerate(traj.execution_times):
            w.writerow([i, _fmt(t)])
