"""Numerical invariant suite behind ``dynetc check``.

Each check restates a property that holds for every exact trajectory of the
event-triggered loop, so a failure points at the implementation (or at a
tolerance that is too tight for the chosen step size).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .config import CheckBlock
from .plant import LinearPlant
from .sim import SimConfig, first_execution_time, simulate
from .stats import circle_initial_conditions, monitor
from .triggers import DynamicGenerator, StaticGenerator

ETA_RTOL = 1e-8
BOUND_TOL = 1e-6
W_RTOL = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    witnesses: list[dict] = field(default_factory=list)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name:<14} margin={self.margin:.3e} {self.detail}"


@dataclass
class CheckReport:
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[dict]:
        return [{"check": r.name, "witnesses": r.witnesses}
                for r in self.results if not r.passed]


def random_states(rng: np.random.Generator, count: int, box: float = 10.0) -> list[np.ndarray]:
    out = []
    while len(out) < count:
        x = rng.uniform(-box, box, size=2)
        if np.any(x != 0):
            out.append(x)
    return out


def check_invariants_and_bound(plant: LinearPlant, params: CheckBlock,
                            sim_cfg: SimConfig) -> list[CheckResult]:
    """eta >= 0, eta + theta*s >= 0, the exponential V bound, V <= W and W monotone."""
    cfg = SimConfig(dt=sim_cfg.dt, horizon=params.invariant_horizon, event_tol=sim_cfg.event_tol,
                    max_events=sim_cfg.max_events, record_stride=sim_cfg.record_stride)
    x0s = circle_initial_conditions(10.0, params.invariant_count)
    eta_margin = trig_margin = np.inf
    bound_margin = w_margin = np.inf
    eta_w, trig_w, bound_w, w_w = [], [], [], []
    for sigma in params.invariant_sigmas:
        gens = [StaticGenerator(sigma)] + [DynamicGenerator(sigma, th) for th in params.invariant_thetas]
        for gen in gens:
            for x0 in x0s:
                traj = simulate(plant, gen, x0, cfg)
                m = monitor(traj, plant, traj.generator, x0)
                case = {"generator": traj.generator.to_dict(), "x0": list(m.x0)}
                tol = ETA_RTOL * (1.0 + max(m.max_eta, 0.0))
                eta_margin = min(eta_margin, m.min_eta + tol)
                if m.min_eta < -tol:
                    eta_w.append({**case, "min_eta": m.min_eta})
                if isinstance(gen, DynamicGenerator):
                    trig_margin = min(trig_margin, m.min_trigger + ETA_RTOL)
                    if m.min_trigger < -ETA_RTOL:
                        trig_w.append({**case, "min_trigger": m.min_trigger})
                bound_margin = min(bound_margin, BOUND_TOL - m.bound_violation)
                if m.bound_violation > BOUND_TOL or m.max_v_minus_w > 0:
                    bound_w.append({**case, "violation": m.bound_violation,
                                    "max_v_minus_w": m.max_v_minus_w})
                w_tol = W_RTOL * m.w0
                w_margin = min(w_margin, (w_tol - m.w_max_increase) / m.w0)
                if m.w_max_increase > w_tol:
                    w_w.append({**case, "w_max_increase": m.w_max_increase})
    return [
        CheckResult("eta-nonneg", not eta_w, float(eta_margin), "eta >= 0", eta_w),
        CheckResult("trigger-nonneg", not trig_w, float(trig_margin),
                    "eta + theta*s >= 0", trig_w),
        CheckResult("perf-bound", not bound_w, float(bound_margin),
                    "V <= V0 exp((sigma-1) kappa t) and V <= W", bound_w),
        CheckResult("W-monotone", not w_w, float(w_margin), "W non-increasing", w_w),
    ]


def check_static_fires_first(plant: LinearPlant, params: CheckBlock, sim_cfg: SimConfig,
                       rng: np.random.Generator) -> CheckResult:
    """Static first execution never comes after the dynamic one from the same state."""
    cfg = SimConfig(dt=sim_cfg.dt, horizon=params.first_horizon, event_tol=sim_cfg.event_tol,
                    record_stride=sim_cfg.record_stride)
    tol = 2 * cfg.event_tol
    cases = [(x, 0.0) for x in random_states(rng, params.first_samples)]
    cases += [(x, float(rng.uniform(0.0, 1.0)) or 1.0)
              for x in random_states(rng, params.first_eta_samples)]
    flip = params.fault == "flip-error-term"
    stat = StaticGenerator(params.sigma)
    margin = np.inf
    witnesses = []
    for x0, eta0 in cases:
        ts = first_execution_time(plant, stat, x0, 0.0, cfg, flip_error_term=flip)
        for th in params.first_thetas:
            td = first_execution_time(plant, DynamicGenerator(params.sigma, th), x0, eta0, cfg)
            gap = td.time + tol - ts.time
            margin = min(margin, gap)
            if gap < 0:
                witnesses.append({"x0": x0.tolist(), "eta0": eta0, "theta": th,
                                  "sigma": params.sigma, "t_static": ts.time,
                                  "t_dynamic": td.time})
    return CheckResult("static-first", not witnesses, float(margin),
                       f"t_static <= t_dynamic + 2 tol over {len(cases)} states", witnesses)


def check_theta_ordering(plant: LinearPlant, params: CheckBlock, sim_cfg: SimConfig,
                  rng: np.random.Generator) -> CheckResult:
    """A smaller theta never fires earlier from the same (x0, eta0)."""
    cfg = SimConfig(dt=sim_cfg.dt, horizon=params.first_horizon, event_tol=sim_cfg.event_tol,
                    record_stride=sim_cfg.record_stride)
    tol = 2 * cfg.event_tol
    margin = np.inf
    witnesses = []
    for x0 in random_states(rng, params.order_samples):
        eta0 = float(rng.uniform(0.0, 1.0)) or 1.0
        for lo_th, hi_th in params.order_pairs:
            t_small = first_execution_time(plant, DynamicGenerator(params.sigma, lo_th),
                                           x0, eta0, cfg)
            t_big = first_execution_time(plant, DynamicGenerator(params.sigma, hi_th),
                                         x0, eta0, cfg)
            gap = t_small.time + tol - t_big.time
            margin = min(margin, gap)
            if gap < 0:
                witnesses.append({"x0": x0.tolist(), "eta0": eta0, "thetas": [lo_th, hi_th],
                                  "t_small_theta": t_small.time, "t_large_theta": t_big.time})
    return CheckResult("theta-order", not witnesses, float(margin),
                       f"t(theta_small) >= t(theta_large) - 2 tol, {params.order_samples} states",
                       witnesses)


def run_checks(plant: LinearPlant, params: CheckBlock, sim_cfg: SimConfig) -> CheckReport:
    if not isinstance(plant, LinearPlant):
        raise TypeError("the check suite runs on linear plants")
    rng = np.random.default_rng(params.seed)
    results = check_invariants_and_bound(plant, params, sim_cfg)
    results.append(check_static_fires_first(plant, params, sim_cfg, rng))
    results.append(check_theta_ordering(plant, params, sim_cfg, rng))
    return CheckReport(results)


def report_dict(report: CheckReport) -> dict:
    return {"passed": report.passed, "results": [asdict(r) for r in report.results]}
