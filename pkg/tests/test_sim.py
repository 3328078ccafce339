import math

import numpy as np
import pytest
import scipy.linalg
import scipy.optimize

from dynetc.kinf import linear
from dynetc.plant import default_cubic_problem, nonlinear_problem
from dynetc.sim import (MAX_EVENTS, STABILIZED, COMPLETED, EventLogicError, NumericalBlowup,
                        SimConfig, excess_total_variation, first_execution_time, locate_event,
                        max_rise, performance_bound_check, rk4_step, simulate,
                        write_executions_csv, write_trajectory_csv)
from dynetc.triggers import DynamicGenerator, StaticGenerator

SHORT = SimConfig(horizon=1.0)


def exact_first_static_event(plant, sigma, x0):
    """Matrix-exponential solution of the held-input flow and a bracketing root search."""
    n = plant.n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = plant.A
    M[:n, n] = plant.BK @ x0
    def x_at(t):
        return (scipy.linalg.expm(M * t) @ np.append(x0, 1.0))[:n]
    def s(t):
        x = x_at(t)
        return sigma * x @ plant.Q @ x - 2 * x @ plant.PBK @ (x0 - x)
    grid = np.linspace(1e-9, 1.0, 20001)
    for a, b in zip(grid[:-1], grid[1:]):
        if s(b) <= 0:
            return scipy.optimize.brentq(s, a, b, xtol=1e-15)
    raise AssertionError("no event within 1 s")


def test_rk4_single_step_on_exponential():
    y = rk4_step(lambda y: -y, np.array([1.0]), 0.1)
    assert y[0] == pytest.approx(0.9048375, abs=1e-7)
    assert abs(y[0] - math.exp(-0.1)) < 1e-7


def test_rk4_blowup_detected():
    with pytest.raises(NumericalBlowup), np.errstate(over="ignore", invalid="ignore"):
        rk4_step(lambda y: y * 1e308, np.array([1e10]), 1.0)


def test_locate_event_linear_trigger():
    lo, hi = locate_event(lambda t: 1 - t, 0.0, 2.0, 1e-10)
    assert hi - lo <= 1e-10
    assert abs(hi - 1.0) <= 1e-10 and lo < 1.0 <= hi


def test_locate_event_requires_sign_change():
    with pytest.raises(EventLogicError):
        locate_event(lambda t: 1 + t, 0.0, 1.0, 1e-10)
    with pytest.raises(EventLogicError):
        locate_event(lambda t: -1.0, 0.0, 1.0, 1e-10)


@pytest.mark.parametrize("sigma, x0", [
    (0.1, [10.0, 0.0]), (0.01, [3.0, -4.0]), (0.5, [-1.0, 2.0]), (0.001, [0.0, 7.0]),
])
def test_first_static_event_matches_exact_flow(plant, sigma, x0):
    ref = exact_first_static_event(plant, sigma, np.array(x0))
    got = first_execution_time(plant, StaticGenerator(sigma), x0)
    assert got.fired
    assert abs(got.time - ref) <= 10 * 1e-10


def test_first_event_agrees_with_finer_step(plant):
    coarse = first_execution_time(plant, DynamicGenerator(0.1, 1.0), [10, 0], 0.3)
    fine = first_execution_time(plant, DynamicGenerator(0.1, 1.0), [10, 0], 0.3,
                                SimConfig(dt=1e-5))
    assert abs(coarse.time - fine.time) <= 10 * 1e-10


@pytest.mark.parametrize("gen", [
    StaticGenerator(0.01), DynamicGenerator(0.01, 0.0), DynamicGenerator(0.1, 1.0),
    DynamicGenerator(0.999, 100.0),
])
def test_fast_engine_matches_reference_loop(plant, gen):
    a = simulate(plant, gen, [6.0, -8.0], SHORT, engine="fast")
    b = simulate(plant, gen, [6.0, -8.0], SHORT, engine="python")
    assert a.status == b.status
    np.testing.assert_allclose(a.execution_times, b.execution_times, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.V_values[-1], b.V_values[-1], rtol=1e-10)


def test_zero_initial_state_is_stabilized(plant):
    traj = simulate(plant, StaticGenerator(0.1), [0.0, 0.0], SHORT)
    assert traj.status == STABILIZED
    assert list(traj.execution_times) == [0.0]


def test_max_events_status(plant):
    traj = simulate(plant, StaticGenerator(0.001), [10, 0], SimConfig(max_events=5))
    assert traj.status == MAX_EVENTS
    assert traj.n_events == 5


def test_runs_are_deterministic(plant):
    a = simulate(plant, DynamicGenerator(0.01, 0.1), [10, 0], SHORT)
    b = simulate(plant, DynamicGenerator(0.01, 0.1), [10, 0], SHORT)
    assert np.array_equal(a.execution_times, b.execution_times)
    assert np.array_equal(a.states, b.states)


def test_execution_times_increase_and_intervals_positive(plant):
    traj = simulate(plant, DynamicGenerator(0.001, 0.1), [7, 7])
    assert traj.status == COMPLETED
    iv = traj.inter_execution_times()
    assert np.all(iv > 0)
    assert traj.execution_times[0] == 0.0


def test_step_halving_moves_events_little(plant):
    a = simulate(plant, DynamicGenerator(0.1, 1.0), [10, 0], SimConfig(horizon=3.0))
    b = simulate(plant, DynamicGenerator(0.1, 1.0), [10, 0], SimConfig(horizon=3.0, dt=5e-5))
    assert a.n_events == b.n_events
    assert np.max(np.abs(a.execution_times - b.execution_times)) < 1e-3


def test_dynamic_invariants_along_run(plant):
    traj = simulate(plant, DynamicGenerator(0.01, 1.0), [-3, 9])
    assert traj.etas.min() >= -1e-8 * (1 + traj.etas.max())
    assert traj.trigger_values.min() >= -1e-8
    assert np.all(traj.V_values <= traj.W_values)
    assert np.max(np.diff(traj.W_values)) <= 1e-6 * traj.W_values[0]


def test_static_run_has_W_equal_V(plant):
    traj = simulate(plant, StaticGenerator(0.1), [10, 0], SHORT)
    assert np.array_equal(traj.V_values, traj.W_values)
    assert np.all(traj.etas == 0)


def test_bound_check(plant):
    traj = simulate(plant, DynamicGenerator(0.1, 1.0), [10, 0])
    bc = performance_bound_check(traj, 0.1, plant.kappa)
    assert bc.lambda_matches
    assert bc.max_violation <= 1e-6
    assert bc.max_v_minus_w <= 0
    mismatched = simulate(plant, DynamicGenerator(0.1, 1.0, lam=2.0), [10, 0], SHORT)
    assert not performance_bound_check(mismatched, 0.1, plant.kappa).lambda_matches


def test_nonlinear_cubic_run():
    prob = default_cubic_problem()
    gen = DynamicGenerator(0.5, 1.0, lam=0.5)
    traj = simulate(prob, gen, [2.0], SimConfig(dt=1e-3, horizon=5.0))
    assert traj.n_events >= 1
    assert traj.etas.min() >= 0
    assert np.max(np.diff(traj.W_values)) <= 1e-9
    assert abs(traj.states[-1, 0]) < 0.5


def test_nonlinear_linear_beta_matches_lambda():
    prob = default_cubic_problem()
    a = simulate(prob, DynamicGenerator(0.5, 1.0, lam=0.5), [2.0], SimConfig(dt=1e-3, horizon=2))
    b = simulate(prob, DynamicGenerator(0.5, 1.0, beta=linear(0.5)), [2.0],
                 SimConfig(dt=1e-3, horizon=2))
    np.testing.assert_allclose(a.execution_times, b.execution_times, atol=1e-12)


def test_unstable_plant_raises_blowup():
    prob = nonlinear_problem("scalar_linear", linear(1), linear(1), {"a": -1000.0, "gain": 0.0})
    with pytest.raises(NumericalBlowup) as info:
        with np.errstate(over="ignore", invalid="ignore"):
            simulate(prob, StaticGenerator(0.5), [1.0], SimConfig(dt=1e-3, horizon=5.0))
    assert info.value.last_time < 5.0


def test_bad_inputs(plant):
    with pytest.raises(ValueError):
        simulate(plant, StaticGenerator(0.1), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        simulate(plant, StaticGenerator(0.1), [1.0, 0.0], eta0=0.5)
    with pytest.raises(ValueError):
        SimConfig(dt=0)


def test_csv_round_trip_is_exact(plant, tmp_path):
    traj = simulate(plant, DynamicGenerator(0.1, 1.0), [10, 0], SHORT)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    write_executions_csv(traj, tmp_path / "e.csv")
    head = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert head == "t,x1,x2,eta,V,W,trigger"
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], traj.times)
    assert np.array_equal(data[:, 4], traj.V_values)
    ev = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1, ndmin=2)
    assert np.array_equal(ev[:, 1], traj.execution_times)


@pytest.mark.parametrize("values, excess, rise", [
    ([3.0, 2.0, 1.0], 0.0, 0.0),
    ([3.0, 2.0, 2.5, 1.0], 1.0, 0.5),
    ([1.0, 1.0, 1.0], 0.0, 0.0),
])
def test_variation_monitors(values, excess, rise):
    v = np.array(values)
    assert excess_total_variation(v) == pytest.approx(excess)
    assert max_rise(v) == pytest.approx(rise)
