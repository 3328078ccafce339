import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from dynetc.kinf import linear, power
from dynetc.plant import (LinearPlant, PlantError, closed_loop_field_linear, decay_rate_kappa,
                          default_cubic_problem, grad_V_dot_f, lyapunov_value,
                          nonlinear_problem, benchmark_plant, validate_problem, wrap_linear)

from conftest import min_eig

P4 = np.array([[1, 0.25], [0.25, 1]])
Q4 = np.array([[0.5, 0.25], [0.25, 1.5]])


def kappa_by_bisection(P, Q, lo=0.0, hi=100.0, iters=200):
    """Largest k with min-eig(Q - kP) >= 0; independent of the Cholesky route."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if min_eig(Q - mid * P) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def kappa_quadratic_2x2(P, Q):
    # det(Q - kP) = 0 expanded as a k^2 + b k + c
    a = P[0, 0] * P[1, 1] - P[0, 1] ** 2
    b = -(Q[0, 0] * P[1, 1] + Q[1, 1] * P[0, 0] - 2 * Q[0, 1] * P[0, 1])
    c = Q[0, 0] * Q[1, 1] - Q[0, 1] ** 2
    return (-b - np.sqrt(b * b - 4 * a * c)) / (2 * a)


def test_lyapunov_residual_is_exact():
    Acl = np.array([[0, 1], [-2, 3]]) + np.array([[0], [1]]) @ np.array([[1, -4]])
    assert np.array_equal(Acl.T @ P4 + P4 @ Acl, -Q4)


def test_kappa_matches_oracles():
    k = decay_rate_kappa(P4, Q4)
    assert k == pytest.approx(kappa_by_bisection(P4, Q4), abs=1e-12)
    assert k == pytest.approx(kappa_quadratic_2x2(P4, Q4), abs=1e-12)
    # the hand-expanded polynomial 0.9375 k^2 - 1.875 k + 0.6875
    assert 0.9375 * k * k - 1.875 * k + 0.6875 == pytest.approx(0, abs=1e-12)
    assert k == pytest.approx(0.4836, abs=5e-5)


def test_kappa_rounds_to_two_decimals():
    assert round(decay_rate_kappa(P4, Q4), 2) == 0.48


def test_kappa_scaled_pencil():
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert decay_rate_kappa(P, 3 * P) == pytest.approx(3.0, rel=1e-12)


def test_kappa_rejects_indefinite():
    with pytest.raises(PlantError):
        decay_rate_kappa(P4, np.diag([1.0, -1.0]))


@st.composite
def spd_pairs(draw):
    n = draw(st.integers(2, 4))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    def spd():
        M = rng.normal(size=(n, n))
        S = M @ M.T + n * 0.1 * np.eye(n)
        return 0.5 * (S + S.T)
    return spd(), spd()


@settings(max_examples=50, deadline=None)
@given(spd_pairs())
def test_kappa_is_the_psd_boundary(pair):
    P, Q = pair
    k = decay_rate_kappa(P, Q)
    assert k == pytest.approx(scipy.linalg.eigh(Q, P, eigvals_only=True)[0], rel=1e-9)
    scale = np.linalg.norm(P, 2)
    assert -1e-9 * scale <= min_eig(Q - k * P) <= 1e-6 * scale
    assert min_eig(Q - (k + 0.01) * P) < 0


def test_plant_validates_lyapunov_equation():
    with pytest.raises(PlantError, match="residual"):
        LinearPlant.build([[0, 1], [-2, 3]], [[0], [1]], [[1, -4]], P4, np.eye(2))


def test_kappa_override_warns_when_far(caplog):
    benchmark_plant(kappa=0.48)
    assert "differs" not in caplog.text
    benchmark_plant(kappa=0.4)
    assert "differs from computed" in caplog.text


def test_field_examples(plant):
    assert np.array_equal(closed_loop_field_linear(plant, [1, 0], [0, 0]), [0, -1])
    assert np.array_equal(closed_loop_field_linear(plant, [0, 0], [0, 0]), [0, 0])
    assert np.array_equal(closed_loop_field_linear(plant, [0, 0], [1, 0]), [0, 1])


def test_field_dimension_mismatch(plant):
    with pytest.raises(PlantError):
        closed_loop_field_linear(plant, [1, 0, 0], [0, 0])


@pytest.mark.parametrize("x, v", [([10, 0], 100.0), ([0, 0], 0.0), ([1, 1], 2.5)])
def test_lyapunov_value(plant, x, v):
    assert lyapunov_value(plant, x) == v


def test_grad_V_dot_f_linear_wrapper(plant):
    prob = wrap_linear(plant)
    assert grad_V_dot_f(prob, [1, 0], [0, 0]) == pytest.approx(-0.5, rel=1e-6)
    assert grad_V_dot_f(prob, [0, 0], [0, 0]) == 0


def test_grad_V_dot_f_matches_analytic_cross_term(plant):
    prob = wrap_linear(plant)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, e = rng.normal(size=2) * 5, rng.normal(size=2)
        exact = -x @ plant.Q @ x + 2 * x @ plant.PBK @ e
        assert grad_V_dot_f(prob, x, e) == pytest.approx(exact, rel=1e-6, abs=1e-8)


def test_grad_V_dot_f_scalar_example():
    prob = nonlinear_problem("scalar_linear", linear(1), linear(1), {"a": 1.0, "gain": 0.0})
    assert grad_V_dot_f(prob, [2.0], [0.0]) == pytest.approx(-8.0, rel=1e-8)


def test_problem_validation_passes_for_registry_examples(plant):
    grid = np.linspace(-3, 3, 13)
    cubic = default_cubic_problem()
    assert validate_problem(cubic, [[g] for g in grid], [[g] for g in grid]).ok
    lin = wrap_linear(plant)
    pts = [np.array([a, b]) for a in grid for b in grid[::3]]
    assert validate_problem(lin, pts, pts[::5]).ok


def test_problem_validation_catches_bad_alpha():
    bad = nonlinear_problem("cubic", power(10.0, 2), power(1.0, 2), {"gain": 1.0})
    report = validate_problem(bad, [[1.0]], [[0.0]])
    assert not report.ok
    assert report.lipschitz_assumed
