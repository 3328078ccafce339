import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynetc.kinf import linear, power
from dynetc.plant import default_cubic_problem, nonlinear_problem
from dynetc.triggers import (DynamicGenerator, GeneratorError, SequencingError, StaticGenerator,
                             dynamic_trigger_value, error_vector, eta_derivative, initial_state,
                             on_execution, static_trigger_value_linear,
                             static_trigger_value_nonlinear)


@pytest.mark.parametrize("sample, x, e", [
    ([10, 0], [10, 0], [0, 0]),
    ([10, 0], [9, 1], [1, -1]),
    ([0, 0], [1, 2], [-1, -2]),
])
def test_error_vector(sample, x, e):
    assert np.array_equal(error_vector(initial_state(sample), x), e)


def test_static_linear_examples(plant):
    assert static_trigger_value_linear(plant, 0.1, [1, 0], [0, 0]) == pytest.approx(0.05)
    assert static_trigger_value_linear(plant, 0.1, [0, 0], [0, 0]) == 0
    # PBK = [[0.25, -1], [1, -4]] so x^T PBK e = 0.25
    assert static_trigger_value_linear(plant, 0.1, [1, 0], [1, 0]) == pytest.approx(-0.45)


def test_static_nonlinear_examples():
    prob = nonlinear_problem("scalar_linear", linear(1), linear(1))
    gen = StaticGenerator(0.5)
    assert static_trigger_value_nonlinear(prob, gen, [2.0], [1.0]) == 0
    assert static_trigger_value_nonlinear(prob, gen, [2.0], [0.0]) > 0
    prob2 = nonlinear_problem("scalar_linear", power(1, 2), linear(1))
    v = static_trigger_value_nonlinear(prob2, StaticGenerator(0.1), [3, 4], [0.6, 0.8])
    assert v == pytest.approx(1.5)


def test_eta_derivative_examples():
    assert eta_derivative(DynamicGenerator(0.1, lam=1.0), 0.0, 0.0) == 0
    assert eta_derivative(DynamicGenerator(0.1, lam=0.432), 1.0, 0.05) == pytest.approx(-0.382)
    gen = DynamicGenerator(0.1, beta=power(1, 2))
    assert eta_derivative(gen, 2.0, 1.0) == pytest.approx(-3.0)


def test_default_lambda_choice(plant):
    gen = DynamicGenerator(0.1, 1.0).bind(plant)
    assert gen.lam == pytest.approx(0.9 * 0.48)


def test_dynamic_trigger_examples():
    assert dynamic_trigger_value(DynamicGenerator(0.1, 0.0, lam=1), 0.3, -5.0) == 0.3
    assert dynamic_trigger_value(DynamicGenerator(0.1, 1.0, lam=1), 0.0, 0.0) == 0
    assert dynamic_trigger_value(DynamicGenerator(0.1, 0.1, lam=1), 0.02, -0.5) == pytest.approx(-0.03)


def test_on_execution_resets_error_keeps_eta():
    st0 = initial_state([10, 0], eta0=0.2)
    st1 = on_execution(st0, [9, 1], 0.5)
    assert np.array_equal(st1.sampled_state, [9, 1])
    assert np.array_equal(error_vector(st1, [9, 1]), [0, 0])
    assert st1.eta == 0.2
    assert st1.last_execution_time == 0.5


def test_on_execution_rejects_non_increasing_time():
    st1 = on_execution(initial_state([1, 0]), [0.5, 0], 0.5)
    with pytest.raises(SequencingError):
        on_execution(st1, [0.4, 0], 0.5)


def test_trigger_positive_right_after_execution(plant):
    gen = DynamicGenerator(0.1, 1.0).bind(plant)
    x = np.array([3.0, -2.0])
    s = static_trigger_value_linear(plant, gen.sigma, x, np.zeros(2))
    for eta in (0.0, 0.7):
        assert dynamic_trigger_value(gen, eta, s) > 0


@pytest.mark.parametrize("kwargs", [
    dict(sigma=0.0), dict(sigma=1.0), dict(sigma=0.5, theta=-1), dict(sigma=0.5, lam=0.0),
])
def test_generator_validation(kwargs):
    with pytest.raises(GeneratorError):
        DynamicGenerator(**kwargs)


def test_static_sigma_validation():
    with pytest.raises(GeneratorError):
        StaticGenerator(1.5)


def test_nonlinear_needs_explicit_lambda():
    with pytest.raises(GeneratorError):
        DynamicGenerator(0.5, 1.0).bind(default_cubic_problem())


@given(st.floats(1e-3, 10), st.floats(0, 100), st.floats(-100, 100))
def test_shared_expression_identity(lam, eta, s):
    # eta_derivative is -beta(eta) + s on the very same s; only the final
    # addition can round.
    gen = DynamicGenerator(0.5, 1.0, lam=lam)
    d = eta_derivative(gen, eta, s)
    assert d + lam * eta == pytest.approx(s, abs=4 * np.finfo(float).eps * (abs(s) + lam * eta))
