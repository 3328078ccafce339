"""Static and dynamic event generators.

The static rule fires when ``s(x, e) <= 0`` where ``s`` is the static trigger
value.  The dynamic rule filters ``s`` through an internal variable

    d eta/dt = -beta(eta) + s,   eta(0) = 0

and fires when ``eta + theta * s <= 0``.  Both rules see the error before
the execution resets it, which is the left limit ``e(t^-)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinf import KInfFunction, eval_kinf, linear
from .plant import LinearPlant, NonlinearProblem


class GeneratorError(ValueError):
    pass


class SequencingError(RuntimeError):
    pass


@dataclass(frozen=True)
class StaticGenerator:
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise GeneratorError(f"sigma must lie in (0, 1), got {self.sigma}")

    kind = "static"
    theta = 0.0

    def to_dict(self) -> dict:
        return {"type": "static", "sigma": self.sigma}


@dataclass(frozen=True)
class DynamicGenerator:
    """Dynamic rule.  ``lam=None`` and ``beta=None`` mean ``lam = (1 - sigma) * kappa``,
    resolved against a linear plant by :meth:`bind`."""

    sigma: float
    theta: float = 0.0
    lam: float | None = None
    beta: KInfFunction | None = None

    kind = "dynamic"

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise GeneratorError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.theta < 0:
            raise GeneratorError(f"theta must be nonnegative, got {self.theta}")
        if self.lam is not None and self.lam <= 0:
            raise GeneratorError(f"lambda must be positive, got {self.lam}")
        if self.lam is not None and self.beta is not None:
            raise GeneratorError("give either lambda or beta, not both")

    def bind(self, plant: LinearPlant | NonlinearProblem) -> "DynamicGenerator":
        """Resolve an automatic lambda against ``plant``."""
        if self.lam is not None or self.beta is not None:
            return self
        if isinstance(plant, LinearPlant):
            return replace(self, lam=(1.0 - self.sigma) * plant.kappa)
        raise GeneratorError("nonlinear problems need an explicit lambda or beta")

    def beta_fn(self) -> KInfFunction:
        if self.beta is not None:
            return self.beta
        if self.lam is None:
            raise GeneratorError("unbound generator: lambda not resolved")
        return linear(self.lam)

    def to_dict(self) -> dict:
        d = {"type": "dynamic", "sigma": self.sigma, "theta": self.theta}
        if self.beta is not None:
            d["beta"] = self.beta.to_dict()
        elif self.lam is not None:
            d["lambda"] = self.lam
        return d


Generator = StaticGenerator | DynamicGenerator


@dataclass(frozen=True)
class GeneratorState:
    eta: float
    sampled_state: np.ndarray
    last_execution_time: float


def initial_state(x0, eta0: float = 0.0) -> GeneratorState:
    if eta0 < 0:
        raise GeneratorError(f"eta must start nonnegative, got {eta0}")
    return GeneratorState(float(eta0), np.array(x0, dtype=float), 0.0)


def error_vector(state: GeneratorState, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != state.sampled_state.shape:
        raise GeneratorError(f"state shape {x.shape} does not match sample "
                             f"{state.sampled_state.shape}")
    return state.sampled_state - x


def static_trigger_value_linear(plant: LinearPlant, sigma: float, x, e) -> float:
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    return float(sigma * (x @ plant.Q @ x) - 2.0 * (x @ plant.PBK @ e))


def static_trigger_value_nonlinear(problem: NonlinearProblem, gen: Generator, x, e) -> float:
    nx = float(np.linalg.norm(x))
    ne = float(np.linalg.norm(e))
    return gen.sigma * eval_kinf(problem.alpha, nx) - eval_kinf(problem.gamma, ne)


def eta_derivative(gen: DynamicGenerator, eta: float, static_value: float) -> float:
    if gen.beta is None and gen.lam is not None:
        return -gen.lam * eta + static_value
    return -eval_kinf(gen.beta_fn(), max(eta, 0.0)) + static_value


def dynamic_trigger_value(gen: DynamicGenerator, eta: float, static_value: float) -> float:
    return eta + gen.theta * static_value


def on_execution(state: GeneratorState, x, t: float) -> GeneratorState:
    """Sample ``x`` at time ``t``.  eta carries over unchanged."""
    if not t > state.last_execution_time:
        raise SequencingError(f"execution at t={t} does not follow t_i="
                              f"{state.last_execution_time}")
    return replace(state, sampled_state=np.array(x, dtype=float), last_execution_time=float(t))
