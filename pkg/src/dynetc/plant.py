"""Plant definitions: the linear closed loop and a small nonlinear registry."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kinf import KInfFunction, eval_kinf, ksum, power

log = logging.getLogger(__name__)

SYM_TOL = 1e-12
LYAP_TOL = 1e-9
PSD_TOL = 1e-9
KAPPA_OVERRIDE_RTOL = 0.01


class PlantError(ValueError):
    pass


def _as_matrix(m, name: str) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2:
        raise PlantError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise PlantError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


def _check_spd(M: np.ndarray, name: str) -> None:
    if M.shape[0] != M.shape[1]:
        raise PlantError(f"{name} must be square, got {M.shape}")
    if np.max(np.abs(M - M.T)) > SYM_TOL:
        raise PlantError(f"{name} is not symmetric")
    if np.min(np.linalg.eigvalsh(M)) <= 0:
        raise PlantError(f"{name} is not positive definite")


def decay_rate_kappa(P, Q) -> float:
    """Largest kappa with ``Q - kappa*P`` positive semidefinite.

    This is the smallest eigenvalue of the pencil (Q, P).  With ``P = L L^T``
    it equals the smallest eigenvalue of ``L^-1 Q L^-T``.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise PlantError(f"P and Q differ in shape: {P.shape} vs {Q.shape}")
    _check_spd(P, "P")
    _check_spd(Q, "Q")
    L = np.linalg.cholesky(P)
    Linv = np.linalg.inv(L)
    M = Linv @ Q @ Linv.T
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


@dataclass(frozen=True, eq=False)
class LinearPlant:
    """``dx/dt = A x + B u`` with ``u = K x(t_i)`` and ``V(x) = x^T P x``.

    ``kappa`` is computed from (P, Q) unless an override is given; overrides
    that differ from the computed value by more than 1% are logged.
    """

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    kappa: float = field(default=0.0)
    kappa_computed: float = field(default=0.0)

    @classmethod
    def build(cls, A, B, K, P, Q, kappa: float | None = None) -> "LinearPlant":
        A, B, K, P, Q = (_as_matrix(m, name) for m, name in
                         ((A, "A"), (B, "B"), (K, "K"), (P, "P"), (Q, "Q")))
        n = A.shape[0]
        if A.shape != (n, n):
            raise PlantError(f"A must be square, got {A.shape}")
        m = B.shape[1]
        if B.shape != (n, m):
            raise PlantError(f"B must be {n}x{m}, got {B.shape}")
        if K.shape != (m, n):
            raise PlantError(f"K must be {m}x{n}, got {K.shape}")
        if P.shape != (n, n) or Q.shape != (n, n):
            raise PlantError(f"P and Q must be {n}x{n}")
        _check_spd(P, "P")
        _check_spd(Q, "Q")
        Acl = A + B @ K
        resid = np.max(np.abs(Acl.T @ P + P @ Acl + Q))
        if resid > LYAP_TOL:
            raise PlantError(f"Lyapunov equation residual {resid:.3e} exceeds {LYAP_TOL}")

        computed = decay_rate_kappa(P, Q)
        if kappa is None:
            kappa = computed
        else:
            kappa = float(kappa)
            if kappa <= 0:
                raise PlantError(f"kappa must be positive, got {kappa}")
            if abs(kappa - computed) > KAPPA_OVERRIDE_RTOL * computed:
                log.warning("kappa override %g differs from computed %g by more than 1%%",
                            kappa, computed)
        min_eig = np.min(np.linalg.eigvalsh(Q - kappa * P))
        if min_eig < -PSD_TOL:
            log.warning("Q - kappa*P is not PSD for kappa=%g (min eig %.3e)", kappa, min_eig)
        return cls(A, B, K, P, Q, kappa=kappa, kappa_computed=computed)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def BK(self) -> np.ndarray:
        return self.B @ self.K

    @property
    def PBK(self) -> np.ndarray:
        return self.P @ self.B @ self.K

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in "ABKPQ"}
        if self.kappa != self.kappa_computed:
            d["kappa"] = self.kappa
        return d


def benchmark_plant(kappa: float | None = None) -> LinearPlant:
    """The two-state benchmark with its fixed controller and Lyapunov data."""
    return LinearPlant.build(
        A=[[0, 1], [-2, 3]],
        B=[[0], [1]],
        K=[[1, -4]],
        P=[[1, 0.25], [0.25, 1]],
        Q=[[0.5, 0.25], [0.25, 1.5]],
        kappa=kappa,
    )


def _check_dims(plant_n: int, *vecs: np.ndarray) -> None:
    for v in vecs:
        if v.shape != (plant_n,):
            raise PlantError(f"expected a vector of length {plant_n}, got shape {v.shape}")


def closed_loop_field_linear(plant: LinearPlant, x, e) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    _check_dims(plant.n, x, e)
    return plant.A @ x + plant.BK @ (x + e)


def lyapunov_value(plant: LinearPlant, x) -> float:
    x = np.asarray(x, dtype=float)
    _check_dims(plant.n, x)
    return float(x @ plant.P @ x)


# --- nonlinear problems -----------------------------------------------------

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class NonlinearProblem:
    """Closed loop ``dx/dt = f(x, k(x + e))`` with an ISS-Lyapunov function V.

    ``alpha`` and ``gamma`` are the K-infinity bounds of the dissipation
    inequality ``grad V . f <= -alpha(|x|) + gamma(|e|)``.
    """

    name: str
    params: dict
    n: int
    m: int
    f: Field
    k: Callable[[np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], float]
    alpha: KInfFunction
    gamma: KInfFunction
    # f, k, alpha^-1, gamma Lipschitz on compacts is assumed, never verified.
    lipschitz_assumed: bool = True

    def field(self, x: np.ndarray, e: np.ndarray) -> np.ndarray:
        return self.f(x, self.k(x + e))

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "plant" in params:
            params["plant"] = params["plant"].to_dict()
        return {
            "nonlinear": self.name,
            "params": params,
            "alpha": self.alpha.to_dict(),
            "gamma": self.gamma.to_dict(),
        }


def _linear_wrapper(params: dict) -> dict:
    plant = params["plant"]
    return dict(
        n=plant.n, m=plant.B.shape[1],
        f=lambda x, u: plant.A @ x + plant.B @ u,
        k=lambda x: plant.K @ x,
        V=lambda x: float(x @ plant.P @ x),
    )


def _scalar_linear(params: dict) -> dict:
    a = float(params.get("a", 1.0))
    gain = float(params.get("gain", 0.0))
    return dict(
        n=1, m=1,
        f=lambda x, u: -a * x + u,
        k=lambda x: -gain * x,
        V=lambda x: float(x[0] ** 2),
    )


def _cubic(params: dict) -> dict:
    gain = float(params.get("gain", 1.0))
    return dict(
        n=1, m=1,
        f=lambda x, u: -x**3 + u,
        k=lambda x: -gain * x,
        V=lambda x: float(x[0] ** 2),
    )


REGISTRY: dict[str, Callable[[dict], dict]] = {
    "linear": _linear_wrapper,
    "scalar_linear": _scalar_linear,
    "cubic": _cubic,
}


def nonlinear_problem(name: str, alpha: KInfFunction, gamma: KInfFunction,
                      params: dict | None = None) -> NonlinearProblem:
    if name not in REGISTRY:
        raise PlantError(f"unknown nonlinear field {name!r}; known: {sorted(REGISTRY)}")
    params = dict(params or {})
    parts = REGISTRY[name](params)
    return NonlinearProblem(name=name, params=params, alpha=alpha, gamma=gamma, **parts)


def wrap_linear(plant: LinearPlant, alpha: KInfFunction | None = None,
                gamma: KInfFunction | None = None) -> NonlinearProblem:
    """View a linear plant through the nonlinear interface.

    Default bounds come from Young's inequality on the cross term:
    ``alpha(r) = q/2 r^2`` and ``gamma(r) = 2|PBK|^2/q r^2`` with
    ``q = lambda_min(Q)``.
    """
    qmin = float(np.linalg.eigvalsh(plant.Q)[0])
    if alpha is None:
        alpha = power(0.5 * qmin, 2)
    if gamma is None:
        c = 2.0 * np.linalg.norm(plant.PBK, 2) ** 2 / qmin
        gamma = power(c, 2)
    return nonlinear_problem("linear", alpha, gamma, {"plant": plant})


def default_cubic_problem() -> NonlinearProblem:
    """``dx/dt = -x^3 - (x + e)`` with ``V = x^2``.

    grad V . f = -2x^4 - 2x^2 - 2xe <= -(2x^4 + x^2) + e^2.
    """
    return nonlinear_problem("cubic", ksum(power(2.0, 4), power(1.0, 2)),
                             power(1.0, 2), {"gain": 1.0})


def grad_V_dot_f(problem: NonlinearProblem, x, e, h: float | None = None) -> float:
    """Central-difference ``grad V(x)`` dotted with the closed-loop field."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    _check_dims(problem.n, x, e)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(x))
    if h <= 0:
        raise PlantError("finite-difference step must be positive")
    grad = np.empty(problem.n)
    for i in range(problem.n):
        d = np.zeros(problem.n)
        d[i] = h
        grad[i] = (problem.V(x + d) - problem.V(x - d)) / (2 * h)
    return float(grad @ problem.field(x, e))


@dataclass
class ProblemReport:
    ok: bool
    violations: list[str]
    lipschitz_assumed: bool = True


def validate_problem(problem: NonlinearProblem, xs: Sequence, es: Sequence,
                     tol: float = 1e-6) -> ProblemReport:
    """Sampled check of ``V(0) = 0``, ``V > 0`` and the ISS dissipation bound."""
    violations = []
    zero = np.zeros(problem.n)
    if problem.V(zero) != 0.0:
        violations.append(f"V(0) = {problem.V(zero)!r}")
    for x in xs:
        x = np.asarray(x, dtype=float)
        if np.any(x != 0) and not problem.V(x) > 0:
            violations.append(f"V not positive at x={x.tolist()}")
        for e in es:
            e = np.asarray(e, dtype=float)
            lhs = grad_V_dot_f(problem, x, e)
            rhs = -eval_kinf(problem.alpha, float(np.linalg.norm(x))) \
                + eval_kinf(problem.gamma, float(np.linalg.norm(e)))
            if lhs > rhs + tol:
                violations.append(f"dissipation fails at x={x.tolist()}, e={e.tolist()}: "
                                  f"{lhs:.6g} > {rhs:.6g}")
    return ProblemReport(ok=not violations, violations=violations,
                         lipschitz_assumed=problem.lipschitz_assumed)
