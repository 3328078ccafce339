"""Run configuration files.

A configuration is a YAML document.  It is validated by the pydantic models
below (unknown keys are rejected) and converted into library objects by the
``build_*`` helpers.  Validation errors carry the line of the offending key.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .kinf import KInfFunction
from .plant import LinearPlant, NonlinearProblem, nonlinear_problem
from .sim import SimConfig
from .stats import circle_initial_conditions
from .triggers import DynamicGenerator, Generator, StaticGenerator

BUNDLED = ("paper-example.cfg", "nonlinear-cubic.cfg")


class ConfigError(ValueError):
    """Malformed configuration; ``str(err)`` starts with ``path:line:``."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class KInfBlock(_Block):
    kind: Literal["linear", "power", "sum"]
    c: float | None = None
    p: float | None = None
    terms: list["KInfBlock"] | None = None

    def build(self) -> KInfFunction:
        return KInfFunction.from_dict(self.model_dump(exclude_none=True))


class PlantBlock(_Block):
    A: list[list[float]] | None = None
    B: list[list[float]] | None = None
    K: list[list[float]] | None = None
    P: list[list[float]] | None = None
    Q: list[list[float]] | None = None
    kappa: float | None = None
    nonlinear: str | None = None
    params: dict[str, float] | None = None
    alpha: KInfBlock | None = None
    gamma: KInfBlock | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        mats = [self.A, self.B, self.K, self.P, self.Q]
        if self.nonlinear is None:
            missing = [n for n, m in zip("ABKPQ", mats) if m is None]
            if missing:
                raise ValueError(f"linear plant is missing matrices {', '.join(missing)}")
        else:
            if any(m is not None for m in mats):
                raise ValueError("give either matrices or a nonlinear field, not both")
            if self.alpha is None or self.gamma is None:
                raise ValueError("nonlinear plants need alpha and gamma")
        return self


class GeneratorBlock(_Block):
    type: Literal["static", "dynamic"]
    sigma: float
    theta: float = 0.0
    lam: float | Literal["auto"] | None = Field(default=None, alias="lambda")
    beta: KInfBlock | None = None


class GridBlock(_Block):
    sigma: list[float]
    theta: list[float] = []
    static: bool = True


class CircleBlock(_Block):
    radius: float
    count: int


class InitialBlock(_Block):
    x0: list[float] | None = None
    circle: CircleBlock | None = None
    points: list[list[float]] | None = None


class SimBlock(_Block):
    dt: float = 1e-4
    horizon: float = 10.0
    event_tol: float = 1e-10
    max_events: int = 10**7
    record_stride: int = 10


class CheckBlock(_Block):
    seed: int = 20240613
    sigma: float = 0.1
    first_samples: int = 100
    first_eta_samples: int = 20
    first_thetas: list[float] = [0.0, 0.1, 1.0, 10.0]
    order_samples: int = 50
    order_pairs: list[list[float]] = [[0.0, 0.1], [0.1, 1.0], [1.0, 10.0]]
    invariant_sigmas: list[float] = [0.001, 0.1, 0.999]
    invariant_thetas: list[float] = [0.0, 1.0, 100.0]
    invariant_count: int = 4
    invariant_horizon: float = 5.0
    first_horizon: float = 10.0
    fault: Literal["flip-error-term"] | None = None


class FigureBlock(_Block):
    sigma: float = 0.001
    theta: list[float] = [0.0, 0.1, 1.0]
    static: bool = True


class OutputBlock(_Block):
    dir: str = "out"


class RunConfig(_Block):
    plant: PlantBlock
    generator: GeneratorBlock | None = None
    grid: GridBlock | None = None
    initial: InitialBlock = InitialBlock()
    sim: SimBlock = SimBlock()
    check: CheckBlock = CheckBlock()
    figure: FigureBlock = FigureBlock()
    output: OutputBlock = OutputBlock()

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True, mode="json")


# --- loading ----------------------------------------------------------------------

def resolve_path(path: str | Path) -> Path:
    """Existing files win; otherwise look the name up among bundled configs."""
    p = Path(path)
    if p.exists():
        return p
    if p.name in BUNDLED:
        return Path(str(resources.files("dynetc") / "data" / p.name))
    raise ConfigError(f"{path}: no such file")


def _node_line(root: yaml.Node | None, loc: tuple) -> int:
    """Best line (1-based) for a pydantic error location within the YAML tree."""
    line = 1
    node = root
    for part in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == part:
                    line = k.start_mark.line + 1
                    nxt = v
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) \
                and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _format_errors(err: ValidationError, root, source: str) -> str:
    msgs = []
    for e in err.errors():
        loc = tuple(p for p in e["loc"] if not (isinstance(p, str) and "[" in p))
        dotted = ".".join(str(p) for p in loc) or "<root>"
        line = _node_line(root, loc)
        if e["type"] == "missing":
            what = "section" if len(loc) == 1 else "key"
            msgs.append(f"{source}:{line}: missing {what} '{dotted}'")
        elif e["type"] == "extra_forbidden":
            msgs.append(f"{source}:{line}: unknown key '{dotted}'")
        else:
            msgs.append(f"{source}:{line}: {dotted}: {e['msg']}")
    return "\n".join(msgs)


def _parse_value(text: str) -> Any:
    return yaml.safe_load(text)


_BARE_KEYS = {
    **{k: "generator" for k in ("type", "sigma", "theta", "lambda", "beta")},
    **{k: "sim" for k in SimBlock.model_fields},
    "seed": "check",
}


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``KEY=VALUE`` overrides.  Bare generator and sim keys need no prefix."""
    raw = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected KEY=VALUE")
        key, value = item.split("=", 1)
        path = key.strip().split(".")
        if len(path) == 1 and path[0] in _BARE_KEYS:
            path = [_BARE_KEYS[path[0]], path[0]]
        node = raw
        for part in path[:-1]:
            child = node.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            node[part] = child
            node = child
        node[path[-1]] = _parse_value(value)
    return raw


def parse_config(text: str, source: str = "<config>", overrides: list[str] | None = None
                 ) -> RunConfig:
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{source}:{line}: YAML syntax error: "
                          f"{getattr(exc, 'problem', exc)}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    if overrides:
        raw = apply_overrides(raw, overrides)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(_format_errors(err, root, source)) from None


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    p = resolve_path(path)
    return parse_config(p.read_text(), str(path), overrides)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# --- building library objects -------------------------------------------------------

def build_plant(cfg: RunConfig) -> LinearPlant | NonlinearProblem:
    b = cfg.plant
    try:
        if b.nonlinear is not None:
            return nonlinear_problem(b.nonlinear, b.alpha.build(), b.gamma.build(),
                                     dict(b.params or {}))
        return LinearPlant.build(b.A, b.B, b.K, b.P, b.Q, kappa=b.kappa)
    except ValueError as exc:
        raise ConfigError(f"plant: {exc}") from None


def build_generator(block: GeneratorBlock) -> Generator:
    try:
        if block.type == "static":
            return StaticGenerator(block.sigma)
        lam = None if block.lam in (None, "auto") else float(block.lam)
        beta = block.beta.build() if block.beta is not None else None
        return DynamicGenerator(block.sigma, block.theta, lam=lam, beta=beta)
    except ValueError as exc:
        raise ConfigError(f"generator: {exc}") from None


def single_generator(cfg: RunConfig) -> Generator:
    if cfg.generator is None:
        raise ConfigError("missing section 'generator'")
    return build_generator(cfg.generator)


def grid_generators(cfg: RunConfig) -> list[Generator]:
    if cfg.grid is None:
        return [single_generator(cfg)]
    gens: list[Generator] = []
    try:
        for s in cfg.grid.sigma:
            if cfg.grid.static:
                gens.append(StaticGenerator(s))
            gens.extend(DynamicGenerator(s, th) for th in cfg.grid.theta)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    return gens


def figure_generators(cfg: RunConfig) -> list[Generator]:
    f = cfg.figure
    gens: list[Generator] = [StaticGenerator(f.sigma)] if f.static else []
    gens.extend(DynamicGenerator(f.sigma, th) for th in f.theta)
    return gens


def single_x0(cfg: RunConfig) -> np.ndarray:
    if cfg.initial.x0 is None:
        raise ConfigError("missing key 'initial.x0'")
    return np.array(cfg.initial.x0, dtype=float)


def batch_initial_conditions(cfg: RunConfig, n: int) -> list[np.ndarray]:
    ini = cfg.initial
    if ini.circle is not None:
        try:
            return circle_initial_conditions(ini.circle.radius, ini.circle.count, n)
        except ValueError as exc:
            raise ConfigError(f"initial.circle: {exc}") from None
    if ini.points is not None:
        return [np.array(p, dtype=float) for p in ini.points]
    return [single_x0(cfg)]


def build_sim_config(cfg: RunConfig) -> SimConfig:
    try:
        return SimConfig(**cfg.sim.model_dump())
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None
