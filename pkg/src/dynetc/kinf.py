"""Class-K-infinity scalar functions.

Only a closed family is representable: ``c*r``, ``c*r**p`` (p >= 1) and
sums of those.  That keeps validation decidable and lets the functions be
serialized as plain ``{kind, c, p}`` mappings inside a run configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

KINDS = ("linear", "power", "sum")


class KInfError(ValueError):
    pass


@dataclass(frozen=True)
class KInfFunction:
    kind: str
    c: float = 1.0
    p: float = 1.0
    terms: tuple["KInfFunction", ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KInfError(f"unknown K-infinity kind {self.kind!r}")
        if self.kind == "sum":
            if len(self.terms) != 2:
                raise KInfError("sum kind takes exactly two terms")
        elif self.kind == "power" and self.p < 1.0:
            raise KInfError(f"power exponent must be >= 1, got {self.p}")

    def __call__(self, r: float) -> float:
        return eval_kinf(self, r)

    def to_dict(self) -> dict:
        if self.kind == "sum":
            return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}
        if self.kind == "linear":
            return {"kind": "linear", "c": self.c}
        return {"kind": "power", "c": self.c, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "KInfFunction":
        kind = d.get("kind")
        if kind == "sum":
            return cls("sum", terms=tuple(cls.from_dict(t) for t in d["terms"]))
        if kind == "linear":
            return linear(d.get("c", 1.0))
        if kind == "power":
            return power(d.get("c", 1.0), d.get("p", 1.0))
        raise KInfError(f"unknown K-infinity kind {kind!r}")


def linear(c: float) -> KInfFunction:
    return KInfFunction("linear", c=float(c))


def power(c: float, p: float) -> KInfFunction:
    return KInfFunction("power", c=float(c), p=float(p))


def ksum(f: KInfFunction, g: KInfFunction) -> KInfFunction:
    return KInfFunction("sum", terms=(f, g))


def eval_kinf(f: KInfFunction, r: float) -> float:
    """Evaluate ``f(r)`` for ``r >= 0``."""
    if r < 0:
        raise KInfError(f"K-infinity functions are defined on r >= 0, got {r}")
    if f.kind == "linear":
        return f.c * r
    if f.kind == "power":
        return f.c * r**f.p
    a, b = f.terms
    return eval_kinf(a, r) + eval_kinf(b, r)


@dataclass
class KInfReport:
    ok: bool
    violations: list[str]


def check_kinf(f: KInfFunction, grid: Sequence[float],
               big_r: float = 1e6, big_m: float = 1e3) -> KInfReport:
    """Check zero at zero, strict monotonicity on ``grid`` and growth at ``big_r``."""
    if len(grid) == 0:
        raise KInfError("empty grid")
    if grid[0] != 0:
        raise KInfError("grid must start at 0")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise KInfError("grid must be strictly increasing")

    violations = []
    f0 = eval_kinf(f, 0.0)
    if f0 != 0.0:
        violations.append(f"f(0) = {f0!r}, expected 0")
    values = [eval_kinf(f, r) for r in grid]
    for (r1, v1), (r2, v2) in zip(zip(grid, values), zip(grid[1:], values[1:])):
        if not v1 < v2:
            violations.append(f"not strictly increasing on [{r1}, {r2}]: "
                              f"f={v1!r} then f={v2!r}")
    if not eval_kinf(f, big_r) > big_m:
        violations.append(f"not unbounded: f({big_r}) <= {big_m}")
    return KInfReport(ok=not violations, violations=violations)
