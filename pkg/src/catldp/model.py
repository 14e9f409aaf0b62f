"""Process parameters: rates, upward-jump law and catastrophe kernel.

The process lives on {0, 1, 2, ...}. Events arrive at rate ``alpha``. From
state 0 an event moves the process to ``r`` with probability ``P_r``; from
``x >= 1`` it moves up by ``r`` with probability ``lambda/(lambda+mu) * P_r``
or down by ``d`` (1 <= d <= x) with probability ``mu/(lambda+mu) * Q_d(x)``.

Jump laws have finite support, so every exponential moment of the jump is
finite (the Cramer condition holds by construction).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

PMF_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class JumpPmf:
    """Distribution of an upward jump over {0, ..., R}."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("jump_pmf must be a non-empty 1-d array")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, r: int = 1) -> "JumpPmf":
        probs = np.zeros(r + 1)
        probs[r] = 1.0
        return cls(probs)

    @property
    def max_jump(self) -> int:
        nz = np.flatnonzero(self.probs > 0)
        return int(nz[-1]) if nz.size else 0

    @property
    def p0(self) -> float:
        return float(self.probs[0])

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    @property
    def is_point_mass_one(self) -> bool:
        return self.max_jump == 1 and self.probs[1] == 1.0

    def cdf(self) -> np.ndarray:
        """Cumulative table with the last entry pinned to exactly 1."""
        c = np.cumsum(self.probs)
        c[self.max_jump:] = 1.0
        return c


def mgf_gamma(pmf: JumpPmf, y):
    """E exp(y * gamma) for the jump law; accepts scalar or array ``y``."""
    y = np.asarray(y, dtype=float)
    r = np.arange(pmf.probs.size)
    out = np.exp(np.multiply.outer(y, r)) @ pmf.probs
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CatastropheKernel:
    """Catastrophe-size law Q_d(x), d in {1..x}.

    ``kind="uniform"`` gives Q_d(x) = 1/x. ``kind="tilted"`` gives weights
    proportional to 1 + a*d/x with a > -1.
    """

    kind: Literal["uniform", "tilted"] = "uniform"
    a: float = 0.0
    delta_bound: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "tilted"):
            raise DomainError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "tilted" and not self.a > -1.0:
            raise DomainError(f"tilt a must lie in (-1, inf), got {self.a}")
        if self.kind == "uniform" and self.a != 0.0:
            raise DomainError("uniform kernel takes no tilt")
        if self.delta_bound is None:
            object.__setattr__(self, "delta_bound", self.analytic_delta())

    @classmethod
    def uniform(cls, delta_bound: float | None = None) -> "CatastropheKernel":
        return cls("uniform", 0.0, delta_bound)

    @classmethod
    def tilted(cls, a: float, delta_bound: float | None = None) -> "CatastropheKernel":
        return cls("tilted", float(a), delta_bound)

    def analytic_delta(self) -> float:
        # x*Q_d(x) = (1 + a*s) / (1 + a*(x+1)/(2x)), s = d/x in (0, 1]; numerator
        # and denominator both lie between 1 and 1+a, hence the bound below.
        b = max(1.0 + self.a, 1.0 / (1.0 + self.a))
        return b if b > 1.0 else 2.0

    def weights(self, x: int) -> np.ndarray:
        """Vector (Q_1(x), ..., Q_x(x))."""
        if x < 1:
            raise DomainError(f"state x must be >= 1, got {x}")
        if self.kind == "uniform":
            return np.full(x, 1.0 / x)
        w = 1.0 + self.a * np.arange(1, x + 1) / x
        return w / w.sum()

    def tightest_delta(self, x_max: int) -> float:
        """Smallest Delta for which condition U holds on 1 <= x <= x_max."""
        worst = 1.0
        for x in range(1, x_max + 1):
            xq = x * self.weights(x)
            worst = max(worst, xq.max(), 1.0 / xq.min())
        return worst


def q_mass(kernel: CatastropheKernel, d: int, x: int) -> float:
    """Probability Q_d(x) that a catastrophe at state x removes d individuals."""
    if x < 1 or not 1 <= d <= x:
        raise DomainError(f"need 1 <= d <= x, got d={d}, x={x}")
    if kernel.kind == "uniform":
        return 1.0 / x
    z = x + kernel.a * (x + 1) / 2.0
    return (1.0 + kernel.a * d / x) / z


def q_mass_vec(kernel: CatastropheKernel, d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Elementwise ``q_mass`` for arrays with 1 <= d <= x (unchecked)."""
    x = np.asarray(x, dtype=float)
    if kernel.kind == "uniform":
        return 1.0 / x
    return (1.0 + kernel.a * np.asarray(d) / x) / (x + kernel.a * (x + 1) / 2.0)


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    lambda_up: float
    mu_down: float
    jump_pmf: JumpPmf = field(default_factory=JumpPmf.point_mass)
    kernel: CatastropheKernel = field(default_factory=CatastropheKernel.uniform)

    @property
    def p_up(self) -> float:
        return self.lambda_up / (self.lambda_up + self.mu_down)

    @property
    def growth_rate(self) -> float:
        return self.alpha * self.p_up

    @property
    def catastrophe_rate(self) -> float:
        return self.alpha * self.mu_down / (self.lambda_up + self.mu_down)

    @property
    def mean_growth(self) -> float:
        """Drift m = A'(0) of the compound Poisson growth part."""
        return self.growth_rate * self.jump_pmf.mean

    def require_valid(self, x_max: int = 64) -> None:
        report = validate(self, x_max=x_max)
        if not report.ok:
            raise DomainError(report.describe_failures())


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    results: tuple[ConditionResult, ...]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def describe_failures(self) -> str:
        return "; ".join(f"{r.name}: {r.detail}" for r in self.results if not r.passed)


def check_condition_u(kernel: CatastropheKernel, x_max: int) -> ConditionResult:
    delta = kernel.delta_bound
    if not delta > 1.0:
        return ConditionResult("U", False, f"delta must exceed 1, got {delta}")
    if isinstance(kernel, CatastropheKernel):
        # built-in weights are monotone in d, so d = 1 and d = x are the extremes
        x = np.arange(1, x_max + 1)
        ends = np.stack([q_mass_vec(kernel, np.ones_like(x), x), q_mass_vec(kernel, x, x)])
        ok = (ends * x >= (1 - 1e-12) / delta) & (ends * x <= delta * (1 + 1e-12))
        if ok.all():
            return ConditionResult("U", True, f"holds with Δ={delta} for x <= {x_max}")
    for x in range(1, x_max + 1):
        q = kernel.weights(x)
        lo, hi = 1.0 / (delta * x), delta / x
        bad = np.flatnonzero((q < lo * (1 - 1e-12)) | (q > hi * (1 + 1e-12)))
        if bad.size:
            d = int(bad[0]) + 1
            return ConditionResult(
                "U", False,
                f"Q_{d}({x}) = {q[bad[0]]:.6g} outside [1/(Δx), Δ/x] = "
                f"[{lo:.6g}, {hi:.6g}] with Δ={delta}",
            )
    return ConditionResult("U", True, f"holds with Δ={delta} for x <= {x_max}")


def validate(params: ModelParams, x_max: int = 64) -> ValidationReport:
    """Check positivity, pmf normalisation, condition A and condition U.

    Never raises on bad parameters; failures carry a witness in ``detail``.
    """
    results = []
    bad = [
        f"{name} = {val}"
        for name, val in (("alpha", params.alpha), ("lambda", params.lambda_up),
                          ("mu", params.mu_down))
        if not (math.isfinite(val) and val > 0)
    ]
    results.append(ConditionResult(
        "positivity", not bad,
        "violates alpha > 0, λ > 0, μ > 0: " + ", ".join(bad) if bad else "",
    ))

    probs = params.jump_pmf.probs
    total = float(probs.sum())
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        results.append(ConditionResult(
            "pmf", False, f"negative or non-finite entry at r={int(np.argmin(probs))}"))
    elif abs(total - 1.0) > PMF_TOL:
        results.append(ConditionResult("pmf", False, f"probabilities sum to {float(total)!r}, not 1"))
    else:
        results.append(ConditionResult("pmf", True))

    if np.any(probs[1:] > 0):
        results.append(ConditionResult("A", True))
    else:
        results.append(ConditionResult("A", False, "no r >= 1 with P_r > 0"))

    results.append(check_condition_u(params.kernel, x_max))
    return ValidationReport(tuple(results))
