"""Local large-deviation rate function of the catastrophe process.

For a continuous piecewise-linear target f with f(t) > 0 on (0, 1],

    I(f) = catastrophe_rate + inf over g in B_f of  int_0^1 Lambda(g'(t)) dt,

where Lambda is the Legendre transform of the cumulant A(y) = log E exp(y xi+(1))
of the compound Poisson growth part and B_f holds the nondecreasing g whose
slope dominates the slope of the positive variation f+ almost everywhere.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import DomainError, ModelParams, mgf_gamma

STATIONARITY_RTOL = 1e-12
MAX_NEWTON_ITER = 100


class NumericalError(RuntimeError):
    """A root solve failed to reach its tolerance."""


@dataclass(frozen=True)
class TargetPath:
    """Continuous piecewise-linear function on the uniform grid t_i = i/N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DomainError("a target path needs values at N+1 >= 2 grid points")
        if not np.all(np.isfinite(v)):
            raise DomainError("target path values must be finite")
        if v[0] != 0.0:
            raise DomainError(f"target path must start at 0, got f(0) = {v[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def linear(cls, slope: float, n_cells: int = 1) -> "TargetPath":
        return cls(slope * np.linspace(0.0, 1.0, n_cells + 1))

    @classmethod
    def from_slopes(cls, slopes) -> "TargetPath":
        slopes = np.asarray(slopes, dtype=float)
        return cls(np.concatenate(([0.0], np.cumsum(slopes) / slopes.size)))

    @classmethod
    def from_csv(cls, path) -> "TargetPath":
        """Read ``t,f`` rows; the t column must be the uniform grid on [0, 1]."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and rows[0][0].strip() == "t":
            rows = rows[1:]
        t = np.array([float(r[0]) for r in rows])
        f = np.array([float(r[1]) for r in rows])
        if t.size < 2 or not np.allclose(t, np.linspace(0, 1, t.size), atol=1e-9):
            raise DomainError(f"{path}: t column is not a uniform grid on [0, 1]")
        return cls(f)

    def to_csv(self) -> str:
        grid = np.linspace(0, 1, self.values.size)
        return "t,f\n" + "".join(f"{float(t)!r},{float(v)!r}\n" for t, v in zip(grid, self.values))

    @property
    def n_cells(self) -> int:
        return self.values.size - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.n_cells

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) * self.n_cells

    @property
    def is_ac0_plus(self) -> bool:
        return bool(np.all(self.values[1:] > 0))

    def __call__(self, t):
        return np.interp(t, np.linspace(0, 1, self.values.size), self.values)


def cumulant_A(params: ModelParams, y):
    """A(y) = growth_rate * (E exp(y gamma) - 1)."""
    return params.growth_rate * (mgf_gamma(params.jump_pmf, y) - 1.0)


def cumulant_A_prime(params: ModelParams, y):
    y = np.asarray(y, dtype=float)
    r = np.arange(params.jump_pmf.probs.size)
    out = params.growth_rate * (np.exp(np.multiply.outer(y, r)) @ (r * params.jump_pmf.probs))
    return float(out) if out.ndim == 0 else out


def _log_aprime(params: ModelParams, y: np.ndarray):
    """log A'(y) and its derivative, via a shifted log-sum-exp over r >= 1."""
    probs = params.jump_pmf.probs
    r = np.flatnonzero(probs[1:] > 0) + 1
    logc = np.log(r * probs[r])
    z = y[:, None] * r[None, :] + logc[None, :]
    zmax = z.max(axis=1, keepdims=True)
    w = np.exp(z - zmax)
    s = w.sum(axis=1)
    value = math.log(params.growth_rate) + zmax[:, 0] + np.log(s)
    slope = (w @ r) / s
    return value, slope


def legendre_argmax(params: ModelParams, x):
    """The maximiser y*(x) of y x - A(y) for x > 0 (solves A'(y) = x).

    Safeguarded Newton on the increasing convex map y -> log A'(y): the root is
    bracketed by doubling, and any Newton step leaving the bracket is replaced
    by bisection.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DomainError("the maximiser exists only for finite x > 0")
    target = np.log(x)
    f0, s0 = _log_aprime(params, np.zeros(1))
    y = y0 = (target - f0[0]) / s0[0]

    lo = np.full_like(x, -np.inf)
    hi = np.full_like(x, np.inf)
    step = np.maximum(1.0, np.abs(y))
    # bracket: grow outward until log A' straddles log x
    for _ in range(200):
        val, _ = _log_aprime(params, y)
        below = val < target
        lo = np.where(below, np.maximum(lo, y), lo)
        hi = np.where(~below, np.minimum(hi, y), hi)
        open_lo, open_hi = np.isinf(lo), np.isinf(hi)
        if not (open_lo.any() or open_hi.any()):
            break
        y = np.where(open_hi, y + step, np.where(open_lo, y - step, y))
        step *= 2.0
    else:
        raise NumericalError("could not bracket the Legendre maximiser")

    y = np.clip(y0, lo, hi)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(MAX_NEWTON_ITER):
        val, slope = _log_aprime(params, y)
        resid = np.expm1(val - target)  # (A'(y) - x) / x
        done = (np.abs(resid) <= STATIONARITY_RTOL) | (hi - lo <= 4 * np.spacing(np.abs(y) + 1))
        if done.all():
            break
        lo = np.where(resid < 0, y, lo)
        hi = np.where(resid > 0, y, hi)
        cand = y - (val - target) / slope
        bad = ~((cand > lo) & (cand < hi))
        y = np.where(done, y, np.where(bad, 0.5 * (lo + hi), cand))
    else:
        raise NumericalError(
            f"Legendre solve did not converge in {MAX_NEWTON_ITER} iterations "
            f"(worst relative residual {np.max(np.abs(resid)):.3g})")
    return float(y[0]) if scalar else y


def legendre(params: ModelParams, x):
    """Lambda(x) = sup_y (x y - A(y)); +inf for x < 0, growth_rate (1 - P_0) at 0."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    out[x < 0] = np.inf
    out[x == 0] = params.growth_rate * (1.0 - params.jump_pmf.p0)
    pos = x > 0
    if pos.any():
        y = legendre_argmax(params, x[pos])
        # Lambda >= 0 exactly; clamp the roundoff near the drift
        out[pos] = np.maximum(y * x[pos] - cumulant_A(params, y), 0.0)
    return float(out[0]) if scalar else out


def legendre_closed_poisson(params: ModelParams, x):
    """x log(x / g) - x + g with g = growth_rate, for the unit-jump law (0 log 0 = 0)."""
    g = params.growth_rate
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        xlog = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / g), 0.0)
    out = np.where(x < 0, np.inf, xlog - x + g)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Variation:
    plus: TargetPath
    minus: TargetPath
    total: float
    plus_slopes: np.ndarray


def positive_variation(f: TargetPath) -> Variation:
    """Split f = f+ - f- into nondecreasing parts with additive variation."""
    s = f.slopes
    sp = np.maximum(s, 0.0)
    plus = TargetPath(np.concatenate(([0.0], np.cumsum(sp) * f.dt)))
    minus = TargetPath(np.concatenate(([0.0], np.cumsum(sp - s) * f.dt)))
    return Variation(plus, minus, float(np.abs(s).sum() * f.dt), sp)


@dataclass(frozen=True)
class OptimalPath:
    slopes: np.ndarray
    path: TargetPath
    objective: float


def variational_objective(params: ModelParams, slopes, dt: float) -> float:
    return float(np.sum(legendre(params, np.asarray(slopes, dtype=float))) * dt)


def _optimal(f: TargetPath, params: ModelParams, lam) -> OptimalPath:
    # Lambda is convex with its minimum 0 at the drift m, and the constraint is
    # cell-wise, so each cell takes the admissible slope closest to m.
    sp = positive_variation(f).plus_slopes
    slopes = np.maximum(sp, params.mean_growth)
    path = TargetPath(np.concatenate(([0.0], np.cumsum(slopes) * f.dt)))
    return OptimalPath(slopes, path, float(np.sum(lam(params, slopes)) * f.dt))


def optimal_g(f: TargetPath, params: ModelParams) -> OptimalPath:
    """Minimiser g* of int Lambda(g') over B_f, with g*(0) = 0."""
    return _optimal(f, params, legendre)


@dataclass(frozen=True)
class RateReport:
    rate_value: float
    catastrophe_term: float
    variational_term: float
    optimal_slopes: np.ndarray
    fplus_slopes: np.ndarray

    def to_json(self) -> dict:
        return {
            "rate": self.rate_value,
            "catastrophe_term": self.catastrophe_term,
            "variational_term": self.variational_term,
            "optimal_slopes": self.optimal_slopes.tolist(),
            "fplus_slopes": self.fplus_slopes.tolist(),
        }


def _report(f: TargetPath, params: ModelParams, lam) -> RateReport:
    if not f.is_ac0_plus:
        i = int(np.argmax(f.values[1:] <= 0)) + 1
        raise DomainError(f"f ∉ AC₀⁺: f(t_{i}) = {f.values[i]} is not positive")
    opt = _optimal(f, params, lam)
    cat = params.catastrophe_rate
    return RateReport(cat + opt.objective, cat, opt.objective, opt.slopes,
                      positive_variation(f).plus_slopes)


def rate_I(f: TargetPath, params: ModelParams) -> RateReport:
    return _report(f, params, legendre)


def rate_I_closed_poisson(f: TargetPath, params: ModelParams) -> RateReport:
    """Same as ``rate_I`` with the closed-form transform of the unit-jump law."""
    if not params.jump_pmf.is_point_mass_one:
        raise DomainError("closed form requires the unit jump law P_1 = 1")
    return _report(f, params, legendre_closed_poisson)
