"""Monte Carlo experiments: tube probabilities and their decay with T, growth
of the path maximum, and sampler-versus-oracle agreement.

Replicate i of an experiment always uses stream i of the experiment seed, so
every result is a pure function of (configuration, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .model import ModelParams
from .oracle import xi_distribution
from .rate import TargetPath, rate_I
from .rng import sub_seed
from .sampler import SAMPLERS, batch_statistic

MIN_HITS_FOR_FIT = 10


def clopper_pearson(hits: int, n: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(a / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(stats.beta.ppf(1 - a / 2, hits + 1, n - hits))
    return lo, hi


@dataclass(frozen=True)
class TubeEstimate:
    T: float
    eps: float
    n: int
    hits: int
    split_hits: tuple[int, int] = (0, 0)

    @property
    def p_hat(self) -> float:
        return self.hits / self.n

    @property
    def ci(self) -> tuple[float, float]:
        return clopper_pearson(self.hits, self.n)

    @property
    def log_rate_is_bound(self) -> bool:
        return self.hits == 0

    @property
    def log_rate(self) -> float:
        """-ln(p_hat)/T; with zero hits, the rule-of-three lower bound -ln(3/n)/T."""
        p = 3.0 / self.n if self.hits == 0 else self.p_hat
        return -math.log(p) / self.T

    def row(self) -> dict:
        lo, hi = self.ci
        return {"T": self.T, "eps": self.eps, "n": self.n, "hits": self.hits,
                "p_hat": self.p_hat, "ci_lo": lo, "ci_hi": hi, "log_rate": self.log_rate}


TUBE_COLUMNS = ("T", "eps", "n", "hits", "p_hat", "ci_lo", "ci_hi", "log_rate")


def tube_probabilities(params: ModelParams, f: TargetPath, eps: Sequence[float], T: float,
                       n: int, seed: int, workers: int = 1) -> list[TubeEstimate]:
    """Tube-hit estimates for several eps from one set of paths (common random numbers)."""
    dist = batch_statistic(params, T, n, seed, stat="supdist", f=f, workers=workers)
    half = n // 2
    out = []
    for e in eps:
        hit = dist < e * T
        out.append(TubeEstimate(float(T), float(e), n, int(hit.sum()),
                                (int(hit[:half].sum()), int(hit[half:].sum()))))
    return out


def tube_probability(params: ModelParams, f: TargetPath, eps: float, T: float, n: int,
                     seed: int, workers: int = 1) -> TubeEstimate:
    return tube_probabilities(params, f, [eps], T, n, seed, workers)[0]


@dataclass(frozen=True)
class SlopeFit:
    """Weighted least-squares line through (T, -ln p_hat) over usable T."""

    eps: float
    T: np.ndarray
    neg_log_p: np.ndarray
    used: np.ndarray
    slope: float = float("nan")
    intercept: float = float("nan")
    se: float = float("nan")

    @property
    def conclusive(self) -> bool:
        return int(self.used.sum()) >= 3 and math.isfinite(self.slope)


def fit_slope(estimates: Sequence[TubeEstimate]) -> SlopeFit:
    T = np.array([e.T for e in estimates])
    hits = np.array([e.hits for e in estimates])
    n = np.array([e.n for e in estimates], dtype=float)
    used = hits >= MIN_HITS_FOR_FIT
    with np.errstate(divide="ignore"):
        nlp = -np.log(hits / n)
    base = SlopeFit(estimates[0].eps, T, nlp, used)
    if used.sum() < 3:
        return base
    p = hits[used] / n[used]
    # delta method: Var(-ln p_hat) ~ (1 - p) / (n p)
    w = 1.0 / ((1 - p) / (n[used] * p))
    X = np.column_stack([np.ones(used.sum()), T[used]])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ nlp[used])
    resid = nlp[used] - X @ beta
    dof = used.sum() - 2
    chi2 = float(np.sum(w * resid ** 2))
    # inflate by the Birge ratio when the line fits worse than sampling noise allows
    scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    return SlopeFit(base.eps, T, nlp, used, float(beta[1]), float(beta[0]),
                    float(math.sqrt(cov[1, 1] * scale)))


@dataclass
class LldpReport:
    rate: float
    estimates: list[TubeEstimate]
    fits: dict[float, SlopeFit]

    @property
    def conclusive(self) -> bool:
        return all(fit.conclusive for fit in self.fits.values())

    def ratio(self, eps: float) -> float:
        return self.fits[eps].slope / self.rate


def lldp_slope(params: ModelParams, f: TargetPath, eps, T_grid: Sequence[float], n: int,
               seed: int, workers: int = 1) -> LldpReport:
    """Fit the decay rate of the tube probability in T for each eps.

    All eps share the same paths at each T; each T uses its own derived seed.
    Fits with fewer than three T values holding >= 10 hits are inconclusive.
    """
    eps = [float(e) for e in np.atleast_1d(eps)]
    T_grid = [float(t) for t in T_grid]
    if len(T_grid) < 3 or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise ValueError("T_grid must be increasing with at least 3 points")
    estimates = []
    for j, T in enumerate(T_grid):
        estimates += tube_probabilities(params, f, eps, T, n, sub_seed(seed, j), workers)
    fits = {e: fit_slope([est for est in estimates if est.eps == e]) for e in eps}
    return LldpReport(rate_I(f, params).rate_value, estimates, fits)


@dataclass(frozen=True)
class MaxGrowthRow:
    T: float
    b: float
    eps: float
    n: int
    exceed: int

    @property
    def exceed_freq(self) -> float:
        return self.exceed / self.n

    @property
    def se(self) -> float:
        p = self.exceed_freq
        return math.sqrt(p * (1 - p) / self.n)

    def row(self) -> dict:
        return {"T": self.T, "b": self.b, "eps": self.eps, "n": self.n,
                "exceed_freq": self.exceed_freq}


MAXGROWTH_COLUMNS = ("T", "b", "eps", "n", "exceed_freq")


def max_growth(params: ModelParams, b: float, eps: float, T_grid: Sequence[float], n: int,
               seed: int, workers: int = 1) -> list[MaxGrowthRow]:
    """Frequency of max_{t <= T} xi(t) / T^b > eps for each T."""
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    rows = []
    for j, T in enumerate(T_grid):
        mx = batch_statistic(params, T, n, sub_seed(seed, j), stat="max", workers=workers)
        rows.append(MaxGrowthRow(float(T), float(b), float(eps), n,
                                 int(np.count_nonzero(mx / T ** b > eps))))
    return rows


# a sampler for the equivalence check maps (params, t, n, seed, workers) to values at t
BatchSampler = Callable[[ModelParams, float, int, int, int], np.ndarray]


def _builtin(name: str) -> BatchSampler:
    def run(params, t, n, seed, workers):
        return batch_statistic(params, t, n, seed, sampler=name, stat="final", workers=workers)
    return run


DEFAULT_SAMPLERS = {name: _builtin(name) for name in SAMPLERS}


@dataclass(frozen=True)
class EquivalenceRow:
    sampler: str
    t: float
    n: int
    tv: float
    trunc_bound: float
    tolerance: float = 0.01

    @property
    def passed(self) -> bool:
        return bool(self.tv <= self.tolerance + self.trunc_bound)

    def row(self) -> dict:
        return {"sampler": self.sampler, "t": self.t, "n": self.n, "tv": self.tv,
                "trunc_bound": self.trunc_bound, "pass": bool(self.passed)}


EQUIVALENCE_COLUMNS = ("sampler", "t", "n", "tv", "trunc_bound", "pass")


def total_variation(values: np.ndarray, oracle_probs: np.ndarray) -> float:
    """TV between the empirical law of integer ``values`` and a (sub-)pmf on 0..x_max."""
    x_max = oracle_probs.size - 1
    v = values.astype(np.int64)
    counts = np.bincount(v[v <= x_max], minlength=x_max + 1) / v.size
    above = np.count_nonzero(v > x_max) / v.size
    return 0.5 * (float(np.abs(counts - oracle_probs).sum()) + above)


def sampler_equivalence(params: ModelParams, t: float, n: int, x_max: int = 60,
                        k_max: int = 60, seed: int = 0, workers: int = 1,
                        samplers: dict[str, BatchSampler] | None = None,
                        tolerance: float = 0.01) -> list[EquivalenceRow]:
    oracle = xi_distribution(params, t, x_max, k_max)
    samplers = DEFAULT_SAMPLERS if samplers is None else samplers
    rows = []
    for j, (name, run) in enumerate(samplers.items()):
        values = run(params, t, n, sub_seed(seed, j), workers)
        rows.append(EquivalenceRow(name, float(t), n, total_variation(values, oracle.probs),
                                   oracle.truncation_mass_bound, tolerance))
    return rows
