"""Exact finite-state computations: embedded-chain laws, the time-t law of the
process, tube probabilities for piecewise-linear targets, and deterministic
checks of the uniform moment bound and the Poisson lower-tail bound.

Truncation is never hidden: any probability mass pushed above ``x_max`` or
beyond ``k_max`` Poisson terms is carried in ``truncation_mass_bound``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import DomainError, ModelParams, check_condition_u


@dataclass(frozen=True)
class TruncatedPmf:
    probs: np.ndarray
    truncation_mass_bound: float = 0.0

    @property
    def x_max(self) -> int:
        return self.probs.size - 1

    @classmethod
    def delta0(cls, x_max: int) -> "TruncatedPmf":
        p = np.zeros(x_max + 1)
        p[0] = 1.0
        return cls(p, 0.0)


def transition_matrix(params: ModelParams, x_max: int) -> np.ndarray:
    """Embedded-chain kernel restricted to {0..x_max}; rows may sum below 1."""
    if x_max < params.jump_pmf.max_jump:
        raise DomainError(f"x_max={x_max} is below the largest jump {params.jump_pmf.max_jump}")
    probs = params.jump_pmf.probs
    up, down = params.p_up, 1.0 - params.p_up
    P = np.zeros((x_max + 1, x_max + 1))
    R = min(probs.size, x_max + 1)
    P[0, :R] = probs[:R]
    for x in range(1, x_max + 1):
        hi = min(probs.size, x_max + 1 - x)
        P[x, x:x + hi] += up * probs[:hi]
        P[x, x - np.arange(1, x + 1)] += down * params.kernel.weights(x)
    return P


def eta_step(params: ModelParams, pmf: TruncatedPmf, P: np.ndarray | None = None) -> TruncatedPmf:
    """Law of eta(k+1) from the law of eta(k)."""
    if P is None:
        P = transition_matrix(params, pmf.x_max)
    new = pmf.probs @ P
    lost = max(0.0, float(pmf.probs.sum() - new.sum()))
    return TruncatedPmf(new, pmf.truncation_mass_bound + lost)


def poisson_pmf(mean: float, k_max: int) -> np.ndarray:
    """P(N = k), k = 0..k_max, by the term recursion p_k = p_{k-1} * mean / k."""
    out = np.empty(k_max + 1)
    if mean == 0.0:
        out[:] = 0.0
        out[0] = 1.0
        return out
    if mean < 700.0:
        term = math.exp(-mean)
        out[0] = term
        for k in range(1, k_max + 1):
            term *= mean / k
            out[k] = term
        return out
    k = np.arange(k_max + 1)
    return np.exp(k * math.log(mean) - mean - np.array([math.lgamma(i + 1) for i in k]))


def poisson_cdf(mean: float, k: int) -> float:
    if k < 0:
        return 0.0
    return float(min(1.0, poisson_pmf(mean, k).sum()))


def xi_distribution(params: ModelParams, t: float, x_max: int = 60, k_max: int = 60) -> TruncatedPmf:
    """Law of xi(t) as the Poisson(alpha t) mixture of embedded-chain laws."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    P = transition_matrix(params, x_max)
    weights = poisson_pmf(params.alpha * t, k_max)
    law = TruncatedPmf.delta0(x_max)
    acc = np.zeros(x_max + 1)
    lost = 0.0
    for k in range(k_max + 1):
        acc += weights[k] * law.probs
        lost += weights[k] * law.truncation_mass_bound
        if k < k_max:
            law = eta_step(params, law, P)
    tail = max(0.0, 1.0 - float(weights.sum()))
    return TruncatedPmf(acc, lost + tail)


@dataclass
class BoundReport:
    """JSON-ready record of one deterministic check."""

    claim: str
    parameters: dict
    lhs: float
    rhs: float
    truncation_bound: float = 0.0
    passed: bool = False
    inconclusive: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_json(self) -> dict:
        out = {
            "claim": self.claim,
            "parameters": self.parameters,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "truncation_bound": self.truncation_bound,
            "pass": self.passed,
            "inconclusive": self.inconclusive,
        }
        out.update(self.extra)
        return out


def lemma71_constant(params: ModelParams, u: int, C1: float) -> float:
    lam, mu, delta = params.lambda_up, params.mu_down, params.kernel.delta_bound
    return (4 * lam * delta + mu * (4 * delta - 3)) / mu * C1 ** (3 * u)


def lemma71_check(params: ModelParams, u: int = 1, C1: float = 4, k_max: int = 50,
                  x_max: int = 200) -> BoundReport:
    """Exact E[eta(k)^{3u} ; eta(k) > C1] for k = 0..k_max against C2."""
    if u < 1 or C1 <= 0:
        raise DomainError("need integer u >= 1 and C1 > 0")
    cond = check_condition_u(params.kernel, x_max)
    if not cond.passed:
        raise DomainError(f"condition U fails for the declared delta: {cond.detail}")
    C2 = lemma71_constant(params, u, C1)
    states = np.arange(x_max + 1, dtype=float)
    weight = np.where(states > C1, states ** (3 * u), 0.0)
    P = transition_matrix(params, x_max)
    law = TruncatedPmf.delta0(x_max)
    lhs = []
    for k in range(k_max + 1):
        lhs.append(float(law.probs @ weight))
        if k < k_max:
            law = eta_step(params, law, P)
    trunc = law.truncation_mass_bound
    trunc_contrib = trunc * float(x_max) ** (3 * u)
    worst = max(lhs)
    inconclusive = trunc_contrib > 0.01 * C2
    return BoundReport(
        claim="uniform moment bound E eta^{3u}(k) 1(eta(k) > C1) <= C2",
        parameters={"lambda": params.lambda_up, "mu": params.mu_down,
                    "delta": params.kernel.delta_bound, "u": u, "C1": C1,
                    "k_max": k_max, "x_max": x_max},
        lhs=worst,
        rhs=C2,
        truncation_bound=trunc,
        passed=(not inconclusive) and worst <= C2,
        inconclusive=inconclusive,
        extra={"max_ratio": worst / C2, "lhs_by_k": lhs,
               "truncation_contribution": trunc_contrib},
    )


def lemma75_rhs(rate: float, c: float, delta: float, T: float) -> float:
    clnc = c * math.log(c) if c > 0 else 0.0
    m = rate * (1 - delta)
    return math.exp(-m * T + m * c * T - T * clnc)


def lemma75_check(params: ModelParams, c: float, delta: float, T: float) -> BoundReport:
    """Exact P(Pois(rho (1-delta) T) <= floor(cT)) against the Chernoff-type bound."""
    if not (0 <= c < 1 and 0 <= delta <= 1 and T > 0):
        raise DomainError(f"need 0 <= c < 1, 0 <= delta <= 1, T > 0; got {c}, {delta}, {T}")
    rate = params.catastrophe_rate
    lhs = poisson_cdf(rate * (1 - delta) * T, math.floor(c * T))
    rhs = lemma75_rhs(rate, c, delta, T)
    return BoundReport(
        claim="P(nu2(T) - nu2(delta T) <= cT) <= exp{-rho(1-delta)T + rho(1-delta)cT - Tc ln c}",
        parameters={"catastrophe_rate": rate, "c": c, "delta": delta, "T": T},
        lhs=lhs,
        rhs=rhs,
        passed=lhs <= rhs * (1 + 1e-12),
    )


LEMMA75_C = tuple(round(0.05 * i, 2) for i in range(1, 20))
LEMMA75_DELTA = (0.0, 0.25, 0.5, 0.75)
LEMMA75_T = (1.0, 5.0, 10.0, 50.0)


def lemma75_grid(params: ModelParams, cs=LEMMA75_C, deltas=LEMMA75_DELTA,
                 Ts=LEMMA75_T) -> list[BoundReport]:
    return [lemma75_check(params, c, d, T) for c in cs for d in deltas for T in Ts]


def generator_matrix(params: ModelParams, x_max: int) -> np.ndarray:
    """Rate matrix on {0..x_max}; jumps leaving the range are dropped (killed)."""
    P = transition_matrix(params, x_max)
    G = params.alpha * P
    np.fill_diagonal(G, 0.0)
    stay = params.alpha * np.diag(P)
    # a self-jump leaves the state unchanged, so it is not an exit
    G[np.diag_indices_from(G)] = -(params.alpha - stay)
    return G


def tube_probability_exact(params: ModelParams, f, eps: float, T: float) -> float:
    """P(sup_t |xi(Tt)/T - f(t)| < eps) for piecewise-linear f on a uniform grid.

    Between the times where T f(s/T) +- eps T crosses an integer the set of
    admissible states is fixed, so the killed chain evolves by a matrix
    exponential of the generator restricted to that set.
    """
    if not (eps > 0 and T > 0):
        raise DomainError("need eps > 0 and T > 0")
    fvals = np.asarray(f.values, dtype=float)
    if abs(fvals[0]) >= eps:
        return 0.0
    n = fvals.size - 1
    band = eps * T
    x_max = max(int(math.ceil(T * fvals.max() + band)) + 1, params.jump_pmf.max_jump)
    G = generator_matrix(params, x_max)
    states = np.arange(x_max + 1)
    mass = np.zeros(x_max + 1)
    mass[0] = 1.0
    for i in range(n):
        s0, s1 = T * i / n, T * (i + 1) / n
        y0, y1 = T * fvals[i], T * fvals[i + 1]
        cuts = {s0, s1}
        for edge in (-band, band):
            a, b = sorted((y0 + edge, y1 + edge))
            if y1 != y0:
                for k in range(math.ceil(a), math.floor(b) + 1):
                    cuts.add(s0 + (k - edge - y0) / (y1 - y0) * (s1 - s0))
        cuts = sorted(c for c in cuts if s0 <= c <= s1)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            centre = y0 + (mid - s0) / (s1 - s0) * (y1 - y0)
            allowed = np.abs(states - centre) < band
            mass[~allowed] = 0.0
            idx = np.flatnonzero(allowed)
            if idx.size == 0:
                return 0.0
            mass[idx] = mass[idx] @ expm(G[np.ix_(idx, idx)] * (hi - lo))
            mass[~allowed] = 0.0
    # the endpoint t = 1 must also satisfy the strict inequality
    mass[np.abs(states - T * fvals[-1]) >= band] = 0.0
    return float(mass.sum())
