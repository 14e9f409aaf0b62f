"""Exact event-driven samplers for the catastrophe process and path geometry.

Three constructions of the same law:

* ``sample_direct``: exponential holding times, jump chosen from the state;
* ``sample_decomposed``: independent growth and catastrophe Poisson clocks;
* ``sample_subordinated``: the embedded jump chain run at Poisson times.
"""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import DomainError, ModelParams
from .rng import RngStream

SAMPLERS = {
    "direct": K.DIRECT,
    "decomposed": K.DECOMPOSED,
    "subordinated": K.SUBORDINATED,
}


@dataclass(frozen=True)
class CadlagPath:
    """Right-continuous step path on [0, horizon] starting at 0.

    ``times``/``values`` hold the post-jump state at each state change.
    """

    horizon: float
    times: np.ndarray
    values: np.ndarray
    rng: RngStream | None = None
    clock_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=np.int64)
        if times.shape != values.shape or times.ndim != 1:
            raise DomainError("times and values must be 1-d arrays of equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size

    def value(self, t):
        """Path value at time(s) t (last recorded value at or before t)."""
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate(([0], self.values))
        return padded[idx]

    def left_limit(self, t):
        idx = np.searchsorted(self.times, t, side="left")
        padded = np.concatenate(([0], self.values))
        return padded[idx]

    def check(self) -> None:
        """Raise AssertionError if any path invariant is broken."""
        assert self.horizon > 0
        if self.times.size == 0:
            return
        assert self.times[0] > 0 and self.times[-1] <= self.horizon
        assert np.all(np.diff(self.times) > 0), "event times not strictly increasing"
        assert np.all(self.values >= 0), "negative state"
        prev = np.concatenate(([0], self.values[:-1]))
        assert np.all(prev != self.values), "self-jump recorded"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{int(v)}\n")
        seed = "" if self.rng is None else f" seed={self.rng.seed} stream={self.rng.stream}"
        buf.write(f"# horizon={self.horizon!r}{seed}\n")
        return buf.getvalue()


def kernel_args(params: ModelParams):
    """Flatten parameters into the positional arguments of the numba kernels."""
    kernel = params.kernel
    kind = K.UNIFORM_KERNEL if kernel.kind == "uniform" else K.TILTED_KERNEL
    probs = np.ascontiguousarray(params.jump_pmf.probs, dtype=float)
    return (float(params.alpha), float(params.p_up), probs,
            params.jump_pmf.cdf(), kind, float(kernel.a))


def _sample(which: str, params: ModelParams, T: float, rng: RngStream) -> CadlagPath:
    if not T > 0:
        raise DomainError(f"horizon T must be positive, got {T}")
    params.require_valid()
    times = np.empty(64)
    values = np.empty(64, dtype=np.int64)
    times, values, count, c1, c2 = K.run_sampler(
        SAMPLERS[which], *kernel_args(params), float(T), rng.key, times, values)
    clocks = {"up": int(c1), "down": int(c2)} if which == "decomposed" else {"events": int(c1)}
    return CadlagPath(float(T), times[:count].copy(), values[:count].copy(), rng, clocks)


def sample_direct(params: ModelParams, T: float, rng: RngStream) -> CadlagPath:
    return _sample("direct", params, T, rng)


def sample_decomposed(params: ModelParams, T: float, rng: RngStream) -> CadlagPath:
    return _sample("decomposed", params, T, rng)


def sample_subordinated(params: ModelParams, T: float, rng: RngStream) -> CadlagPath:
    return _sample("subordinated", params, T, rng)


def path_max(path: CadlagPath) -> int:
    return int(path.values.max()) if path.values.size else 0


def sup_distance(path: CadlagPath, f) -> float:
    """Exact sup over t in [0,1] of |path(T t)/T - f(t)|.

    ``f`` is a ``TargetPath`` (or anything exposing ``values`` on a uniform
    grid of [0, 1]).
    """
    T = float(path.horizon)
    fvals = np.ascontiguousarray(f.values, dtype=float)
    if fvals.size < 2:
        raise DomainError("target path needs at least one grid cell")
    return float(K.sup_distance_abs(path.times, path.values, path.times.size, T, T * fvals)) / T


def batch_statistic(
    params: ModelParams,
    T: float,
    n: int,
    seed: int,
    *,
    sampler: str = "direct",
    stat: str = "final",
    f=None,
    workers: int = 1,
) -> np.ndarray:
    """Per-replicate statistic for replicates 0..n-1 (replicate i uses stream i).

    ``stat`` is "final" (value at T), "max" (path maximum) or "supdist".
    "supdist" is returned in path units, sup |xi(t) - T f(t/T)|; a replicate
    lies in the eps-tube around ``f`` iff this is < eps * T. The output does
    not depend on ``workers``.
    """
    if not T > 0:
        raise DomainError(f"horizon T must be positive, got {T}")
    if n < 1:
        raise DomainError(f"need n >= 1 replicates, got {n}")
    params.require_valid()
    stat_id = {"final": K.STAT_FINAL, "max": K.STAT_MAX, "supdist": K.STAT_SUPDIST}[stat]
    fvals = (np.zeros(2) if f is None
             else float(T) * np.ascontiguousarray(f.values, dtype=float))
    args = kernel_args(params)
    which = SAMPLERS[sampler]
    seed64 = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out = np.empty(n)

    def work(lo, hi):
        K.batch_stat(which, *args, float(T), seed64, lo, hi, stat_id, fvals, out[lo:hi])

    workers = max(1, int(workers))
    if workers == 1:
        work(0, n)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, bounds[:-1], bounds[1:]))
    return out
