"""Numba kernels for the three path samplers and per-path statistics.

Every sampler takes a stream key and draws uniforms at counters 0, 1, 2, ...
so a path is a pure function of (parameters, horizon, key).
"""
import math

import numba as nb
import numpy as np

from .rng import stream_key, uniform_at

DIRECT, DECOMPOSED, SUBORDINATED = 0, 1, 2
STAT_FINAL, STAT_MAX, STAT_SUPDIST = 0, 1, 2
UNIFORM_KERNEL, TILTED_KERNEL = 0, 1


@nb.njit(cache=True, nogil=True)
def draw_jump(cdf, u):
    r = 0
    while u >= cdf[r]:
        r += 1
    return r


@nb.njit(cache=True, nogil=True)
def draw_catastrophe(kind, a, x, u):
    """Inverse-CDF draw of d in {1..x}."""
    if kind == UNIFORM_KERNEL:
        d = int(u * x) + 1
        return d if d <= x else x
    # cumulative weight W(d) = d + a*d*(d+1)/(2x); pick smallest d with u*W(x) < W(d)
    target = u * (x + a * (x + 1) / 2.0)
    if a == 0.0:
        d = int(math.floor(target)) + 1
    else:
        qa = a / (2.0 * x)
        qb = 1.0 + qa
        disc = qb * qb + 4.0 * qa * target
        d = int(math.floor((-qb + math.sqrt(max(disc, 0.0))) / (2.0 * qa))) + 1
    if d < 1:
        d = 1
    if d > x:
        d = x
    while d > 1 and (d - 1) + a * (d - 1) * d / (2.0 * x) > target:
        d -= 1
    while d < x and d + a * d * (d + 1) / (2.0 * x) <= target:
        d += 1
    return d


@nb.njit(cache=True, nogil=True)
def catastrophe_weight(kind, a, d, x):
    if kind == UNIFORM_KERNEL:
        return 1.0 / x
    return (1.0 + a * d / x) / (x + a * (x + 1) / 2.0)


@nb.njit(cache=True, nogil=True)
def _push(times, values, count, t, v):
    if count == times.size:
        nt = np.empty(2 * times.size)
        nv = np.empty(2 * values.size, dtype=np.int64)
        nt[:count] = times[:count]
        nv[:count] = values[:count]
        times, values = nt, nv
    times[count] = t
    values[count] = v
    return times, values, count + 1


@nb.njit(cache=True, nogil=True)
def path_direct(alpha, p_up, cdf, kind, a, horizon, key, times, values):
    """Holding times Exp(alpha); the jump is chosen from the current state."""
    t = 0.0
    x = 0
    ctr = np.uint64(0)
    one = np.uint64(1)
    count = 0
    ticks = 0
    while True:
        t += -math.log(uniform_at(key, ctr)) / alpha
        ctr += one
        if t > horizon:
            break
        ticks += 1
        if x == 0:
            new = draw_jump(cdf, uniform_at(key, ctr))
            ctr += one
        else:
            branch = uniform_at(key, ctr)
            ctr += one
            u = uniform_at(key, ctr)
            ctr += one
            if branch < p_up:
                new = x + draw_jump(cdf, u)
            else:
                new = x - draw_catastrophe(kind, a, x, u)
        if new != x:
            times, values, count = _push(times, values, count, t, new)
            x = new
    return times, values, count, ticks, 0


@nb.njit(cache=True, nogil=True)
def path_decomposed(alpha, p_up, cdf, kind, a, horizon, key, times, values):
    """Independent growth clock (rate alpha*p_up) and catastrophe clock.

    A catastrophe-clock arrival at state 0 acts as an upward jump r ~ P.
    """
    rate_up = alpha * p_up
    rate_down = alpha - rate_up
    ctr = np.uint64(0)
    one = np.uint64(1)
    next_up = -math.log(uniform_at(key, ctr)) / rate_up
    ctr += one
    next_down = -math.log(uniform_at(key, ctr)) / rate_down
    ctr += one
    x = 0
    count = 0
    n_up = 0
    n_down = 0
    while True:
        if next_up <= next_down:
            t = next_up
            if t > horizon:
                break
            n_up += 1
            new = x + draw_jump(cdf, uniform_at(key, ctr))
            ctr += one
            next_up = t - math.log(uniform_at(key, ctr)) / rate_up
            ctr += one
        else:
            t = next_down
            if t > horizon:
                break
            n_down += 1
            u = uniform_at(key, ctr)
            ctr += one
            if x == 0:
                new = draw_jump(cdf, u)
            else:
                new = x - draw_catastrophe(kind, a, x, u)
            next_down = t - math.log(uniform_at(key, ctr)) / rate_down
            ctr += one
        if new != x:
            times, values, count = _push(times, values, count, t, new)
            x = new
    return times, values, count, n_up, n_down


@nb.njit(cache=True, nogil=True)
def _poisson_count(mean, u):
    term = math.exp(-mean)
    cum = term
    k = 0
    while u > cum and term > 0.0:
        k += 1
        term *= mean / k
        cum += term
    return k


@nb.njit(cache=True, nogil=True)
def _eta_step(p_up, probs, kind, a, x, u):
    """One embedded-chain step by a single inverse-CDF scan over the row of x."""
    if x == 0:
        cum = 0.0
        for r in range(probs.size):
            cum += probs[r]
            if u < cum:
                return r
        return probs.size - 1
    cum = 0.0
    for r in range(probs.size):
        cum += p_up * probs[r]
        if u < cum:
            return x + r
    q = 1.0 - p_up
    for d in range(1, x + 1):
        cum += q * catastrophe_weight(kind, a, d, x)
        if u < cum:
            return x - d
    return 0


@nb.njit(cache=True, nogil=True)
def path_subordinated(alpha, p_up, probs, kind, a, horizon, key, times, values):
    """Poisson number of arrivals, uniform order statistics, then walk eta."""
    ctr = np.uint64(0)
    one = np.uint64(1)
    mean = alpha * horizon
    if mean < 600.0:
        n = _poisson_count(mean, uniform_at(key, ctr))
        ctr += one
        arrivals = np.empty(n)
        for i in range(n):
            arrivals[i] = horizon * uniform_at(key, ctr)
            ctr += one
        arrivals.sort()
    else:
        buf = np.empty(int(mean + 10.0 * math.sqrt(mean)) + 16)
        n = 0
        s = -math.log(uniform_at(key, ctr)) / alpha
        ctr += one
        while s <= horizon:
            if n == buf.size:
                nb_ = np.empty(2 * buf.size)
                nb_[:n] = buf[:n]
                buf = nb_
            buf[n] = s
            n += 1
            s -= math.log(uniform_at(key, ctr)) / alpha
            ctr += one
        arrivals = buf[:n]
    x = 0
    count = 0
    for i in range(arrivals.size):
        new = _eta_step(p_up, probs, kind, a, x, uniform_at(key, ctr))
        ctr += one
        if new != x:
            times, values, count = _push(times, values, count, arrivals[i], new)
            x = new
    return times, values, count, arrivals.size, 0


@nb.njit(cache=True, nogil=True)
def run_sampler(which, alpha, p_up, probs, cdf, kind, a, horizon, key, times, values):
    if which == DIRECT:
        return path_direct(alpha, p_up, cdf, kind, a, horizon, key, times, values)
    if which == DECOMPOSED:
        return path_decomposed(alpha, p_up, cdf, kind, a, horizon, key, times, values)
    return path_subordinated(alpha, p_up, probs, kind, a, horizon, key, times, values)


@nb.njit(cache=True, nogil=True)
def _f_at(tf, horizon, t):
    n = tf.size - 1
    pos = t * n / horizon
    j = int(pos)
    if j >= n:
        return tf[n]
    return tf[j] + (pos - j) * (tf[j + 1] - tf[j])


@nb.njit(cache=True, nogil=True)
def sup_distance_abs(times, values, count, horizon, tf):
    """sup over t in [0, T] of |path(t) - T f(t/T)|, with ``tf`` = T * f on the grid.

    On each interval between consecutive breakpoints (grid nodes and jump
    epochs) the path is constant and f linear, so checking the left limit and
    the value at every breakpoint is exact. Working in path units keeps
    integer-valued ties exact.
    """
    n = tf.size - 1
    best = abs(tf[0])
    cur = 0.0
    g = 1
    k = 0
    while g <= n or k < count:
        tg = horizon * g / n if g < n else (horizon if g == n else np.inf)
        te = times[k] if k < count else np.inf
        t = tg if tg < te else te
        ft = tf[g] if tg == t else _f_at(tf, horizon, t)
        d = abs(cur - ft)
        if d > best:
            best = d
        while k < count and times[k] == t:
            cur = values[k]
            k += 1
        d = abs(cur - ft)
        if d > best:
            best = d
        if tg == t:
            g += 1
    return best


@nb.njit(cache=True, nogil=True)
def batch_stat(which, alpha, p_up, probs, cdf, kind, a, horizon, seed, lo, hi, stat, fvals, out):
    """Fill out[i - lo] with a statistic of replicate i (stream id i).

    For STAT_SUPDIST ``fvals`` must already be scaled by the horizon.
    """
    times = np.empty(64)
    values = np.empty(64, dtype=np.int64)
    for i in range(lo, hi):
        key = stream_key(seed, np.uint64(i))
        times, values, count, _, _ = run_sampler(
            which, alpha, p_up, probs, cdf, kind, a, horizon, key, times, values)
        if stat == STAT_FINAL:
            out[i - lo] = values[count - 1] if count > 0 else 0
        elif stat == STAT_MAX:
            m = 0
            for j in range(count):
                if values[j] > m:
                    m = values[j]
            out[i - lo] = m
        else:
            out[i - lo] = sup_distance_abs(times, values, count, horizon, fvals)
