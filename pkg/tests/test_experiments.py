import math

import numpy as np
import pytest
from scipy import stats

from catldp.experiments import (MIN_HITS_FOR_FIT, TubeEstimate, clopper_pearson, fit_slope,
                                lldp_slope, max_growth, sampler_equivalence, total_variation,
                                tube_probabilities, tube_probability)
from catldp.rate import TargetPath, rate_I

from conftest import make_params

LLDP = make_params(alpha=1.0, lam=1.0, mu=0.2)


@pytest.mark.parametrize("hits,n", [(0, 10), (3, 10), (10, 10), (17, 1000), (0, 10**6)])
def test_clopper_pearson_matches_scipy(hits, n):
    ref = stats.binomtest(hits, n).proportion_ci(0.95, method="exact")
    lo, hi = clopper_pearson(hits, n)
    assert lo == pytest.approx(ref.low, abs=1e-12) and hi == pytest.approx(ref.high, abs=1e-12)


def test_zero_hits_reports_rule_of_three_bound():
    est = TubeEstimate(20.0, 0.05, 10**6, 0)
    assert est.log_rate_is_bound
    assert est.log_rate == pytest.approx(-math.log(3e-6) / 20)
    assert est.row()["ci_lo"] == 0.0


def test_wide_tube_nearly_certain():
    est = tube_probability(LLDP, TargetPath.linear(0.5), 10.0, 5.0, 10_000, 1)
    assert est.p_hat >= 0.99


def test_razor_tube_empty():
    est = tube_probability(LLDP, TargetPath.linear(0.5), 1e-9, 5.0, 10_000, 1)
    assert est.hits == 0 and est.p_hat == 0.0


def test_tube_hits_nested_and_split_consistent():
    ests = tube_probabilities(LLDP, TargetPath.linear(0.5), [0.05, 0.1, 0.2, 0.4], 10.0,
                              100_000, 3)
    hits = [e.hits for e in ests]
    assert hits == sorted(hits)
    for e in ests:
        a, b = e.split_hits
        assert a + b == e.hits
        assert abs(a - b) < 4 * math.sqrt(e.n * e.p_hat) + 1


def test_log_rate_tripwire_along_drift():
    f = TargetPath.linear(LLDP.mean_growth)
    for e in tube_probabilities(LLDP, f, [0.1, 0.3], 20.0, 50_000, 4):
        assert 0 <= e.log_rate <= LLDP.catastrophe_rate + 0.5


def test_experiments_are_pure_functions_of_seed():
    f = TargetPath.linear(0.5)
    a = tube_probabilities(LLDP, f, [0.2], 8.0, 20_000, 9)
    b = tube_probabilities(LLDP, f, [0.2], 8.0, 20_000, 9, workers=4)
    c = tube_probabilities(LLDP, f, [0.2], 8.0, 20_000, 10)
    assert a == b and a != c


def test_fit_slope_recovers_known_decay():
    rate, n = 0.3, 10**7
    ests = [TubeEstimate(T, 0.1, n, int(round(n * 0.8 * math.exp(-rate * T))))
            for T in (5.0, 10.0, 15.0, 20.0)]
    fit = fit_slope(ests)
    assert fit.conclusive
    assert fit.slope == pytest.approx(rate, abs=1e-3)
    assert fit.se > 0


def test_fit_slope_inconclusive_without_hits():
    ests = [TubeEstimate(T, 0.1, 1000, h) for T, h in ((5.0, 50), (10.0, 12), (15.0, 3))]
    fit = fit_slope(ests)
    assert not fit.conclusive and int(fit.used.sum()) == 2 < 3
    assert MIN_HITS_FOR_FIT == 10


def test_lldp_slope_orders_targets_by_rate():
    # 1.5 lies above the drift 5/6, so Lambda(1.5) > 0 adds to the rate of the steeper line
    flat, steep = TargetPath.linear(0.5), TargetPath.linear(1.5)
    assert rate_I(steep, LLDP).rate_value > rate_I(flat, LLDP).rate_value + 0.1
    # eps and T chosen so both targets keep >= 10 hits at every T
    grid = [10.0, 20.0, 30.0]
    a = lldp_slope(LLDP, flat, 0.3, grid, 200_000, 5)
    b = lldp_slope(LLDP, steep, 0.3, grid, 200_000, 5)
    assert a.conclusive and b.conclusive
    fa, fb = a.fits[0.3], b.fits[0.3]
    assert fb.slope > fa.slope + 2 * math.hypot(fa.se, fb.se)


def test_max_growth_pinned_by_heavy_catastrophes():
    p = make_params(alpha=1.0, lam=0.1, mu=10.0)
    rows = max_growth(p, 0.8, 0.5, [5.0, 10.0, 20.0], 10_000, 2)
    # state 0 still jumps to 1 at rate alpha, so reaching 2 by T = 5 is rare but possible
    assert rows[0].exceed_freq < 0.05
    assert all(r.exceed_freq < 0.01 for r in rows[1:])


def test_max_growth_linear_scale_vanishes():
    p = make_params(alpha=1.0, lam=1.0, mu=1.0)
    rows = max_growth(p, 1.0, 0.2, [25.0, 50.0, 100.0, 200.0], 5_000, 3)
    freq = [r.exceed_freq for r in rows]
    assert all(b <= a + 2 * math.hypot(ra.se, rb.se)
               for a, b, ra, rb in zip(freq, freq[1:], rows, rows[1:]))
    assert freq[-1] < 0.01
    with pytest.raises(ValueError):
        max_growth(p, 0.0, 0.2, [10.0], 10, 0)


def _chain_sampler(corrupt):
    """Vectorised embedded chain for the unit-jump law; ``corrupt`` lets state 0 step down."""
    def run(params, t, n, seed, workers):
        rng = np.random.default_rng(seed)
        steps = rng.poisson(params.alpha * t, n)
        x = np.zeros(n, dtype=np.int64)
        for k in range(int(steps.max(initial=0))):
            live = steps > k
            up = rng.random(n) < params.p_up
            d = np.floor(rng.random(n) * np.maximum(x, 1)).astype(np.int64) + 1
            at0 = x == 0
            move = np.where(up | (at0 & ~np.full(n, corrupt)), 1, -np.where(at0, 0, d))
            x = np.where(live, x + move, x)
        return x.astype(float)
    return run


def test_equivalence_harness_controls():
    p = make_params()
    rows = sampler_equivalence(p, 3.0, 100_000, seed=1, samplers={
        "reference": _chain_sampler(False), "corrupted": _chain_sampler(True)})
    by_name = {r.sampler: r for r in rows}
    assert by_name["reference"].passed
    assert not by_name["corrupted"].passed
    assert by_name["corrupted"].tv > 0.05


def test_equivalence_builtin_samplers():
    rows = sampler_equivalence(make_params(), 3.0, 200_000, seed=8)
    assert [r.sampler for r in rows] == ["direct", "decomposed", "subordinated"]
    assert all(r.passed for r in rows)
    assert rows[0].row()["pass"] is True


def test_equivalence_degenerate_rate():
    p = make_params(alpha=0.01 / 3.0)
    rows = sampler_equivalence(p, 3.0, 20_000, seed=2)
    assert all(r.tv < 0.005 for r in rows)


def test_total_variation_counts_overflow():
    oracle = np.array([0.5, 0.5])
    assert total_variation(np.array([0.0, 1.0, 2.0, 5.0]), oracle) == pytest.approx(0.5)
