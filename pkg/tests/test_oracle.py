import math

import numpy as np
import pytest
from scipy import stats

from catldp.model import CatastropheKernel, DomainError
from catldp.oracle import (LEMMA75_C, LEMMA75_DELTA, LEMMA75_T, TruncatedPmf, eta_step,
                           lemma71_check, lemma71_constant, lemma75_check, lemma75_grid,
                           poisson_cdf, poisson_pmf, transition_matrix, tube_probability_exact,
                           xi_distribution)
from catldp.rate import TargetPath
from catldp.sampler import batch_statistic

from conftest import make_params


def test_eta_step_examples(unit_params):
    one = eta_step(unit_params, TruncatedPmf.delta0(10))
    np.testing.assert_array_equal(one.probs, np.eye(11)[1])
    two = eta_step(unit_params, one)
    expected = np.zeros(11)
    expected[[0, 2]] = 0.5
    np.testing.assert_allclose(two.probs, expected, atol=1e-15)


@pytest.mark.parametrize("kernel", [CatastropheKernel.uniform(), CatastropheKernel.tilted(2.0)])
def test_transition_rows_stochastic(kernel):
    p = make_params(mu=0.3, probs=[0.1, 0.4, 0.5], kernel=kernel)
    x_max = 40
    P = transition_matrix(p, x_max)
    assert np.all(P >= 0)
    # rows that cannot jump past x_max are exactly stochastic
    np.testing.assert_allclose(P[: x_max - 1].sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(DomainError):
        transition_matrix(p, 1)


def test_poisson_against_scipy():
    for mean in (0.0, 0.3, 5.0, 80.0, 900.0):
        k = np.arange(1200)
        np.testing.assert_allclose(poisson_pmf(mean, 1199), stats.poisson.pmf(k, mean),
                                   rtol=1e-9, atol=1e-300)
    assert poisson_cdf(5.0, 1) == pytest.approx(6 * math.exp(-5), rel=1e-14)
    assert poisson_cdf(5.0, -1) == 0.0


def test_xi_distribution_basics(unit_params):
    law = xi_distribution(unit_params, 0.0)
    assert law.probs[0] == 1.0 and law.truncation_mass_bound == 0.0
    for t in (0.5, 2.0, 6.0):
        law = xi_distribution(make_params(alpha=1.7, mu=0.4), t)
        assert law.probs[0] >= math.exp(-1.7 * t)


@pytest.mark.parametrize("params", [make_params(), make_params(mu=0.4, probs=[0.2, 0.3, 0.5]),
                                    make_params(kernel=CatastropheKernel.tilted(-0.5))])
def test_xi_distribution_consistency(params):
    law = xi_distribution(params, 3.0, 60, 60)
    assert abs(law.probs.sum() + law.truncation_mass_bound - 1.0) <= 1e-12
    fine = xi_distribution(params, 3.0, 120, 120)
    assert np.max(np.abs(fine.probs[:61] - law.probs)) <= 1e-8
    assert fine.truncation_mass_bound <= law.truncation_mass_bound + 1e-15


def test_lemma75_example():
    p = make_params(alpha=1.0, lam=1.0, mu=1.0)  # catastrophe rate 0.5
    rep = lemma75_check(p, 0.1, 0.0, 10.0)
    assert rep.lhs == pytest.approx(6 * math.exp(-5), rel=1e-13)
    assert rep.lhs == pytest.approx(0.040428, abs=1e-6)
    assert rep.rhs == pytest.approx(math.exp(-5 + 0.5 + 10 * 0.1 * math.log(10)), rel=1e-13)
    # exp(-2.197415) = 0.111090 (about 1/9)
    assert rep.rhs == pytest.approx(0.111090, abs=1e-6)
    assert rep.passed and rep.margin > 0
    out = rep.to_json()
    assert {"claim", "parameters", "lhs", "rhs", "margin", "pass"} <= set(out)


def test_lemma75_degenerate_cases():
    p = make_params()
    full = lemma75_check(p, 0.3, 1.0, 10.0)
    assert full.lhs == 1.0 and full.rhs >= 1.0 and full.passed
    tiny = lemma75_check(p, 0.05, 0.25, 10.0)  # cT < 1
    assert tiny.lhs == pytest.approx(math.exp(-0.5 * 0.75 * 10), rel=1e-13)
    assert tiny.passed
    assert lemma75_check(p, 0.0, 0.5, 5.0).lhs == pytest.approx(
        lemma75_check(p, 0.0, 0.5, 5.0).rhs, rel=1e-13)
    with pytest.raises(DomainError):
        lemma75_check(p, 1.0, 0.0, 1.0)


@pytest.mark.parametrize("mu", [0.2, 1.0, 5.0])
def test_lemma75_full_grid(mu):
    reps = lemma75_grid(make_params(mu=mu))
    assert len(reps) == len(LEMMA75_C) * len(LEMMA75_DELTA) * len(LEMMA75_T) == 304
    assert all(r.passed for r in reps)


def test_lemma71_example():
    p = make_params(kernel=CatastropheKernel.uniform(1.01))
    assert lemma71_constant(p, 1, 4.0) == pytest.approx(325.12, rel=1e-12)
    rep = lemma71_check(p, u=1, C1=4.0, k_max=50, x_max=200)
    lhs = rep.extra["lhs_by_k"]
    assert lhs[0] == 0.0
    assert all(math.isfinite(v) and v <= rep.rhs for v in lhs)
    assert rep.passed and not rep.inconclusive
    assert rep.extra["truncation_contribution"] < 0.01 * rep.rhs
    # the ratio levels off instead of trending upward
    ratio = np.array(lhs) / rep.rhs
    assert np.max(ratio[40:]) - np.max(ratio[30:40]) < 1e-3


def test_lemma71_matches_direct_moment():
    p = make_params(mu=0.7, kernel=CatastropheKernel.uniform(1.01))
    rep = lemma71_check(p, u=1, C1=4.0, k_max=12, x_max=60)
    law = TruncatedPmf.delta0(60)
    for _ in range(12):
        law = eta_step(p, law)
    x = np.arange(61)
    assert rep.extra["lhs_by_k"][12] == pytest.approx(float(np.sum(law.probs * x**3 * (x > 4))))


def test_lemma71_flags_coarse_truncation():
    p = make_params(lam=1.0, mu=0.05, probs=[0.0, 0.0, 0.0, 1.0],
                    kernel=CatastropheKernel.uniform(1.01))
    rep = lemma71_check(p, k_max=50, x_max=40)
    assert rep.inconclusive and not rep.passed


def test_lemma71_requires_condition_u():
    p = make_params(kernel=CatastropheKernel.tilted(3.0, delta_bound=1.01))
    with pytest.raises(DomainError):
        lemma71_check(p)


def test_tube_exact_against_monte_carlo():
    p = make_params(lam=1.0, mu=0.2)
    f = TargetPath.linear(0.5)
    T, n = 10.0, 200_000
    dist = batch_statistic(p, T, n, 5, stat="supdist", f=f)
    for eps in (0.1, 0.2, 0.4):
        exact = tube_probability_exact(p, f, eps, T)
        hits = int(np.count_nonzero(dist < eps * T))
        se = math.sqrt(n * exact * (1 - exact))
        assert abs(hits - n * exact) <= 4.5 * se + 1, eps


def test_tube_exact_monotone_in_eps():
    p = make_params(lam=1.0, mu=0.5)
    f = TargetPath.from_slopes([1.0, -0.5, 0.8])
    probs = [tube_probability_exact(p, f, e, 8.0) for e in (0.05, 0.1, 0.2, 0.5, 2.0)]
    assert all(a <= b + 1e-15 for a, b in zip(probs, probs[1:]))
    assert probs[-1] > 0.9


def test_exact_tube_decay_reaches_rate_band_at_large_T():
    # the Monte Carlo slope test at T <= 40 is starved of hits; the exact killed
    # chain reaches the asymptotic regime at T of a few hundred
    p = make_params(lam=1.0, mu=0.2)
    f = TargetPath.linear(0.5)
    Ts = np.array([160.0, 320.0, 480.0, 640.0])
    slopes = {}
    for eps in (0.05, 0.2):
        nlp = np.array([-math.log(tube_probability_exact(p, f, eps, T)) for T in Ts])
        slopes[eps] = np.polyfit(Ts, nlp, 1)[0]
    assert 0.083 <= slopes[0.05] <= 0.25
    assert slopes[0.05] >= slopes[0.2]
