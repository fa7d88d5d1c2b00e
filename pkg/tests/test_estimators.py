import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfuq.errors import (
    BudgetError,
    DegenerateVarianceError,
    DomainError,
    InsufficientDataError,
    PolicyInapplicableError,
)
from mfuq.estimators import (
    EstimateReport,
    QoiSamplePair,
    dl_mfmc_confidence_interval,
    dl_mfmc_mse_given_n,
    mc_fom_estimate,
    mfmc_mse_theoretical,
    mfmc_point_estimate,
    optimal_lambda,
)
from mfuq.stats import normal_quantile, t_quantile


def gaussian_pair(rng, m0, m1, sigma0=1.0, sigma1=1.0, rho=0.9, mean0=0.0, mean1=0.0):
    z0 = rng.standard_normal(m1)
    z1 = rng.standard_normal(m1)
    fom = mean0 + sigma0 * z0[:m0]
    rom = mean1 + sigma1 * (rho * z0 + math.sqrt(1 - rho**2) * z1)
    return QoiSamplePair(fom, rom)


def test_pair_invariants():
    with pytest.raises(DomainError):
        QoiSamplePair([1, 2, 3], [1, 2])
    with pytest.raises(DomainError):
        QoiSamplePair([1.0], [1.0, np.nan])
    p = QoiSamplePair([1, 2], [1, 2, 3], shared_inputs=(4, 5, 6))
    assert (p.m0, p.m1) == (2, 3)
    with pytest.raises(ValueError):
        p.fom_values[0] = 9.0


def test_mc_fom_examples():
    r = mc_fom_estimate([3.0] * 5, 0.9)
    assert r.point == 3.0 and r.half_width == 0.0 and r.method == "MC-FOM"
    r = mc_fom_estimate([0.0, 2.0], 0.95)
    assert r.point == 1.0
    assert r.half_width == pytest.approx(t_quantile(0.025, 2) * 1.0, rel=1e-12)
    with pytest.raises(InsufficientDataError):
        mc_fom_estimate([1.0], 0.9)
    with pytest.raises(DomainError):
        mc_fom_estimate([1.0, 2.0], 1.0)


def test_mc_fom_coverage_study():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(1000):
        r = mc_fom_estimate(rng.normal(5, 2, size=10_000), 0.99)
        hits += r.contains(5.0)
    assert 0.975 <= hits / 1000 <= 1.0


def test_point_estimate_examples():
    pair = QoiSamplePair([1, 2, 3], [1.1, 2.1, 2.9, 4.0, 0.0, 2.0])
    assert mfmc_point_estimate(pair, 0.0) == 2.0
    assert mfmc_point_estimate(pair, 0.5) == pytest.approx(2 + 0.5 * (12.1 / 6 - 6.1 / 3), rel=1e-14)
    same = QoiSamplePair([1, 5, 2], [1, 5, 2])
    assert mfmc_point_estimate(same, 3.7) == pytest.approx(np.mean([1, 5, 2]), rel=1e-15)
    with pytest.raises(InsufficientDataError):
        mfmc_point_estimate(QoiSamplePair([], [1.0, 2.0]), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.integers(0, 40))
def test_lambda_zero_is_mc_fom(values, extra):
    pair = QoiSamplePair(values, list(values) + [0.5] * extra)
    assert mfmc_point_estimate(pair, 0.0) == mc_fom_estimate(values, 0.9).point


def test_mse_examples():
    assert mfmc_mse_theoretical(1, 1, 1, 1, 10, 100) == pytest.approx(0.01, rel=1e-12)
    assert mfmc_mse_theoretical(2, 3, 0.4, 0.0, 8, 50) == pytest.approx(4 / 8, rel=1e-15)
    with pytest.raises(DomainError):
        mfmc_mse_theoretical(1, 1, 0.5, 1, 10, 5)
    # coupling larger than 2 lambda* makes things worse than plain Monte Carlo
    assert mfmc_mse_theoretical(1, 1, 0.5, 1.5, 10, 100) > 0.1


def test_mse_monte_carlo_oracle():
    rng = np.random.default_rng(17)
    sigma0, sigma1, rho, m0, m1 = 2.0, 1.0, 0.9, 10, 100
    lam = optimal_lambda(sigma0, sigma1, rho)
    assert lam == pytest.approx(1.8)
    est = [mfmc_point_estimate(gaussian_pair(rng, m0, m1, sigma0, sigma1, rho), lam) for _ in range(10_000)]
    assert np.var(est, ddof=1) == pytest.approx(mfmc_mse_theoretical(sigma0, sigma1, rho, lam, m0, m1), rel=0.1)


def test_optimal_lambda():
    assert optimal_lambda(1, 2, 0.0) == 0.0
    assert optimal_lambda(1.5, 1.5, 1.0) == 1.0
    assert optimal_lambda(2, 0.5, 0.8) == pytest.approx(3.2)
    with pytest.raises(DegenerateVarianceError):
        optimal_lambda(1, 0, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-1, 1), st.integers(1, 50), st.integers(0, 500))
def test_optimal_lambda_is_argmin(s0, s1, rho, m0, extra):
    m1 = m0 + extra
    lam = optimal_lambda(s0, s1, rho)
    best = mfmc_mse_theoretical(s0, s1, rho, lam, m0, m1)
    for delta in np.linspace(-3, 3, 41):
        assert best <= mfmc_mse_theoretical(s0, s1, rho, lam + delta, m0, m1) * (1 + 1e-12) + 1e-15


def test_dl_mse_given_n_forms():
    # rho = 1 removes the first radical
    v = dl_mfmc_mse_given_n(10, 5000, 1, 100, 20, 1.0, 2.0)
    assert v == pytest.approx(4.0 * 1 / (5000 - 1010 - 20), rel=1e-12)
    v = dl_mfmc_mse_given_n(10, 5000, 1e-12, 100, 20, 0.9, 1.0)
    assert v == pytest.approx(100 * (1 - 0.81) / (5000 - 1000 - 20), rel=1e-4)
    p, g, w0, n, t, rho2 = 1e4, 1, 100, 20, 50, 0.99
    rem = p - (g + w0) * n - t
    expected = (math.sqrt(w0 * (1 - rho2)) + math.sqrt(g * rho2)) ** 2 / rem
    assert dl_mfmc_mse_given_n(n, p, g, w0, t, math.sqrt(rho2), 1.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(BudgetError):
        dl_mfmc_mse_given_n(100, 1e4, 1, 100, 0, 0.9, 1)
    with pytest.raises(PolicyInapplicableError):
        dl_mfmc_mse_given_n(10, 1e4, 1, 100, 0, 0.05, 1)


def test_dl_mse_given_n_matches_campaign_variance():
    """Optimal allocation at the planted rho, variance over synthetic replications."""
    p, g, w0, n, t, rho = 1e4, 1.0, 100.0, 20, 50.0, math.sqrt(0.99)
    rem = p - (g + w0) * n - t
    r = math.sqrt(w0 * rho**2 / (g * (1 - rho**2)))
    m0 = math.floor(rem / (w0 + g * r))
    m1 = math.floor(r * m0)
    rng = np.random.default_rng(3)
    est = [mfmc_point_estimate(gaussian_pair(rng, m0, m1, rho=rho), rho) for _ in range(4000)]
    assert np.var(est, ddof=1) == pytest.approx(dl_mfmc_mse_given_n(n, p, g, w0, t, rho, 1.0), rel=0.15)


def test_dl_interval_limits():
    rng = np.random.default_rng(0)
    pair = gaussian_pair(rng, 30, 30)
    r = dl_mfmc_confidence_interval(pair, 0.95)
    s0 = np.std(pair.fom_values, ddof=1)
    assert r.half_width == pytest.approx(normal_quantile(0.025) * s0 / math.sqrt(30), rel=1e-10)
    pair = gaussian_pair(rng, 20, 20_000, rho=1 - 1e-12)
    r = dl_mfmc_confidence_interval(pair, 0.95)
    s0 = np.std(pair.fom_values, ddof=1)
    assert r.half_width == pytest.approx(normal_quantile(0.025) * s0 / math.sqrt(20_000), rel=1e-3)
    assert r.ci_low <= r.point <= r.ci_high
    assert r.point - r.ci_low == pytest.approx(r.ci_high - r.point)


def test_dl_interval_errors():
    with pytest.raises(InsufficientDataError):
        dl_mfmc_confidence_interval(QoiSamplePair([1.0], [1.0, 2.0]), 0.9)
    with pytest.raises(DegenerateVarianceError):
        dl_mfmc_confidence_interval(QoiSamplePair([1.0, 2.0], [3.0, 3.0, 3.0]), 0.9)


def test_dl_interval_forced_lambda_zero_is_mc_width():
    rng = np.random.default_rng(8)
    pair = gaussian_pair(rng, 40, 400)
    r = dl_mfmc_confidence_interval(pair, 0.99, lam=0.0)
    assert r.point == np.mean(pair.fom_values)
    assert r.variance_estimate == pytest.approx(np.var(pair.fom_values, ddof=1) / 40, rel=1e-12)


def test_dl_interval_coverage_study():
    rng = np.random.default_rng(21)
    hits = sum(dl_mfmc_confidence_interval(gaussian_pair(rng, 50, 2000), 0.99).contains(0.0)
               for _ in range(4000))
    assert abs(hits / 4000 - 0.99) <= 0.015


def test_unbiased_for_fixed_lambda():
    rng = np.random.default_rng(4)
    for lam in (0.0, 0.5, 2.0):
        est = np.array([mfmc_point_estimate(gaussian_pair(rng, 5, 50, mean0=3.0, mean1=-1.0), lam)
                        for _ in range(2000)])
        se = est.std(ddof=1) / math.sqrt(est.size)
        assert abs(est.mean() - 3.0) < 4 * se


def test_variance_reduction_at_equal_budget():
    g, w0, rho, budget = 1.0, 100.0, math.sqrt(0.95), 20_000.0
    r = math.sqrt(w0 * rho**2 / (g * (1 - rho**2)))
    m0 = math.floor(budget / (w0 + g * r))
    m1 = math.floor(r * m0)
    n_mc = math.floor(budget / (g + w0))
    rng = np.random.default_rng(12)
    mf = [mfmc_point_estimate(gaussian_pair(rng, m0, m1, rho=rho), rho) for _ in range(3000)]
    mc = [rng.standard_normal(n_mc).mean() for _ in range(3000)]
    assert np.var(mf) < 0.9 * np.var(mc)


def test_report_roundtrip():
    r = mc_fom_estimate([1.0, 2.0, 4.0], 0.9, cost_ledger={"total": 3.0})
    assert EstimateReport.from_dict(r.to_dict()) == r
