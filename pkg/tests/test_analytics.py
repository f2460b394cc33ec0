"""Closed-form analytics tests.

Alongside the frozen reference cells, the headline expectations are checked
against a second, structurally different derivation: by stationarity, the
expected per-session offload time and handover counts can be written purely
in terms of entry rates and per-visit transform moments, with no
crossing-count case split at all. Both routes must agree to float precision.
"""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from _reference import ANALYTIC_CELLS, THRESHOLD_MEANS, reference_params

from offloadlab import (
    ParameterError,
    ScenarioParams,
    analyze,
    baseline_handover_count,
    baseline_offload_time,
    case_probabilities,
    crossing_count_pmf,
    handover_success_probs,
    lambda_ratio,
    laplace,
    make_from_moments,
    offload_time_means,
    residual_laplace,
    residual_weighted_moment,
    theta,
    theta_and_lambda,
    to_handover_count,
    to_offload_time,
    weighted_moment,
)


def exp_dist(mean):
    return make_from_moments("exponential", mean)


def random_scenarios(n, seed=1234):
    """Well-conditioned random scenarios spanning gamma and exponential laws."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        session_mean = float(rng.uniform(60.0, 6000.0))
        macro_mean = float(session_mean * rng.uniform(0.02, 2.0))
        femto_mean = float(session_mean * rng.uniform(0.02, 2.0))
        if rng.random() < 0.25:
            macro = exp_dist(macro_mean)
        else:
            macro = make_from_moments(
                "gamma", macro_mean, macro_mean**2 * float(rng.uniform(0.05, 100.0))
            )
        if rng.random() < 0.25:
            femto = exp_dist(femto_mean)
        else:
            femto = make_from_moments(
                "gamma", femto_mean, femto_mean**2 * float(rng.uniform(0.05, 100.0))
            )
        eta_o = float(rng.uniform(0.1, 100.0) / session_mean)
        out.append(ScenarioParams(eta_s=1.0 / session_mean, macro=macro,
                                  femto=femto, eta_o=eta_o))
    return out


def stationary_offload_baseline(p):
    """E[T_b] by the stationarity route: entry rate times per-visit moments."""
    psi_f = residual_laplace(p.femto, p.eta_s)
    y2 = residual_weighted_moment(p.femto, p.eta_s)
    pr2 = p.eta_m / (p.eta_m + p.eta_f)
    return pr2 * (psi_f + p.eta_s * y2) / p.eta_s


def stationary_offload_deferral(p):
    """E[T_t] by the stationarity route."""
    lap_f = laplace(p.femto, p.eta_s)
    y2 = residual_weighted_moment(p.femto, p.eta_s)
    alpha, beta = handover_success_probs(p)
    m = offload_time_means(p)
    pr2 = p.eta_m / (p.eta_m + p.eta_f)
    entries = baseline_handover_count(p) / 2.0
    per_visit = alpha * lap_f * m.phi + beta * (1.0 - lap_f) * m.rho
    return pr2 * y2 + entries * per_visit


class TestReferenceCells:
    @pytest.mark.parametrize("tm", THRESHOLD_MEANS)
    def test_frozen_cells(self, tm):
        p = reference_params(tm)
        rep = analyze(p)
        cells = ANALYTIC_CELLS[tm]
        assert_allclose(rep.e_nt, cells["n_t"], rtol=1e-4)
        assert_allclose(rep.e_tt, cells["t_t"], rtol=1e-4)
        assert_allclose(rep.theta * 100.0, cells["theta_pct"], rtol=1e-4)
        assert_allclose(rep.lambda_ * 100.0, cells["lambda_pct"], rtol=1e-4)

    def test_baseline_counts(self, ref_params):
        assert baseline_handover_count(ref_params) == pytest.approx(10.0, rel=1e-12)

    def test_baseline_count_symmetric_unit(self):
        p = ScenarioParams(eta_s=0.5, macro=exp_dist(2.0), femto=exp_dist(2.0), eta_o=1.0)
        assert baseline_handover_count(p) == pytest.approx(1.0, rel=1e-12)

    def test_offload_vanishes_with_session(self):
        # no session time, nothing to offload
        femto = make_from_moments("gamma", 60.0, 60000.0)
        p = ScenarioParams(eta_s=1e4, macro=exp_dist(60.0), femto=femto, eta_o=1.0)
        e_tb, _ = baseline_offload_time(p)
        assert e_tb < 1e-4

    def test_baseline_offload_golden(self, ref_params):
        e_tb, _ = baseline_offload_time(ref_params)
        assert e_tb == pytest.approx(236.83905, abs=5e-5)


class TestCaseProbabilities:
    def test_symmetric(self, ref_params):
        assert case_probabilities(ref_params) == (0.5, 0.5)

    def test_asymmetric(self):
        p = ScenarioParams(eta_s=1e-3, macro=exp_dist(100.0), femto=exp_dist(25.0),
                           eta_o=1.0)
        pr1, pr2 = case_probabilities(p)  # eta_m = 10 eta_s, eta_f = 40 eta_s
        assert pr1 == pytest.approx(0.8)
        assert pr2 == pytest.approx(0.2)
        assert pr1 + pr2 == 1.0


class TestSuccessProbs:
    def test_exponential_symmetric_third(self):
        # with everything exponential at rate 1: alpha = eta_o/(eta_f+eta_s+eta_o)
        p = ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=exp_dist(1.0), eta_o=1.0)
        alpha, beta = handover_success_probs(p)
        assert alpha == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert 0.0 <= beta <= 1.0

    def test_alpha_limit_large_rate(self):
        p = ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=exp_dist(1.0), eta_o=1e9)
        alpha, _ = handover_success_probs(p)
        assert alpha > 1.0 - 1e-8

    def test_degenerate_femto_law_rejected(self):
        # transform rounds to 1: zero-length visits, beta undefined
        femto = make_from_moments("gamma", 1.0, 1e20)
        p = ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=femto, eta_o=1.0)
        with pytest.raises(ParameterError):
            handover_success_probs(p)


class TestCrossingPmf:
    def test_half_at_zero(self):
        # exponential macro with eta_m = eta_s: initial residual completes w.p. 1/2
        p = ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=exp_dist(0.5), eta_o=1.0)
        assert crossing_count_pmf(p, 1, 0) == pytest.approx(0.5, rel=1e-12)

    @pytest.mark.parametrize("case", [1, 2])
    def test_normalization(self, ref_params, case):
        total = math.fsum(crossing_count_pmf(ref_params, case, k) for k in range(4000))
        assert abs(total - 1.0) < 1e-12

    def test_mean_reproduces_baseline_count(self, ref_params):
        pr1, pr2 = case_probabilities(ref_params)
        means = []
        for case in (1, 2):
            means.append(math.fsum(
                k * crossing_count_pmf(ref_params, case, k) for k in range(6000)
            ))
        combined = pr1 * means[0] + pr2 * means[1]
        assert_allclose(combined, baseline_handover_count(ref_params), rtol=1e-9)

    def test_invalid_args(self, ref_params):
        with pytest.raises(ParameterError):
            crossing_count_pmf(ref_params, 3, 0)
        with pytest.raises(ParameterError):
            crossing_count_pmf(ref_params, 1, -1)


class TestClosedFormConsistency:
    def test_hundred_random_scenarios(self):
        for p in random_scenarios(100):
            rep = analyze(p)
            assert_allclose(rep.theta, rep.theta_closed_form, rtol=1e-9)
            assert_allclose(rep.lambda_, rep.lambda_closed_form, rtol=1e-9)

    def test_stationary_route_agreement(self):
        for p in random_scenarios(40, seed=777):
            e_tb, _ = baseline_offload_time(p)
            e_tt, _ = to_offload_time(p)
            assert_allclose(e_tb, stationary_offload_baseline(p), rtol=1e-10)
            assert_allclose(e_tt, stationary_offload_deferral(p), rtol=1e-10)

    def test_macro_law_has_no_effect_on_ratios(self, ref_params):
        base = theta_and_lambda(ref_params)
        for var in (0.6, 360.0, 3.6e6):
            p = replace(ref_params, macro=make_from_moments("gamma", 60.0, var))
            other = theta_and_lambda(p)
            assert_allclose(other, base, rtol=1e-12)
        for mean in (6.0, 600.0):
            p = replace(ref_params, macro=exp_dist(mean))
            other = theta_and_lambda(p)
            assert_allclose(other, base, rtol=1e-12)


class TestPerCaseAssembly:
    def test_cases_combine_to_totals(self):
        for p in random_scenarios(20, seed=5):
            pr1, pr2 = case_probabilities(p)
            rep = analyze(p)

            def combined(attr):
                return (pr1 * (getattr(rep.per_case["1-1"], attr)
                               + getattr(rep.per_case["1-2"], attr))
                        + pr2 * (getattr(rep.per_case["2-1"], attr)
                                 + getattr(rep.per_case["2-2"], attr)))

            assert_allclose(combined("n_t"), rep.e_nt, rtol=1e-12)
            assert_allclose(combined("t_b"), rep.e_tb, rtol=1e-12)
            assert_allclose(combined("t_t"), rep.e_tt, rtol=1e-12)

    def test_op_pairs_match_analyze(self, ref_params):
        rep = analyze(ref_params)
        e_nt, nt_cases = to_handover_count(ref_params)
        assert e_nt == rep.e_nt
        assert nt_cases["1-1"] == rep.per_case["1-1"].n_t
        e_tb, _ = baseline_offload_time(ref_params)
        e_tt, _ = to_offload_time(ref_params)
        assert e_tb == rep.e_tb and e_tt == rep.e_tt


class TestOffloadMeans:
    def test_exponential_age_equals_residual(self):
        # memorylessness: tau == xi == 1/(eta_f + eta_s)
        p = ScenarioParams(eta_s=0.2, macro=exp_dist(5.0), femto=exp_dist(2.0), eta_o=0.7)
        m = offload_time_means(p)
        expected = 1.0 / (0.5 + 0.2)
        assert m.tau == pytest.approx(expected, rel=1e-12)
        assert m.xi == pytest.approx(expected, rel=1e-12)
        assert m.sigma == m.tau

    def test_expected_offload_bounded_by_visit_length(self):
        # conditioning on threshold expiry selects long visits, so phi alone
        # may exceed xi; the population-level bound is alpha*phi <= xi
        for p in random_scenarios(30, seed=11):
            alpha, _ = handover_success_probs(p)
            m = offload_time_means(p)
            assert alpha * m.phi <= m.xi * (1.0 + 1e-12)
            assert all(v >= 0.0 for v in m)


class TestLimitsAndMonotonicity:
    def test_theta_small_rate_limit(self, ref_params):
        p = replace(ref_params, eta_o=1e-9 * ref_params.eta_s)
        assert theta(p) == pytest.approx(0.5, abs=1e-8)

    def test_theta_large_rate_limit_exponential(self):
        p = ScenarioParams(eta_s=1 / 600, macro=exp_dist(60.0), femto=exp_dist(60.0),
                           eta_o=1e9)
        assert theta(p) < 1e-6

    def test_lambda_large_rate_limit(self):
        p = ScenarioParams(eta_s=1 / 600, macro=exp_dist(60.0), femto=exp_dist(60.0),
                           eta_o=1e9)
        assert lambda_ratio(p) == pytest.approx(1.0, abs=1e-6)

    def test_deferral_never_helps_metrics(self):
        for p in random_scenarios(20, seed=3):
            rep = analyze(p)
            assert rep.e_nt <= rep.e_nb + 1e-12 * rep.e_nb
            assert rep.e_tt <= rep.e_tb + 1e-12 * rep.e_tb

    @pytest.mark.parametrize("seed", [21, 22, 23])
    def test_monotone_tradeoff_on_grids(self, seed):
        base = random_scenarios(1, seed=seed)[0]
        grid = np.logspace(-5, 3, 100) * base.eta_s
        thetas, lambdas = [], []
        for eta_o in grid:
            th, lam = theta_and_lambda(replace(base, eta_o=float(eta_o)))
            thetas.append(th)
            lambdas.append(lam)
        assert all(b <= a + 1e-12 for a, b in zip(thetas, thetas[1:]))
        assert all(b >= a - 1e-12 for a, b in zip(lambdas, lambdas[1:]))


class TestReportInvariants:
    def test_ranges(self):
        for p in random_scenarios(30, seed=9):
            with warnings.catch_warnings():
                warnings.simplefilter("error")  # consistency must hold silently
                rep = analyze(p)
            assert 0.0 <= rep.alpha <= 1.0
            assert 0.0 <= rep.beta <= 1.0
            assert rep.sigma == rep.tau
            for v in (rep.tau, rep.xi, rep.phi, rep.rho, rep.y1, rep.y2,
                      rep.e_tb, rep.e_tt):
                assert v >= 0.0
            assert 0.0 < rep.theta <= 1.0
            assert 0.0 < rep.lambda_ <= 1.0

    def test_invalid_rates_rejected(self):
        with pytest.raises(ParameterError):
            ScenarioParams(eta_s=0.0, macro=exp_dist(1.0), femto=exp_dist(1.0), eta_o=1.0)
        with pytest.raises(ParameterError):
            ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=exp_dist(1.0),
                           eta_o=-2.0)

    def test_weighted_moment_matches_y1(self, ref_params):
        rep = analyze(ref_params)
        assert rep.y1 == weighted_moment(ref_params.femto, ref_params.eta_s)
        assert rep.y2 == residual_weighted_moment(ref_params.femto, ref_params.eta_s)
