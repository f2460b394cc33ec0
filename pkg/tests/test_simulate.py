"""Session simulator tests: hand traces, backend parity, analytic agreement."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from _reference import reference_params

from offloadlab import (
    ParameterError,
    RandomStream,
    ScenarioParams,
    SimConfig,
    analyze,
    case_probabilities,
    crossing_count_pmf,
    laplace,
    make_from_moments,
    run_monte_carlo,
    simulate_session,
    visit_level_probe,
)
from offloadlab import simulate
from offloadlab.simulate import _run_batches, get_kernel
from offloadlab import _pysim


def exp_dist(mean):
    return make_from_moments("exponential", mean)


def _has_compiled():
    try:
        get_kernel("compiled")
        return True
    except ImportError:
        return False


needs_compiled = pytest.mark.skipif(not _has_compiled(), reason="compiled kernel not built")


class TestConfig:
    def test_defaults_valid(self):
        cfg = SimConfig(replications=1000, seed=1)
        assert cfg.effective_batch_count == 100

    def test_single_replication_clamps_batches(self):
        cfg = SimConfig(replications=1, seed=1)
        assert cfg.effective_batch_count == 1

    def test_nondividing_batches_rejected(self):
        with pytest.raises(ParameterError):
            SimConfig(replications=150, seed=1, batch_count=100)

    def test_bad_mode_rejected(self):
        with pytest.raises(ParameterError):
            SimConfig(replications=100, seed=1, counting_mode="strict")

    def test_small_batch_count_rejected(self):
        with pytest.raises(ParameterError):
            SimConfig(replications=100, seed=1, batch_count=1)


class TestHandTraces:
    """Feed scripted draws through the session walk and check every tally."""

    ETA_S = 0.01
    ETA_O = 0.1

    def _walk(self, monkeypatch, residuals, residences, uniforms, flowchart=False):
        res_queue = list(residuals)
        sample_queue = list(residences)
        monkeypatch.setattr(_pysim, "_draw_residual", lambda *a: res_queue.pop(0))
        monkeypatch.setattr(_pysim, "_draw", lambda *a: sample_queue.pop(0))
        u_queue = list(uniforms)
        return _pysim.session_walk(
            lambda: u_queue.pop(0), self.ETA_S, self.ETA_O, 0.5,
            True, 1.0, 1.0, True, 1.0, 1.0, flowchart)

    @staticmethod
    def _u_for_exp(value, rate):
        # uniform that makes -log1p(-u)/rate come out as `value`
        return -math.expm1(-value * rate)

    def test_expired_completed_visit_costs_two(self, monkeypatch):
        # start macro (u=0.3 < 0.5), t_s = 100, initial macro residual 10,
        # femto visit 20 with threshold 5, next macro residence 200 (censored)
        u_ts = self._u_for_exp(100.0, self.ETA_S)
        u_to = self._u_for_exp(5.0, self.ETA_O)
        out = self._walk(monkeypatch, [10.0], [20.0, 200.0], [0.3, u_ts, u_to])
        (start_macro, ncross, nb, nt, tb, tt, t_s, n_completed, n_exp_completed,
         sum_len, sum_off, n_final, n_exp_final, age_final, off_final,
         init_completed, init_len) = out
        assert start_macro and ncross == 2 and nb == 2
        assert nt == 2                      # entry + exit of the expired visit
        assert tb == pytest.approx(20.0)
        assert tt == pytest.approx(15.0)    # 20 - 5
        assert n_completed == 1 and n_exp_completed == 1
        assert sum_off == pytest.approx(15.0)
        assert n_final == 0 and init_completed == 0

    def test_suppressed_completed_visit_paper_vs_flowchart(self, monkeypatch):
        u_ts = self._u_for_exp(100.0, self.ETA_S)
        u_to = self._u_for_exp(50.0, self.ETA_O)  # threshold outlives the visit
        args = ([10.0], [20.0, 200.0], [0.3, u_ts, u_to])
        paper = self._walk(monkeypatch, *args)
        assert paper[3] == 1 and paper[5] == 0.0    # one unit, nothing offloaded
        flow = self._walk(monkeypatch, *args, flowchart=True)
        assert flow[3] == 0 and flow[5] == 0.0      # suppressed visit is free

    def test_degenerate_macro_start(self, monkeypatch):
        u_ts = self._u_for_exp(100.0, self.ETA_S)
        out = self._walk(monkeypatch, [500.0], [], [0.3, u_ts])
        assert out[1] == 0 and out[2] == 0 and out[3] == 0
        assert out[4] == 0.0 and out[5] == 0.0

    def test_degenerate_femto_start(self, monkeypatch):
        # start femto (u=0.9 >= 0.5); session ends inside the initial residual
        u_ts = self._u_for_exp(100.0, self.ETA_S)
        out = self._walk(monkeypatch, [500.0], [], [0.9, u_ts])
        assert out[1] == 0 and out[3] == 0
        assert out[4] == pytest.approx(100.0)   # attached the whole session
        assert out[5] == pytest.approx(100.0)
        assert out[6] == pytest.approx(100.0)

    def test_initial_femto_exit_costs_one(self, monkeypatch):
        # start femto, residual 30 completes, session ends in macro
        u_ts = self._u_for_exp(100.0, self.ETA_S)
        out = self._walk(monkeypatch, [30.0], [500.0], [0.9, u_ts])
        assert out[1] == 1 and out[3] == 1
        assert out[4] == pytest.approx(30.0) and out[5] == pytest.approx(30.0)
        assert out[15] == 1 and out[16] == pytest.approx(30.0)

    def test_final_entered_visit_threshold_expired(self, monkeypatch):
        # start macro, residual 10, enter femto with threshold 5; session ends
        # inside the visit after 40 more seconds (t_s = 50)
        u_ts = self._u_for_exp(50.0, self.ETA_S)
        u_to = self._u_for_exp(5.0, self.ETA_O)
        out = self._walk(monkeypatch, [10.0], [90.0], [0.3, u_ts, u_to])
        assert out[1] == 1
        assert out[3] == 1                       # the handover-in only
        assert out[4] == pytest.approx(40.0)
        assert out[5] == pytest.approx(35.0)     # 40 - 5
        assert out[11] == 1 and out[12] == 1
        assert out[13] == pytest.approx(40.0) and out[14] == pytest.approx(35.0)


class TestSessionOutcome:
    def test_determinism(self, ref_params):
        a = simulate_session(ref_params, RandomStream(77, 3))
        b = simulate_session(ref_params, RandomStream(77, 3))
        assert a == b

    def test_invariants_over_many_sessions(self, ref_params):
        rs = RandomStream(5, 0)
        for _ in range(3000):
            out = simulate_session(ref_params, rs)
            assert out.n_handover_to <= out.n_handover_baseline
            assert out.t_offload_to <= out.t_offload_baseline * (1 + 1e-12) + 1e-12
            assert out.t_offload_baseline <= out.t_session * (1 + 1e-12) + 1e-12
            assert out.n_handover_baseline == out.n_crossings
            if out.case_label == "degenerate-0-crossing":
                assert out.n_crossings == 0
                if out.start_cell == "femto":
                    assert out.t_offload_baseline == pytest.approx(out.t_session)
                    assert out.t_offload_to == pytest.approx(out.t_session)
                else:
                    assert out.t_offload_baseline == 0.0
            elif out.start_cell == "macro":
                expect = "1-1" if out.n_crossings % 2 == 0 else "1-2"
                assert out.case_label == expect

    def test_bad_mode(self, ref_params):
        with pytest.raises(ParameterError):
            simulate_session(ref_params, RandomStream(1), mode="loose")


@needs_compiled
class TestBackendParity:
    def test_accumulators_bitwise_equal(self, ref_params):
        cfg = SimConfig(replications=20_000, seed=99, batch_count=4)
        fc, ic, hc = _run_batches(ref_params, cfg, kernel=get_kernel("compiled"))
        fp, ip, hp = _run_batches(ref_params, cfg, kernel=get_kernel("python"))
        assert np.array_equal(fc, fp)
        assert np.array_equal(ic, ip)
        assert np.array_equal(hc, hp)

    def test_flowchart_parity(self, ref_params):
        cfg = SimConfig(replications=5_000, seed=13, batch_count=2,
                        counting_mode="flowchart")
        fc, ic, _ = _run_batches(ref_params, cfg, kernel=get_kernel("compiled"))
        fp, ip, _ = _run_batches(ref_params, cfg, kernel=get_kernel("python"))
        assert np.array_equal(fc, fp) and np.array_equal(ic, ip)

    def test_kernel_matches_session_stream(self, ref_params):
        # n sequential single sessions on one stream == one kernel batch
        n = 500
        rs = RandomStream(4242, 0)
        outs = [simulate_session(ref_params, rs) for _ in range(n)]
        cfg = SimConfig(replications=n, seed=4242, batch_count=2)
        rec = {
            "nb": np.zeros(n, dtype=np.int64), "nt": np.zeros(n, dtype=np.int64),
            "ncross": np.zeros(n, dtype=np.int64), "tb": np.zeros(n),
            "tt": np.zeros(n), "ts": np.zeros(n),
            "start_macro": np.zeros(n, dtype=np.int8),
        }
        acc_f = np.zeros(_pysim.NUM_F)
        acc_i = np.zeros(_pysim.NUM_I, dtype=np.int64)
        hist = np.zeros((2, 512), dtype=np.int64)
        from offloadlab.simulate import _scenario_args

        get_kernel("compiled").run_sessions(
            RandomStream(4242, 0).bit_generator, *_scenario_args(ref_params),
            n, False, acc_f, acc_i, hist, rec,
        )
        assert [o.n_handover_baseline for o in outs] == rec["nb"].tolist()
        assert [o.n_handover_to for o in outs] == rec["nt"].tolist()
        assert [o.t_offload_baseline for o in outs] == rec["tb"].tolist()
        assert [o.t_session for o in outs] == rec["ts"].tolist()


class TestDeterminism:
    def test_workers_do_not_change_results(self, ref_params):
        r1 = run_monte_carlo(ref_params, SimConfig(replications=50_000, seed=6, workers=1))
        r4 = run_monte_carlo(ref_params, SimConfig(replications=50_000, seed=6, workers=4))
        assert r1.estimates == r4.estimates
        assert np.array_equal(r1.crossing_histogram, r4.crossing_histogram)

    def test_ci_shrinks_with_replications(self, ref_params):
        small = run_monte_carlo(ref_params, SimConfig(replications=20_000, seed=8))
        big = run_monte_carlo(ref_params, SimConfig(replications=320_000, seed=8))
        ratio = small.estimates["n_t"].ci_halfwidth / big.estimates["n_t"].ci_halfwidth
        assert 2.0 < ratio < 8.0  # expect ~4 = sqrt(16)


class TestAgreementWithAnalytics:
    def test_headline_estimates(self, megarun, ref_params):
        rep = analyze(ref_params)
        targets = {"n_b": rep.e_nb, "n_t": rep.e_nt, "t_b": rep.e_tb,
                   "t_t": rep.e_tt, "theta": rep.theta, "lambda": rep.lambda_}
        for key, truth in targets.items():
            est = megarun.estimates[key]
            assert abs(est.mean - truth) / truth < 0.01, key
            assert abs(est.mean - truth) < 4.0 * est.ci_halfwidth, key

    def test_start_cell_frequency(self, megarun, ref_params):
        pr1, _ = case_probabilities(ref_params)
        n = megarun.n_sessions
        se = math.sqrt(pr1 * (1 - pr1) / n)
        assert abs(megarun.start_macro_freq - pr1) < 3.5 * se

    def test_inclusive_offload_matches_stationarity(self, megarun, ref_params):
        # including degenerate sessions, mean offload = femto fraction * E[t_s]
        frac = ref_params.eta_m / (ref_params.eta_m + ref_params.eta_f)
        expect = frac / ref_params.eta_s
        assert abs(megarun.t_b_all_mean - expect) / expect < 0.01

    def test_histogram_matches_pmf(self, megarun, ref_params):
        pr1, _ = case_probabilities(ref_params)
        chisq = 0.0
        dof = 0
        for case, row in ((1, megarun.crossing_histogram[0]),
                          (2, megarun.crossing_histogram[1])):
            n_case = int(row.sum())
            expected = np.array(
                [crossing_count_pmf(ref_params, case, k) for k in range(row.size)]
            ) * n_case
            # merge the tail so every expected bucket has mass >= 5
            cut = int(np.argmax(np.cumsum(expected) > n_case - 5.0)) or row.size - 1
            obs = np.append(row[:cut], row[cut:].sum())
            exp = np.append(expected[:cut], n_case - expected[:cut].sum())
            chisq += float(((obs - exp) ** 2 / exp).sum())
            dof += obs.size - 1
        pvalue = stats.chi2.sf(chisq, dof)
        assert pvalue > 0.01

    def test_visit_probe_against_analytics(self, ref_params):
        rep = analyze(ref_params)
        probe = visit_level_probe(ref_params, SimConfig(replications=400_000, seed=17))
        targets = {"alpha": rep.alpha, "beta": rep.beta, "tau": rep.tau,
                   "sigma": rep.sigma, "xi": rep.xi, "phi": rep.phi, "rho": rep.rho}
        for key, truth in targets.items():
            est = probe.estimates[key]
            assert abs(est.mean - truth) < 4.0 * est.ci_halfwidth, key

    def test_probe_alpha_exponential_third(self):
        p = ScenarioParams(eta_s=1.0, macro=exp_dist(1.0), femto=exp_dist(1.0), eta_o=1.0)
        probe = visit_level_probe(p, SimConfig(replications=200_000, seed=33))
        est = probe.estimates["alpha"]
        assert abs(est.mean - 1.0 / 3.0) < 3.5 * est.ci_halfwidth

    def test_probe_sigma_equals_tau(self, ref_params):
        probe = visit_level_probe(ref_params, SimConfig(replications=400_000, seed=21))
        sigma, tau = probe.estimates["sigma"], probe.estimates["tau"]
        assert abs(sigma.mean - tau.mean) < 3.0 * (sigma.ci_halfwidth + tau.ci_halfwidth)


class TestCountingModeLimits:
    def test_paper_mode_small_rate_limit(self, ref_params):
        p = replace(ref_params, eta_o=1e-9)
        r = run_monte_carlo(p, SimConfig(replications=200_000, seed=40))
        assert abs(r.estimates["theta"].mean - 0.5) < 0.01

    def test_flowchart_mode_small_rate_limit(self, ref_params):
        # only initial femto exits remain: theta -> (1 + f*_f(eta_s))/2
        p = replace(ref_params, eta_o=1e-9)
        cfg = SimConfig(replications=200_000, seed=41, counting_mode="flowchart")
        r = run_monte_carlo(p, cfg)
        limit = (1.0 + laplace(p.femto, p.eta_s)) / 2.0
        assert abs(r.estimates["theta"].mean - limit) < 0.01

    def test_flowchart_never_costs_more(self, ref_params):
        paper = run_monte_carlo(ref_params, SimConfig(replications=100_000, seed=42))
        flow = run_monte_carlo(
            ref_params,
            SimConfig(replications=100_000, seed=42, counting_mode="flowchart"),
        )
        assert flow.estimates["n_t"].mean <= paper.estimates["n_t"].mean
        assert flow.estimates["t_t"] == paper.estimates["t_t"]  # offload unchanged


class TestReportShape:
    def test_case_frequencies_sum_to_one(self, megarun):
        assert sum(megarun.case_frequencies.values()) == pytest.approx(1.0)

    def test_backend_recorded(self, megarun):
        assert megarun.backend in ("compiled", "python")

    def test_single_replication_runs(self, ref_params):
        r = run_monte_carlo(ref_params, SimConfig(replications=1, seed=2))
        assert r.n_sessions == 1
        assert math.isinf(r.estimates["n_t"].ci_halfwidth)
