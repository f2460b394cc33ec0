"""Monte Carlo session simulator: the independent oracle for the analytics.

Sessions are generated exactly as the analytic model assumes: stationary
start (equilibrium initial residence, start cell by mean-residence weights),
exponential session length, alternating i.i.d. residences, and a fresh
exponential deferral threshold drawn at every femtocell entry.

Two counting modes are supported. ``paper`` applies the same convention as
the closed-form analytics (a completed femtocell visit whose threshold never
expired still costs one handover); ``flowchart`` treats such suppressed
visits as free. Offload times are tallied identically in both modes.

Aggregation convention: the closed-form expectations for offload time omit
the contribution of femto-start sessions that never cross a cell boundary
(the session ends inside the initial residence). The headline ``t_b``/``t_t``
estimates and ``lambda`` therefore exclude those sessions' offload time so
that simulation and analytics estimate the same quantity; the inclusive sums
remain available on the report as ``t_b_all_mean``/``t_t_all_mean``.

The hot loop lives in a compiled extension (``_simcore``) with a pure-Python
twin (``_pysim``); the extension is preferred at import time and the two are
bitwise-interchangeable. Set ``OFFLOADLAB_PURE_PYTHON=1`` to force the
fallback. Replications are split into ``batch_count`` equal batches; each
batch owns its own random stream, so results are bitwise-identical for a
given (seed, replications, batch_count) no matter how many workers run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _st

from . import _pysim
from ._pysim import (
    F_AGE_FINAL,
    F_INIT_LEN_COMPLETED,
    F_LEN_COMPLETED,
    F_NB,
    F_NT,
    F_OFF_EXP_COMPLETED,
    F_OFF_EXP_FINAL,
    F_T_DEGEN,
    F_TB,
    F_TS,
    F_TT,
    I_CASE11,
    I_CASE12,
    I_CASE21,
    I_CASE22,
    I_COMPLETED,
    I_DEGEN_FEMTO,
    I_DEGEN_MACRO,
    I_EXP_COMPLETED,
    I_EXP_FINAL,
    I_FINAL,
    I_HIST_CLAMPED,
    I_INIT_FEMTO_COMPLETED,
    I_SESSIONS,
    I_START_MACRO,
    NUM_F,
    NUM_I,
)
from .analytics import ScenarioParams, case_probabilities
from .errors import ParameterError
from .residence import EXPONENTIAL, RandomStream

__all__ = [
    "SimConfig",
    "SessionOutcome",
    "SimEstimate",
    "SimReport",
    "ProbeReport",
    "COUNTING_MODES",
    "DEGENERATE_LABEL",
    "backend_name",
    "get_kernel",
    "simulate_session",
    "run_monte_carlo",
    "visit_level_probe",
]

COUNTING_MODES = ("paper", "flowchart")
DEGENERATE_LABEL = "degenerate-0-crossing"

if os.environ.get("OFFLOADLAB_PURE_PYTHON"):
    _kernel = _pysim
else:
    try:
        from . import _simcore as _kernel  # type: ignore[no-redef]
    except ImportError:
        _kernel = _pysim


def backend_name() -> str:
    """Name of the session kernel selected at import (compiled or python)."""
    return _kernel.BACKEND


def get_kernel(name: Optional[str] = None):
    """Return a kernel module by name ('compiled' or 'python'); default: active."""
    if name is None:
        return _kernel
    if name == "python":
        return _pysim
    if name == "compiled":
        from . import _simcore

        return _simcore
    raise ParameterError(f"unknown kernel {name!r}")


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    ``replications`` is the number of simulated sessions. Confidence
    intervals use batch means over ``batch_count`` equal batches, which are
    also the parallel work units; when replications < batch_count the batch
    count is clamped down (a single batch yields infinite CI halfwidths).
    """

    replications: int
    seed: int
    counting_mode: str = "paper"
    batch_count: int = 100
    workers: int = 1
    hist_len: int = 512

    def __post_init__(self) -> None:
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if self.counting_mode not in COUNTING_MODES:
            raise ParameterError(
                f"counting_mode must be one of {COUNTING_MODES}, got {self.counting_mode!r}"
            )
        if not isinstance(self.batch_count, int) or self.batch_count < 2:
            raise ParameterError(f"batch_count must be >= 2, got {self.batch_count}")
        if self.effective_batch_count > 0 and self.replications % self.effective_batch_count:
            raise ParameterError(
                f"batch_count {self.effective_batch_count} must divide "
                f"replications {self.replications}"
            )
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if not isinstance(self.hist_len, int) or self.hist_len < 2:
            raise ParameterError(f"hist_len must be >= 2, got {self.hist_len}")

    @property
    def effective_batch_count(self) -> int:
        return min(self.batch_count, self.replications)


@dataclass(frozen=True)
class SessionOutcome:
    """Per-session tallies of one simulated session."""

    start_cell: str                # "macro" | "femto"
    case_label: str                # "1-1" | "1-2" | "2-1" | "2-2" | degenerate
    n_crossings: int
    n_handover_baseline: int
    n_handover_to: int
    t_offload_baseline: float
    t_offload_to: float
    t_session: float


@dataclass(frozen=True)
class SimEstimate:
    """Point estimate with a 95% batch-means confidence halfwidth."""

    mean: float
    ci_halfwidth: float
    n: int


@dataclass(frozen=True)
class SimReport:
    """Aggregated Monte Carlo output of one run."""

    estimates: dict[str, SimEstimate]
    case_frequencies: dict[str, float]
    start_macro_freq: float
    crossing_histogram: np.ndarray  # (2, hist_len): row 0 macro-start, row 1 femto-start
    hist_clamped: int
    t_b_all_mean: float             # inclusive of degenerate femto-start sessions
    t_t_all_mean: float
    n_sessions: int
    counting_mode: str
    seed: int
    batch_count: int
    backend: str


@dataclass(frozen=True)
class ProbeReport:
    """Visit-level conditional statistics for comparison against analytics."""

    estimates: dict[str, SimEstimate]  # alpha, beta, tau, sigma, xi, phi, rho
    counts: dict[str, int] = field(default_factory=dict)


def _case_label(start_macro: bool, ncross: int) -> str:
    if ncross == 0:
        return DEGENERATE_LABEL
    if start_macro:
        return "1-1" if ncross % 2 == 0 else "1-2"
    return "2-1" if ncross % 2 == 1 else "2-2"


def _scenario_args(p: ScenarioParams) -> tuple:
    pr1, _ = case_probabilities(p)
    return (
        p.eta_s,
        p.eta_o,
        pr1,
        p.macro.family == EXPONENTIAL,
        p.macro.shape,
        p.macro.rate,
        p.femto.family == EXPONENTIAL,
        p.femto.shape,
        p.femto.rate,
    )


def simulate_session(
    p: ScenarioParams, rs: RandomStream, mode: str = "paper"
) -> SessionOutcome:
    """Simulate a single session on the caller's stream (reference path)."""
    if mode not in COUNTING_MODES:
        raise ParameterError(f"mode must be one of {COUNTING_MODES}, got {mode!r}")
    out = _pysim.session_walk(
        rs.next_double, *_scenario_args(p), flowchart=(mode == "flowchart")
    )
    start_macro, ncross, nb, nt, tb, tt, t_s = out[:7]
    return SessionOutcome(
        start_cell="macro" if start_macro else "femto",
        case_label=_case_label(start_macro, ncross),
        n_crossings=ncross,
        n_handover_baseline=nb,
        n_handover_to=nt,
        t_offload_baseline=tb,
        t_offload_to=tt,
        t_session=t_s,
    )


def _run_batches(p: ScenarioParams, cfg: SimConfig, kernel=None):
    """Run all batches; returns per-batch accumulator matrices."""
    kern = kernel if kernel is not None else _kernel
    nbatch = cfg.effective_batch_count
    per_batch = cfg.replications // nbatch
    args = _scenario_args(p)
    flowchart = cfg.counting_mode == "flowchart"

    acc_f = np.zeros((nbatch, NUM_F), dtype=np.float64)
    acc_i = np.zeros((nbatch, NUM_I), dtype=np.int64)
    hist = np.zeros((nbatch, 2, cfg.hist_len), dtype=np.int64)

    def one(b: int) -> None:
        stream = RandomStream(cfg.seed, b)
        kern.run_sessions(
            stream.bit_generator, *args, per_batch, flowchart,
            acc_f[b], acc_i[b], hist[b],
        )

    if cfg.workers > 1 and nbatch > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(one, range(nbatch)))
    else:
        for b in range(nbatch):
            one(b)
    return acc_f, acc_i, hist


def _batch_ci(batch_values: np.ndarray) -> float:
    """95% halfwidth from batch means; infinite when only one batch exists."""
    vals = batch_values[np.isfinite(batch_values)]
    b = vals.size
    if b < 2:
        return math.inf
    s = float(np.std(vals, ddof=1))
    return float(_st.t.ppf(0.975, b - 1)) * s / math.sqrt(b)


def run_monte_carlo(p: ScenarioParams, cfg: SimConfig, kernel=None) -> SimReport:
    """Estimate all headline quantities from ``cfg.replications`` sessions.

    Ratio metrics are ratios of sums (matching their definitions as ratios
    of expectations), with batch-means confidence intervals.
    """
    acc_f, acc_i, hist = _run_batches(p, cfg, kernel)
    tot_f = acc_f.sum(axis=0)
    tot_i = acc_i.sum(axis=0)
    n = int(tot_i[I_SESSIONS])

    tb_metric = acc_f[:, F_TB] - acc_f[:, F_T_DEGEN]
    tt_metric = acc_f[:, F_TT] - acc_f[:, F_T_DEGEN]
    per_batch_n = acc_i[:, I_SESSIONS].astype(np.float64)

    def est(total: float, batch_sums: np.ndarray) -> SimEstimate:
        return SimEstimate(
            mean=total / n, ci_halfwidth=_batch_ci(batch_sums / per_batch_n), n=n
        )

    sum_nb = float(tot_f[F_NB])
    sum_nt = float(tot_f[F_NT])
    sum_tb_m = float(tb_metric.sum())
    sum_tt_m = float(tt_metric.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_b = (acc_f[:, F_NB] - acc_f[:, F_NT]) / acc_f[:, F_NB]
        lambda_b = tt_metric / tb_metric
    estimates = {
        "n_b": est(sum_nb, acc_f[:, F_NB]),
        "n_t": est(sum_nt, acc_f[:, F_NT]),
        "t_b": est(sum_tb_m, tb_metric),
        "t_t": est(sum_tt_m, tt_metric),
        "theta": SimEstimate(
            mean=(sum_nb - sum_nt) / sum_nb if sum_nb else math.nan,
            ci_halfwidth=_batch_ci(theta_b),
            n=n,
        ),
        "lambda": SimEstimate(
            mean=sum_tt_m / sum_tb_m if sum_tb_m else math.nan,
            ci_halfwidth=_batch_ci(lambda_b),
            n=n,
        ),
    }
    case_freq = {
        "1-1": int(tot_i[I_CASE11]) / n,
        "1-2": int(tot_i[I_CASE12]) / n,
        "2-1": int(tot_i[I_CASE21]) / n,
        "2-2": int(tot_i[I_CASE22]) / n,
        DEGENERATE_LABEL: (int(tot_i[I_DEGEN_MACRO]) + int(tot_i[I_DEGEN_FEMTO])) / n,
    }
    kern = kernel if kernel is not None else _kernel
    return SimReport(
        estimates=estimates,
        case_frequencies=case_freq,
        start_macro_freq=int(tot_i[I_START_MACRO]) / n,
        crossing_histogram=hist.sum(axis=0),
        hist_clamped=int(tot_i[I_HIST_CLAMPED]),
        t_b_all_mean=float(tot_f[F_TB]) / n,
        t_t_all_mean=float(tot_f[F_TT]) / n,
        n_sessions=n,
        counting_mode=cfg.counting_mode,
        seed=cfg.seed,
        batch_count=cfg.effective_batch_count,
        backend=kern.BACKEND,
    )


def visit_level_probe(p: ScenarioParams, cfg: SimConfig, kernel=None) -> ProbeReport:
    """Empirical conditional visit statistics (alpha, beta, tau, sigma, xi, phi, rho).

    Each quantity is a ratio of sums over tagged femtocell visits; CIs come
    from the spread of per-batch ratios.
    """
    acc_f, acc_i, _ = _run_batches(p, cfg, kernel)
    tot_f = acc_f.sum(axis=0)
    tot_i = acc_i.sum(axis=0)

    def ratio(num_tot: float, den_tot: float, num_b, den_b) -> SimEstimate:
        mean = num_tot / den_tot if den_tot else math.nan
        with np.errstate(divide="ignore", invalid="ignore"):
            batch_vals = np.asarray(num_b, dtype=np.float64) / np.asarray(
                den_b, dtype=np.float64
            )
        return SimEstimate(mean=mean, ci_halfwidth=_batch_ci(batch_vals), n=int(den_tot))

    fi = acc_i.astype(np.float64)
    estimates = {
        "alpha": ratio(
            float(tot_i[I_EXP_COMPLETED]), float(tot_i[I_COMPLETED]),
            fi[:, I_EXP_COMPLETED], fi[:, I_COMPLETED],
        ),
        "beta": ratio(
            float(tot_i[I_EXP_FINAL]), float(tot_i[I_FINAL]),
            fi[:, I_EXP_FINAL], fi[:, I_FINAL],
        ),
        "tau": ratio(
            float(tot_f[F_INIT_LEN_COMPLETED]), float(tot_i[I_INIT_FEMTO_COMPLETED]),
            acc_f[:, F_INIT_LEN_COMPLETED], fi[:, I_INIT_FEMTO_COMPLETED],
        ),
        "sigma": ratio(
            float(tot_f[F_AGE_FINAL]), float(tot_i[I_FINAL]),
            acc_f[:, F_AGE_FINAL], fi[:, I_FINAL],
        ),
        "xi": ratio(
            float(tot_f[F_LEN_COMPLETED]), float(tot_i[I_COMPLETED]),
            acc_f[:, F_LEN_COMPLETED], fi[:, I_COMPLETED],
        ),
        "phi": ratio(
            float(tot_f[F_OFF_EXP_COMPLETED]), float(tot_i[I_EXP_COMPLETED]),
            acc_f[:, F_OFF_EXP_COMPLETED], fi[:, I_EXP_COMPLETED],
        ),
        "rho": ratio(
            float(tot_f[F_OFF_EXP_FINAL]), float(tot_i[I_EXP_FINAL]),
            acc_f[:, F_OFF_EXP_FINAL], fi[:, I_EXP_FINAL],
        ),
    }
    counts = {
        "completed_visits": int(tot_i[I_COMPLETED]),
        "expired_completed_visits": int(tot_i[I_EXP_COMPLETED]),
        "final_visits": int(tot_i[I_FINAL]),
        "expired_final_visits": int(tot_i[I_EXP_FINAL]),
        "initial_femto_completed": int(tot_i[I_INIT_FEMTO_COMPLETED]),
        "sessions": int(tot_i[I_SESSIONS]),
    }
    return ProbeReport(estimates=estimates, counts=counts)
