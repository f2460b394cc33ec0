"""Pure-Python session kernel: the reference twin of the compiled core.

The batch loop here defines the canonical random-draw order and tally
semantics. ``_simcore.pyx`` mirrors it operation for operation, so both
backends consume the same bit stream identically and produce bitwise-equal
accumulators. Keep the two in lockstep.

Accumulator layout (shared with the compiled kernel and the driver):

float64 vector of length ``NUM_F``
    session sums plus visit-level probe sums; see the ``F_*`` constants.
int64 vector of length ``NUM_I``
    session/visit counters; see the ``I_*`` constants.
int64 matrix (2, hist_len)
    crossing-count histogram, row 0 for macro-start sessions, row 1 for
    femto-start; counts at or above hist_len are clamped into the last
    bucket and tallied in ``I_HIST_CLAMPED``.
"""

from __future__ import annotations

import math

from numpy.random import Generator

from .residence import _draw, _draw_residual

BACKEND = "python"

# float accumulator indices
F_NB = 0                   # baseline handovers
F_NT = 1                   # handovers under deferral
F_TB = 2                   # baseline offload seconds, all sessions
F_TT = 3                   # deferral offload seconds, all sessions
F_T_DEGEN = 4              # t_s of femto-start zero-crossing sessions
F_TS = 5                   # session lengths
F_LEN_COMPLETED = 6        # lengths of completed entered visits
F_OFF_EXP_COMPLETED = 7    # offload of completed entered visits with expired threshold
F_AGE_FINAL = 8            # age at session end of entered final visits
F_OFF_EXP_FINAL = 9        # offload of final visits with expired threshold
F_INIT_LEN_COMPLETED = 10  # completed initial femto residuals
NUM_F = 11

# int accumulator indices
I_SESSIONS = 0
I_START_MACRO = 1
I_DEGEN_MACRO = 2          # macro-start sessions with zero crossings
I_DEGEN_FEMTO = 3          # femto-start sessions with zero crossings
I_CASE11 = 4
I_CASE12 = 5
I_CASE21 = 6
I_CASE22 = 7
I_COMPLETED = 8            # entered femto visits completed before session end
I_EXP_COMPLETED = 9
I_FINAL = 10               # entered femto visits the session ended inside
I_EXP_FINAL = 11
I_INIT_FEMTO_COMPLETED = 12
I_HIST_CLAMPED = 13
NUM_I = 14


def session_walk(nd, eta_s, eta_o, pr_case1,
                 m_exp, m_shape, m_rate, f_exp, f_shape, f_rate,
                 flowchart):
    """Walk one session; returns its tallies and visit-level probe counts.

    Draw order (fixed contract): start-cell uniform, session length, initial
    residual residence, then alternating full residences; a fresh threshold
    is drawn at each femtocell entry, before the femtocell residence itself.
    """
    start_macro = nd() < pr_case1
    t_s = -math.log1p(-nd()) / eta_s
    in_femto = not start_macro
    if in_femto:
        r = _draw_residual(nd, f_exp, f_shape, f_rate)
    else:
        r = _draw_residual(nd, m_exp, m_shape, m_rate)

    elapsed = 0.0
    ncross = 0
    nt = 0
    tb = tt = 0.0
    entered = False  # current femto residence reached via a crossing
    t_o = 0.0
    n_completed = n_exp_completed = 0
    n_final = n_exp_final = 0
    init_completed = 0
    sum_len_completed = sum_off_exp_completed = 0.0
    age_final = off_exp_final = 0.0
    init_len = 0.0

    while True:
        remaining = t_s - elapsed
        if r < remaining:
            if in_femto:
                tb += r
                if not entered:
                    # attached since session start: full offload, exit costs 1
                    tt += r
                    nt += 1
                    init_completed = 1
                    init_len = r
                else:
                    n_completed += 1
                    sum_len_completed += r
                    if t_o < r:
                        nt += 2
                        tt += r - t_o
                        n_exp_completed += 1
                        sum_off_exp_completed += r - t_o
                    elif not flowchart:
                        nt += 1
            ncross += 1
            elapsed += r
            in_femto = not in_femto
            if in_femto:
                t_o = -math.log1p(-nd()) / eta_o
                r = _draw(nd, f_exp, f_shape, f_rate)
                entered = True
            else:
                r = _draw(nd, m_exp, m_shape, m_rate)
        else:
            if in_femto:
                tb += remaining
                if not entered:
                    tt += remaining
                else:
                    n_final = 1
                    age_final = remaining
                    if t_o < remaining:
                        nt += 1
                        tt += remaining - t_o
                        n_exp_final = 1
                        off_exp_final = remaining - t_o
            break

    return (start_macro, ncross, ncross, nt, tb, tt, t_s,
            n_completed, n_exp_completed, sum_len_completed, sum_off_exp_completed,
            n_final, n_exp_final, age_final, off_exp_final,
            init_completed, init_len)


def run_sessions(bit_generator, eta_s, eta_o, pr_case1,
                 m_exp, m_shape, m_rate, f_exp, f_shape, f_rate,
                 n, flowchart, acc_f, acc_i, hist, record=None):
    """Run ``n`` sessions off one bit generator, accumulating in place.

    ``record``, when given, is a dict of per-session output arrays
    (nb, nt, ncross, tb, tt, ts, start_macro) of length >= n.
    """
    nd = Generator(bit_generator).random
    hist_len = hist.shape[1]
    for i in range(n):
        (start_macro, ncross, nb, nt, tb, tt, t_s,
         n_completed, n_exp_completed, sum_len_completed, sum_off_exp_completed,
         n_final, n_exp_final, age_final, off_exp_final,
         init_completed, init_len) = session_walk(
            nd, eta_s, eta_o, pr_case1,
            m_exp, m_shape, m_rate, f_exp, f_shape, f_rate, flowchart)

        acc_f[F_NB] += nb
        acc_f[F_NT] += nt
        acc_f[F_TB] += tb
        acc_f[F_TT] += tt
        acc_f[F_TS] += t_s
        acc_f[F_LEN_COMPLETED] += sum_len_completed
        acc_f[F_OFF_EXP_COMPLETED] += sum_off_exp_completed
        acc_f[F_AGE_FINAL] += age_final
        acc_f[F_OFF_EXP_FINAL] += off_exp_final
        acc_f[F_INIT_LEN_COMPLETED] += init_len

        acc_i[I_SESSIONS] += 1
        acc_i[I_COMPLETED] += n_completed
        acc_i[I_EXP_COMPLETED] += n_exp_completed
        acc_i[I_FINAL] += n_final
        acc_i[I_EXP_FINAL] += n_exp_final
        acc_i[I_INIT_FEMTO_COMPLETED] += init_completed
        if start_macro:
            acc_i[I_START_MACRO] += 1
            if ncross == 0:
                acc_i[I_DEGEN_MACRO] += 1
            elif ncross % 2 == 0:
                acc_i[I_CASE11] += 1
            else:
                acc_i[I_CASE12] += 1
        else:
            if ncross == 0:
                acc_i[I_DEGEN_FEMTO] += 1
                acc_f[F_T_DEGEN] += t_s
            elif ncross % 2 == 1:
                acc_i[I_CASE21] += 1
            else:
                acc_i[I_CASE22] += 1

        bucket = ncross
        if bucket >= hist_len:
            bucket = hist_len - 1
            acc_i[I_HIST_CLAMPED] += 1
        hist[0 if start_macro else 1, bucket] += 1

        if record is not None:
            record["nb"][i] = nb
            record["nt"][i] = nt
            record["ncross"][i] = ncross
            record["tb"][i] = tb
            record["tt"][i] = tt
            record["ts"][i] = t_s
            record["start_macro"][i] = start_macro


def sample_many(bit_generator, is_exp, shape, rate, residual, out):
    """Fill ``out`` with draws from one law (residual=True for equilibrium)."""
    nd = Generator(bit_generator).random
    n = out.shape[0]
    if residual:
        for i in range(n):
            out[i] = _draw_residual(nd, is_exp, shape, rate)
    else:
        for i in range(n):
            out[i] = _draw(nd, is_exp, shape, rate)
