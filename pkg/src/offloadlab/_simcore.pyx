# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled session kernel.

Mirror of ``_pysim``: same draw order, same float operations, same
accumulator layout, fed by the same PCG64 bit stream. Both backends must
stay bitwise-identical; change them together (the parity tests enforce it).
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport cos, log, log1p, pow, sqrt
from libc.stdint cimport int64_t

from numpy.random cimport bitgen_t

BACKEND = "compiled"

cdef double TWO_PI = 6.283185307179586

# float accumulator indices (keep equal to _pysim)
cdef enum:
    F_NB = 0
    F_NT = 1
    F_TB = 2
    F_TT = 3
    F_T_DEGEN = 4
    F_TS = 5
    F_LEN_COMPLETED = 6
    F_OFF_EXP_COMPLETED = 7
    F_AGE_FINAL = 8
    F_OFF_EXP_FINAL = 9
    F_INIT_LEN_COMPLETED = 10

cdef enum:
    I_SESSIONS = 0
    I_START_MACRO = 1
    I_DEGEN_MACRO = 2
    I_DEGEN_FEMTO = 3
    I_CASE11 = 4
    I_CASE12 = 5
    I_CASE21 = 6
    I_CASE22 = 7
    I_COMPLETED = 8
    I_EXP_COMPLETED = 9
    I_FINAL = 10
    I_EXP_FINAL = 11
    I_INIT_FEMTO_COMPLETED = 12
    I_HIST_CLAMPED = 13


cdef inline double _nd(bitgen_t *rng) nogil:
    return rng.next_double(rng.state)


cdef inline double _std_normal(bitgen_t *rng) nogil:
    cdef double u1 = _nd(rng)
    cdef double u2 = _nd(rng)
    return sqrt(-2.0 * log1p(-u1)) * cos(TWO_PI * u2)


cdef inline double _gamma_std_ge1(bitgen_t *rng, double shape) nogil:
    # Marsaglia-Tsang squeeze method, valid for shape >= 1
    cdef double d = shape - 1.0 / 3.0
    cdef double c = 1.0 / sqrt(9.0 * d)
    cdef double x, t, v, u, x2
    while True:
        x = _std_normal(rng)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = _nd(rng)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if log(u) < 0.5 * x2 + d * (1.0 - v + log(v)):
            return d * v


cdef inline double _gamma_std(bitgen_t *rng, double shape) nogil:
    cdef double y, w
    if shape < 1.0:
        y = _gamma_std_ge1(rng, shape + 1.0)
        w = 1.0 - _nd(rng)
        return y * pow(w, 1.0 / shape)
    return _gamma_std_ge1(rng, shape)


cdef inline double _draw(bitgen_t *rng, bint is_exp, double shape, double rate) nogil:
    if is_exp:
        return -log1p(-_nd(rng)) / rate
    return _gamma_std(rng, shape) / rate


cdef inline double _draw_residual(bitgen_t *rng, bint is_exp, double shape, double rate) nogil:
    cdef double k = 1.0 if is_exp else shape
    cdef double x = _gamma_std_ge1(rng, k + 1.0) / rate
    return _nd(rng) * x


cdef bitgen_t *_get_bitgen(bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def run_sessions(bit_generator, double eta_s, double eta_o, double pr_case1,
                 bint m_exp, double m_shape, double m_rate,
                 bint f_exp, double f_shape, double f_rate,
                 Py_ssize_t n, bint flowchart,
                 double[::1] acc_f, int64_t[::1] acc_i, int64_t[:, ::1] hist,
                 record=None):
    """Run ``n`` sessions off one bit generator, accumulating in place."""
    cdef bitgen_t *rng = _get_bitgen(bit_generator)
    cdef Py_ssize_t hist_len = hist.shape[1]

    cdef int64_t[::1] rec_nb = None
    cdef int64_t[::1] rec_nt = None
    cdef int64_t[::1] rec_ncross = None
    cdef double[::1] rec_tb = None
    cdef double[::1] rec_tt = None
    cdef double[::1] rec_ts = None
    cdef signed char[::1] rec_start = None
    cdef bint recording = record is not None
    if recording:
        rec_nb = record["nb"]
        rec_nt = record["nt"]
        rec_ncross = record["ncross"]
        rec_tb = record["tb"]
        rec_tt = record["tt"]
        rec_ts = record["ts"]
        rec_start = record["start_macro"]

    cdef Py_ssize_t i, bucket
    cdef bint start_macro, in_femto, entered
    cdef double t_s, r, elapsed, remaining, tb, tt, t_o
    cdef double sum_len_completed, sum_off_exp_completed
    cdef double age_final, off_exp_final, init_len
    cdef int64_t ncross, nt
    cdef int64_t n_completed, n_exp_completed, n_final, n_exp_final, init_completed

    with nogil:
        for i in range(n):
            start_macro = _nd(rng) < pr_case1
            t_s = -log1p(-_nd(rng)) / eta_s
            in_femto = not start_macro
            if in_femto:
                r = _draw_residual(rng, f_exp, f_shape, f_rate)
            else:
                r = _draw_residual(rng, m_exp, m_shape, m_rate)

            elapsed = 0.0
            ncross = 0
            nt = 0
            tb = 0.0
            tt = 0.0
            entered = False
            t_o = 0.0
            n_completed = 0
            n_exp_completed = 0
            n_final = 0
            n_exp_final = 0
            init_completed = 0
            sum_len_completed = 0.0
            sum_off_exp_completed = 0.0
            age_final = 0.0
            off_exp_final = 0.0
            init_len = 0.0

            while True:
                remaining = t_s - elapsed
                if r < remaining:
                    if in_femto:
                        tb += r
                        if not entered:
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
                        t_o = -log1p(-_nd(rng)) / eta_o
                        r = _draw(rng, f_exp, f_shape, f_rate)
                        entered = True
                    else:
                        r = _draw(rng, m_exp, m_shape, m_rate)
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

            acc_f[F_NB] += ncross
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

            if recording:
                rec_nb[i] = ncross
                rec_nt[i] = nt
                rec_ncross[i] = ncross
                rec_tb[i] = tb
                rec_tt[i] = tt
                rec_ts[i] = t_s
                rec_start[i] = start_macro


def sample_many(bit_generator, bint is_exp, double shape, double rate,
                bint residual, double[::1] out):
    """Fill ``out`` with draws from one law (residual=True for equilibrium)."""
    cdef bitgen_t *rng = _get_bitgen(bit_generator)
    cdef Py_ssize_t i, n = out.shape[0]
    with nogil:
        if residual:
            for i in range(n):
                out[i] = _draw_residual(rng, is_exp, shape, rate)
        else:
            for i in range(n):
                out[i] = _draw(rng, is_exp, shape, rate)
