# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_fallback`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef enum:
    BLOCK = 64  # byte columns per histogram block; 64 x 256 counters stay in cache


def column_counts(const cnp.uint8_t[:, ::1] packed, Py_ssize_t d):
    cdef Py_ssize_t n = packed.shape[0]
    cdef Py_ssize_t nbytes = packed.shape[1]
    cdef Py_ssize_t i, k, k0, k1, v, bit, col
    cdef cnp.int64_t hist[BLOCK][256]
    counts_arr = np.zeros(d, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef unsigned int byte
    if n < 64:
        # Too few rows to amortise clearing and scanning the histogram.
        with nogil:
            for i in range(n):
                for k in range(d // 8):
                    byte = packed[i, k]
                    for bit in range(8):
                        counts[8 * k + bit] += (byte >> bit) & 1
                for col in range(8 * (d // 8), d):
                    counts[col] += (packed[i, col // 8] >> (col % 8)) & 1
        return counts_arr
    with nogil:
        k0 = 0
        while k0 < nbytes:
            k1 = min(k0 + BLOCK, nbytes)
            for k in range(k1 - k0):
                for v in range(256):
                    hist[k][v] = 0
            for i in range(n):
                for k in range(k0, k1):
                    hist[k - k0][packed[i, k]] += 1
            for k in range(k0, k1):
                for v in range(1, 256):
                    if hist[k - k0][v] == 0:
                        continue
                    for bit in range(8):
                        col = 8 * k + bit
                        if col < d and (v >> bit) & 1:
                            counts[col] += hist[k - k0][v]
            k0 = k1
    return counts_arr


def sv_scan(const double[::1] values, const double[::1] test_noise,
            const double[::1] threshold_noise, const double[::1] answer_noise,
            double threshold, Py_ssize_t used):
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t cap = threshold_noise.shape[0]
    cdef Py_ssize_t j
    cdef double a
    answers_arr = np.zeros(m, dtype=np.float64)
    flagged_arr = np.zeros(m, dtype=np.uint8)
    cdef double[::1] answers = answers_arr
    cdef cnp.uint8_t[::1] flagged = flagged_arr
    with nogil:
        for j in range(m):
            if used >= cap:
                break
            if fabs(values[j]) + test_noise[j] > threshold + threshold_noise[used]:
                a = values[j] + answer_noise[used]
                if a > 1.0:
                    a = 1.0
                elif a < -1.0:
                    a = -1.0
                answers[j] = a
                flagged[j] = 1
                used += 1
    return answers_arr, flagged_arr.view(np.bool_), used


cdef inline void _neumaier(double* s, double* comp, double term) noexcept nogil:
    cdef double t = s[0] + term
    if fabs(s[0]) >= fabs(term):
        comp[0] += (s[0] - t) + term
    else:
        comp[0] += (term - t) + s[0]
    s[0] = t


def masked_row_sums(const cnp.uint8_t[:, ::1] packed, const double[::1] w):
    cdef Py_ssize_t n = packed.shape[0]
    cdef Py_ssize_t d = w.shape[0]
    cdef Py_ssize_t full = d // 8
    cdef Py_ssize_t i, k, bit, col
    cdef unsigned int byte
    cdef double s[4]
    cdef double comp[4]
    cdef double total, total_comp
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            for bit in range(4):
                s[bit] = 0.0
                comp[bit] = 0.0
            # Branch-free: unset bits add an exact 0. Four accumulators break the dependency chain.
            for k in range(full):
                byte = packed[i, k]
                if byte == 0:
                    continue
                col = 8 * k
                _neumaier(&s[0], &comp[0], w[col] * (byte & 1))
                _neumaier(&s[1], &comp[1], w[col + 1] * ((byte >> 1) & 1))
                _neumaier(&s[2], &comp[2], w[col + 2] * ((byte >> 2) & 1))
                _neumaier(&s[3], &comp[3], w[col + 3] * ((byte >> 3) & 1))
                _neumaier(&s[0], &comp[0], w[col + 4] * ((byte >> 4) & 1))
                _neumaier(&s[1], &comp[1], w[col + 5] * ((byte >> 5) & 1))
                _neumaier(&s[2], &comp[2], w[col + 6] * ((byte >> 6) & 1))
                _neumaier(&s[3], &comp[3], w[col + 7] * ((byte >> 7) & 1))
            for col in range(8 * full, d):
                if (packed[i, full] >> (col - 8 * full)) & 1:
                    _neumaier(&s[0], &comp[0], w[col])
            total = 0.0
            total_comp = 0.0
            for bit in range(4):
                _neumaier(&total, &total_comp, s[bit])
                total_comp += comp[bit]
            out[i] = total + total_comp
    return out_arr
