# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled triad accumulation: the hot loop of the quadratic form."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def triad_accumulate_cy(
    cnp.complex128_t[::1] out,
    cnp.complex128_t[::1] coeff,
    cnp.int64_t[::1] ki,
    cnp.int64_t[::1] li,
    cnp.int64_t[::1] mi,
    cnp.complex128_t[::1] w1,
    cnp.complex128_t[::1] w2,
):
    cdef Py_ssize_t t, n = coeff.shape[0]
    for t in range(n):
        out[mi[t]] = out[mi[t]] + coeff[t] * w1[ki[t]] * w2[li[t]]
    return np.asarray(out)
