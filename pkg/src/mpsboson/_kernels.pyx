# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled two-site operator application on a dense spin-chain vector."""

from libc.stdlib cimport free, malloc

import numpy as np


def apply_two_site(const double complex[::1] psi, const double complex[:, ::1] h,
                   Py_ssize_t d, Py_ssize_t n_sites, Py_ssize_t i, Py_ssize_t j,
                   double complex[::1] out):
    """Accumulate ``h`` acting on sites ``(i, j)`` into ``out``.

    Site 0 is the most significant digit of the basis index; ``h`` is indexed
    ``h[a' d + b', a d + b]``.
    """
    if i == j:
        raise ValueError("sites must differ")
    if i > j:
        # swap the roles of the two sites inside h
        hh = np.asarray(h).reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d).copy()
        apply_two_site(psi, hh, d, n_sites, j, i, out)
        return
    cdef Py_ssize_t si = 1, sj = 1, k
    for k in range(n_sites - 1 - i):
        si *= d
    for k in range(n_sites - 1 - j):
        sj *= d
    # index = hi * (si d) + a si + mid * (sj d) + b sj + lo
    cdef Py_ssize_t n_hi = psi.shape[0] // (si * d), n_mid = si // (sj * d), n_lo = sj
    cdef Py_ssize_t dd = d * d, hi, mid, lo, a, b, p, q, base
    cdef double complex acc
    cdef double complex *buf = <double complex *> malloc(dd * sizeof(double complex))
    cdef Py_ssize_t *offs = <Py_ssize_t *> malloc(dd * sizeof(Py_ssize_t))
    if buf == NULL or offs == NULL:
        free(buf)
        free(offs)
        raise MemoryError()
    for a in range(d):
        for b in range(d):
            offs[a * d + b] = a * si + b * sj
    with nogil:
        for hi in range(n_hi):
            for mid in range(n_mid):
                for lo in range(n_lo):
                    base = hi * si * d + mid * sj * d + lo
                    for q in range(dd):
                        buf[q] = psi[base + offs[q]]
                    for p in range(dd):
                        acc = 0
                        for q in range(dd):
                            acc = acc + h[p, q] * buf[q]
                        out[base + offs[p]] += acc
    free(buf)
    free(offs)
