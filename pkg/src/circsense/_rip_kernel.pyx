# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled support enumeration for exact RIP constants (real Gram matrices)."""

import numpy as np

from libc.math cimport fabs, sqrt
from scipy.linalg.cython_lapack cimport dsyev

# Blocks up to this order use in-place Jacobi sweeps; larger ones go to LAPACK.
DEF JACOBI_MAX = 5


cdef void _jacobi_extremes(double* a, int s, double* lo, double* hi) noexcept nogil:
    # Cyclic Jacobi on a column-major s x s symmetric block (both triangles set).
    cdef int p, q, r, sweep
    cdef double off, scale, app, aqq, apq, theta, t, c, sn, tau, arp, arq
    for sweep in range(100):
        off = 0.0
        scale = 0.0
        for q in range(s):
            scale += a[q * s + q] * a[q * s + q]
            for p in range(q):
                off += a[q * s + p] * a[q * s + p]
        if off <= 1e-32 * scale or off == 0.0:
            break
        for p in range(s - 1):
            for q in range(p + 1, s):
                apq = a[q * s + p]
                if apq == 0.0:
                    continue
                app = a[p * s + p]
                aqq = a[q * s + q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                sn = t * c
                tau = sn / (1.0 + c)
                a[p * s + p] = app - t * apq
                a[q * s + q] = aqq + t * apq
                a[q * s + p] = 0.0
                a[p * s + q] = 0.0
                for r in range(s):
                    if r == p or r == q:
                        continue
                    arp = a[p * s + r]
                    arq = a[q * s + r]
                    a[p * s + r] = arp - sn * (arq + tau * arp)
                    a[q * s + r] = arq + sn * (arp - tau * arq)
                    a[r * s + p] = a[p * s + r]
                    a[r * s + q] = a[q * s + r]
    lo[0] = a[0]
    hi[0] = a[0]
    for p in range(1, s):
        if a[p * s + p] < lo[0]:
            lo[0] = a[p * s + p]
        if a[p * s + p] > hi[0]:
            hi[0] = a[p * s + p]


def enumerate_supports(const double[:, ::1] gram, int s):
    """Scan every ``s``-subset of ``range(n)`` in lexicographic order.

    Returns ``(delta, worst, sigma_min_sq, sigma_max_sq, count)`` where
    ``worst`` is the first support attaining ``delta``.
    """
    cdef int n = gram.shape[0]
    if s < 1 or s > n:
        raise ValueError("need 1 <= s <= n")
    cdef int lwork = max(1, 3 * s - 1)
    cdef int info = 0
    cdef int i, j, k
    cdef long long count = 0
    cdef double lo, hi, d
    cdef double best = -1.0
    cdef double gmin = 1e300
    cdef double gmax = -1e300
    cdef char jobz = b'N'
    cdef char uplo = b'L'

    cdef int[::1] comb = np.arange(s, dtype=np.intc)
    cdef int[::1] worst = np.arange(s, dtype=np.intc)
    cdef double[::1, :] sub = np.empty((s, s), dtype=np.float64, order="F")
    cdef double[::1] w = np.empty(s, dtype=np.float64)
    cdef double[::1] work = np.empty(lwork, dtype=np.float64)

    while True:
        if s == 1:
            lo = gram[comb[0], comb[0]]
            hi = lo
        elif s <= JACOBI_MAX:
            for j in range(s):
                for i in range(s):
                    sub[i, j] = gram[comb[i], comb[j]]
            _jacobi_extremes(&sub[0, 0], s, &lo, &hi)
        else:
            for j in range(s):
                for i in range(j, s):
                    sub[i, j] = gram[comb[i], comb[j]]
            dsyev(&jobz, &uplo, &s, &sub[0, 0], &s, &w[0], &work[0], &lwork, &info)
            if info != 0:
                raise ArithmeticError(f"dsyev failed with info={info}")
            lo = w[0]
            hi = w[s - 1]
        if lo < 0.0:
            lo = 0.0
        if hi < 0.0:
            hi = 0.0
        d = hi - 1.0
        if 1.0 - lo > d:
            d = 1.0 - lo
        if d > best:
            best = d
            for k in range(s):
                worst[k] = comb[k]
        if lo < gmin:
            gmin = lo
        if hi > gmax:
            gmax = hi
        count += 1

        i = s - 1
        while i >= 0 and comb[i] == n - s + i:
            i -= 1
        if i < 0:
            break
        comb[i] += 1
        for k in range(i + 1, s):
            comb[k] = comb[k - 1] + 1

    return best, np.asarray(worst, dtype=np.int64), gmin, gmax, count
