# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see _kernels_py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def atom_moments(const double[::1] z, const double[::1] w, const double[::1] ws2,
                 const double[::1] lams):
    cdef Py_ssize_t L = lams.shape[0], K = z.shape[0], i, k
    out = np.zeros((L, 6))
    cdef double[:, ::1] o = out
    cdef double lam, zk, r, r2, s0, s1, s2, s3, s4, s5
    with nogil:
        for i in range(L):
            lam = lams[i]
            s0 = s1 = s2 = s3 = s4 = s5 = 0.0
            for k in range(K):
                zk = z[k]
                if zk == 0.0:
                    continue
                r = zk / (lam - zk)
                r2 = r * r
                s0 += w[k] * r
                s1 += ws2[k] * r
                s2 += w[k] * r2 / zk
                s3 += w[k] * r2
                s4 += ws2[k] * r2
                s5 += ws2[k] * r * zk
            o[i, 0] = s0
            o[i, 1] = s1
            o[i, 2] = s2
            o[i, 3] = s3
            o[i, 4] = s4
            o[i, 5] = s5
    return out


def secular_sum(const double[::1] p, const double[::1] q2, double lam):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double inv, t, R = 0.0, dR = 0.0
    for i in range(n):
        inv = 1.0 / (p[i] - lam)
        t = q2[i] * inv
        R += t
        dR += t * inv
    return R, dR


cdef inline double _g(const double[::1] p, const double[::1] w, double scale,
                      double lam) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(p.shape[0]):
        if w[i] > 0.0:
            acc += w[i] / (lam - p[i])
    return scale * acc - 1.0


cdef double _top(const double[::1] p, const double[::1] w, double scale) noexcept nogil:
    cdef Py_ssize_t i
    cdef double lo = -1e308, hi, pm = -1e308, sw = 0.0, mid
    for i in range(p.shape[0]):
        if w[i] > 0.0:
            if p[i] + scale * w[i] > lo:
                lo = p[i] + scale * w[i]
            if p[i] > pm:
                pm = p[i]
            sw += w[i]
    hi = pm + scale * sw
    if hi <= lo:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _g(p, w, scale, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _positive(w):
    if not np.any(np.asarray(w) > 0.0):
        raise ValueError("secular equation needs a positive weight")


def secular_top(const double[::1] p, const double[::1] w):
    _positive(w)
    return _top(p, w, 1.0)


def secular_roots(const double[::1] p, const double[::1] w):
    cdef Py_ssize_t j, k = p.shape[0]
    _positive(w)
    out = np.empty(k)
    cdef double[::1] o = out
    cdef double lo, hi, mid
    with nogil:
        for j in range(k - 1):
            lo = p[j]
            hi = p[j + 1]
            while True:
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if _g(p, w, 1.0, mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            o[j] = 0.5 * (lo + hi)
        o[k - 1] = _top(p, w, 1.0)
    return out


cdef inline double _L(const double[::1] p, const double[::1] q2, double pmax,
                      double mu) noexcept nogil:
    cdef double r = _top(p, q2, mu)
    return r if r > pmax else pmax


def arrowhead_fixed_point(double a, const double[::1] p, const double[::1] q2):
    _positive(q2)
    cdef Py_ssize_t i
    cdef double pmax = -1e308, lo = 1.0, hi = 1.0, mid, mu
    for i in range(p.shape[0]):
        if p[i] > pmax:
            pmax = p[i]
    with nogil:
        while _L(p, q2, pmax, lo) - a - 1.0 / lo > 0.0:
            lo *= 0.5
        while _L(p, q2, pmax, hi) - a - 1.0 / hi < 0.0:
            hi *= 2.0
        while True:
            mid = sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                break
            if _L(p, q2, pmax, mid) - a - 1.0 / mid < 0.0:
                lo = mid
            else:
                hi = mid
        mu = sqrt(lo * hi)
    return mu, _L(p, q2, pmax, mu)
