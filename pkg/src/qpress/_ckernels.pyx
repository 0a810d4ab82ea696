# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_kernels_py``; same signatures and conventions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY, NAN

cnp.import_array()

LOG_DOMAIN_THRESHOLD = 300.0


cdef double LOG_THRESHOLD = LOG_DOMAIN_THRESHOLD
# plain power iteration first; shifted iteration once it is this slow
cdef long DAMP_AFTER = 100
# a bracket this tight that stopped shrinking is at the rounding floor
cdef double FLOOR = 1e-12
cdef long STALL = 50


cdef inline double _logsum_row(const double[:, ::1] P, const long[:, ::1] N, double xi,
                               double[::1] lv, Py_ssize_t u) noexcept nogil:
    cdef Py_ssize_t a, Q = P.shape[1]
    cdef double m = -INFINITY, t, acc = 0.0
    for a in range(Q):
        t = xi * P[u, a] + lv[N[u, a]]
        if t > m:
            m = t
    for a in range(Q):
        acc = acc + exp(xi * P[u, a] + lv[N[u, a]] - m)
    return m + log(acc)


cdef double _perron_log(const double[:, ::1] P, const long[:, ::1] N, double xi, double[::1] lv,
                        double[::1] new, double tol, long maxiter, long* iters) noexcept nogil:
    # power iteration on log vectors; the bracket is min/max of log(Mv) - log(v)
    cdef Py_ssize_t S = P.shape[0], u, it
    cdef long best_it = 0
    cdef double lo = 0.0, hi = 0.0, r, top, width, best = INFINITY, m
    for u in range(S):
        lv[u] = 0.0
    for it in range(1, maxiter + 1):
        lo = INFINITY
        hi = -INFINITY
        for u in range(S):
            new[u] = _logsum_row(P, N, xi, lv, u)
            r = new[u] - lv[u]
            if r < lo:
                lo = r
            if r > hi:
                hi = r
        iters[0] = it
        width = hi - lo
        if width < best:
            best = width
            best_it = it
        if width <= tol or (width <= FLOOR and it - best_it >= STALL):
            return 0.5 * (lo + hi)
        if it > DAMP_AFTER:
            for u in range(S):
                # log(exp(new) + exp(hi + lv))
                m = hi + lv[u]
                if new[u] > m:
                    new[u] = new[u] + log(1.0 + exp(m - new[u]))
                else:
                    new[u] = m + log(1.0 + exp(new[u] - m))
        top = -INFINITY
        for u in range(S):
            if new[u] > top:
                top = new[u]
        for u in range(S):
            lv[u] = new[u] - top
    return NAN


def perron_logroot(psi, succ, xis, double tol=1e-15, long maxiter=100_000):
    cdef const double[:, ::1] P = np.ascontiguousarray(psi, dtype=np.float64)
    cdef const long[:, ::1] N = np.ascontiguousarray(succ, dtype=np.int64)
    cdef const double[::1] X = np.ascontiguousarray(np.atleast_1d(xis), dtype=np.float64)
    cdef Py_ssize_t S = P.shape[0], Q = P.shape[1], K = X.shape[0]
    cdef Py_ssize_t k, u, a, it
    cdef long best_it
    cdef bint converged
    cdef double xi, shift, lo, hi, r, ymax, acc, width, best, A = 0.0
    out_np = np.empty(K)
    iters_np = np.zeros(K, dtype=np.int64)
    cdef double[::1] out = out_np
    cdef long[::1] iters = iters_np
    cdef double[:, ::1] W = np.empty((S, Q))
    cdef double[::1] v = np.empty(S)
    cdef double[::1] y = np.empty(S)
    with nogil:
        for u in range(S):
            for a in range(Q):
                if fabs(P[u, a]) > A:
                    A = fabs(P[u, a])
        for k in range(K):
            xi = X[k]
            if fabs(xi) * A > LOG_THRESHOLD:
                out[k] = _perron_log(P, N, xi, v, y, tol, maxiter, &iters[k])
                continue
            shift = -INFINITY
            for u in range(S):
                for a in range(Q):
                    if xi * P[u, a] > shift:
                        shift = xi * P[u, a]
            for u in range(S):
                v[u] = 1.0
                for a in range(Q):
                    W[u, a] = exp(xi * P[u, a] - shift)
            lo = 0.0
            hi = INFINITY
            best = INFINITY
            best_it = 0
            converged = False
            for it in range(1, maxiter + 1):
                lo = INFINITY
                hi = -INFINITY
                for u in range(S):
                    acc = 0.0
                    for a in range(Q):
                        acc = acc + W[u, a] * v[N[u, a]]
                    y[u] = acc
                    r = acc / v[u]
                    if r < lo:
                        lo = r
                    if r > hi:
                        hi = r
                iters[k] = it
                width = (hi - lo) / hi
                if width < best:
                    best = width
                    best_it = it
                if width <= tol or (width <= FLOOR and it - best_it >= STALL):
                    converged = True
                    break
                if it > DAMP_AFTER:
                    for u in range(S):
                        y[u] = y[u] + hi * v[u]
                ymax = 0.0
                for u in range(S):
                    if y[u] > ymax:
                        ymax = y[u]
                for u in range(S):
                    v[u] = y[u] / ymax
            if converged:
                out[k] = shift + log(0.5 * (lo + hi))
            else:
                out[k] = NAN
    return out_np, iters_np


def log_iterate(psi, succ, xis, glog, long steps):
    cdef const double[:, ::1] P = np.ascontiguousarray(psi, dtype=np.float64)
    cdef const long[:, ::1] N = np.ascontiguousarray(succ, dtype=np.int64)
    cdef const double[::1] X = np.ascontiguousarray(np.atleast_1d(xis), dtype=np.float64)
    cdef Py_ssize_t S = P.shape[0], Q = P.shape[1], K = X.shape[0]
    cdef const double[:, ::1] G = np.ascontiguousarray(
        np.broadcast_to(np.asarray(glog, dtype=np.float64), (K, S)))
    out_np = np.empty((K, S))
    cdef double[:, ::1] out = out_np
    cdef double[:, ::1] W = np.empty((S, Q))
    cdef double[::1] v = np.empty(S)
    cdef double[::1] y = np.empty(S)
    cdef Py_ssize_t k, u, a, t
    cdef double xi, shift, gmax, logscale, acc, vmax, A = 0.0
    for u in range(S):
        for a in range(Q):
            if fabs(P[u, a]) > A:
                A = fabs(P[u, a])
    with nogil:
        for k in range(K):
            xi = X[k]
            if fabs(xi) * A > LOG_THRESHOLD:
                for u in range(S):
                    v[u] = G[k, u]
                for t in range(steps):
                    for u in range(S):
                        y[u] = _logsum_row(P, N, xi, v, u)
                    for u in range(S):
                        v[u] = y[u]
                for u in range(S):
                    out[k, u] = v[u]
                continue
            shift = -INFINITY
            gmax = -INFINITY
            for u in range(S):
                if G[k, u] > gmax:
                    gmax = G[k, u]
                for a in range(Q):
                    if xi * P[u, a] > shift:
                        shift = xi * P[u, a]
            for u in range(S):
                v[u] = exp(G[k, u] - gmax)
                for a in range(Q):
                    W[u, a] = exp(xi * P[u, a] - shift)
            logscale = gmax + steps * shift
            for t in range(steps):
                vmax = 0.0
                for u in range(S):
                    acc = 0.0
                    for a in range(Q):
                        acc = acc + W[u, a] * v[N[u, a]]
                    y[u] = acc
                    if acc > vmax:
                        vmax = acc
                for u in range(S):
                    v[u] = y[u] / vmax
                logscale = logscale + log(vmax)
            for u in range(S):
                out[k, u] = log(v[u]) + logscale
    return out_np


def prefix_logsumexp(table, long q, long m, long L, long n, long p, double coef, double shift):
    cdef const double[::1] T = np.ascontiguousarray(table, dtype=np.float64)
    cdef long qm = q ** m
    cdef long qp = q ** p
    acc_np = np.zeros(qp)
    cdef double[::1] acc = acc_np
    cdef long[::1] d = np.zeros(L, dtype=np.int64)
    cdef long[::1] rid = np.zeros(L + 1, dtype=np.int64)
    cdef long[::1] pid = np.zeros(L + 1, dtype=np.int64)
    cdef double[::1] part = np.zeros(L + 1)
    cdef double[::1] comp = np.zeros(qp)
    cdef long j, k, start, b
    cdef double s, x, t
    with nogil:
        j = 0
        while True:
            # refresh running window index, prefix index and partial sums from position j
            for k in range(j, L):
                rid[k + 1] = (rid[k] * q + d[k]) % qm
                if k < p:
                    pid[k + 1] = pid[k] * q + d[k]
                else:
                    pid[k + 1] = pid[k]
                start = k - m + 1
                if start >= 0 and start < n:
                    part[k + 1] = part[k] + T[rid[k + 1]]
                else:
                    part[k + 1] = part[k]
            s = part[L]
            # Neumaier-compensated accumulation; plain sums lose ~1e-12 over 2**20 terms
            x = exp(coef * s * s - shift)
            b = pid[L]
            t = acc[b] + x
            if fabs(acc[b]) >= fabs(x):
                comp[b] += (acc[b] - t) + x
            else:
                comp[b] += (x - t) + acc[b]
            acc[b] = t
            j = L - 1
            while j >= 0 and d[j] == q - 1:
                d[j] = 0
                j -= 1
            if j < 0:
                break
            d[j] += 1
    for b in range(qp):
        acc[b] += comp[b]
    with np.errstate(divide="ignore"):
        return np.log(acc_np) + shift
