"""Pure numpy implementations of the hot loops.

These are the reference versions; ``_ckernels.pyx`` mirrors every signature.
Arrays follow one convention throughout: ``psi[u, a]`` is the potential on
the word ``a·u`` (symbol ``a`` prepended to state ``u``) and ``succ[u, a]``
is the state reached, i.e. the first ``m'-1`` symbols of ``a·u``.
"""

import math

import numpy as np

# above this |xi|*A the linear-domain scaling can underflow whole rows
LOG_DOMAIN_THRESHOLD = 300.0
_CHUNK_LOG2 = 20
# plain power iteration first; shifted iteration once it is this slow
DAMP_AFTER = 100
# a bracket this tight that stopped shrinking is at the rounding floor
FLOOR = 1e-12
STALL = 50


def _apply(W, v, succ):
    # (M v)[u] = sum_a W[u, a] v[succ[u, a]], batched over the leading axis
    return np.einsum("ksa,ksa->ks", W, v[:, succ])


def _log_apply(E, lv, succ):
    terms = E + lv[succ]
    tmax = terms.max(axis=1)
    return tmax + np.log(np.exp(terms - tmax[:, None]).sum(axis=1))


def _perron_log(E, succ, tol, maxiter):
    # same bracket as the linear iteration, on log(Mv/v)
    lv = np.zeros(E.shape[0])
    lo = hi = 0.0
    best, best_it = math.inf, 0
    for it in range(1, maxiter + 1):
        new = _log_apply(E, lv, succ)
        r = new - lv
        lo, hi = r.min(), r.max()
        width = hi - lo
        if width < best:
            best, best_it = width, it
        if width <= tol or (width <= FLOOR and it - best_it >= STALL):
            return 0.5 * (lo + hi), it
        if it > DAMP_AFTER:
            new = np.logaddexp(new, hi + lv)
        lv = new - new.max()
    return math.nan, maxiter


def perron_logroot(psi, succ, xis, tol=1e-15, maxiter=100_000):
    """Log of the Perron root of M_xi for each xi.

    Power iteration from the all-ones vector, stopped on the Collatz-Wielandt
    bracket ``min(Mv/v) <= lambda <= max(Mv/v)``. After ``DAMP_AFTER`` slow
    steps the iteration switches to ``v <- Mv + c v`` with ``c`` the upper
    bracket, which removes near-periodic eigenvalues ``lambda * omega``.
    Parameters with ``|xi|*A`` above the threshold iterate in log domain.
    Entries that do not converge are NaN.

    Returns ``(log_lambda, iterations)`` arrays.
    """
    psi = np.asarray(psi, dtype=float)
    succ = np.asarray(succ, dtype=np.int64)
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    K, S = xis.size, psi.shape[0]
    out = np.empty(K)
    iters = np.zeros(K, dtype=np.int64)
    big = np.abs(xis) * np.max(np.abs(psi)) > LOG_DOMAIN_THRESHOLD
    for k in np.flatnonzero(big):
        out[k], iters[k] = _perron_log(xis[k] * psi, succ, tol, maxiter)
    lin = np.flatnonzero(~big)
    if not lin.size:
        return out, iters
    E = xis[lin, None, None] * psi[None]
    shift = E.max(axis=(1, 2))
    W = np.exp(E - shift[:, None, None])
    v = np.ones((lin.size, S))
    lo = np.zeros(lin.size)
    hi = np.full(lin.size, np.inf)
    best = np.full(lin.size, np.inf)
    best_it = np.zeros(lin.size, dtype=np.int64)
    active = np.ones(lin.size, dtype=bool)
    for it in range(1, maxiter + 1):
        idx = np.flatnonzero(active)
        y = _apply(W[idx], v[idx], succ)
        r = y / v[idx]
        lo[idx] = r.min(axis=1)
        hi[idx] = r.max(axis=1)
        width = (hi[idx] - lo[idx]) / hi[idx]
        better = width < best[idx]
        best[idx[better]] = width[better]
        best_it[idx[better]] = it
        if it > DAMP_AFTER:
            y = y + hi[idx, None] * v[idx]
        v[idx] = y / y.max(axis=1, keepdims=True)
        iters[lin[idx]] = it
        done = (width <= tol) | ((width <= FLOOR) & (it - best_it[idx] >= STALL))
        active[idx[done]] = False
        if not active.any():
            break
    out[lin] = shift + np.log(0.5 * (lo + hi))
    out[lin[active]] = np.nan
    return out, iters


def log_iterate(psi, succ, xis, glog, steps):
    """``log(M_xi^steps g)`` for each xi, with ``g = exp(glog)``.

    ``glog`` has shape ``(K, S)`` (one vector per xi) or ``(S,)``.
    """
    psi = np.asarray(psi, dtype=float)
    succ = np.asarray(succ, dtype=np.int64)
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    K, S = xis.size, psi.shape[0]
    glog = np.broadcast_to(np.asarray(glog, dtype=float), (K, S))
    out = np.empty((K, S))
    A = float(np.max(np.abs(psi)))
    big = np.abs(xis) * A > LOG_DOMAIN_THRESHOLD
    lin = np.flatnonzero(~big)
    if lin.size:
        E = xis[lin, None, None] * psi[None]
        shift = E.max(axis=(1, 2))
        W = np.exp(E - shift[:, None, None])
        gmax = glog[lin].max(axis=1)
        v = np.exp(glog[lin] - gmax[:, None])
        logscale = gmax + steps * shift
        for _ in range(steps):
            v = _apply(W, v, succ)
            vmax = v.max(axis=1)
            v /= vmax[:, None]
            logscale += np.log(vmax)
        with np.errstate(divide="ignore"):
            out[lin] = np.log(v) + logscale[:, None]
    for k in np.flatnonzero(big):
        E = xis[k] * psi
        lv = glog[k].copy()
        for _ in range(steps):
            lv = _log_apply(E, lv, succ)
        out[k] = lv
    return out


def prefix_logsumexp(table, q, m, L, n, p, coef, shift):
    """Log-sums of ``exp(coef * S_n(x)**2)`` over all words ``x`` of length ``L``, bucketed by prefix.

    ``S_n`` sums ``table`` over the ``n`` windows of length ``m`` starting at
    positions ``0..n-1``; ``L`` must be ``n + m - 1``. The result has ``q**p``
    entries indexed by the length-``p`` prefix. ``shift`` is subtracted inside
    the exponential and added back to the logs; pass an upper bound of
    ``coef * S**2``.
    """
    table = np.asarray(table, dtype=float)
    qm = q**m
    tail_max = int(_CHUNK_LOG2 / np.log2(q))
    head = min(L, max(p, L - tail_max))
    parts = [[] for _ in range(q**p)]
    for h in range(q**head):
        # digits of the head, then extend with every tail
        digits = [(h // q ** (head - 1 - i)) % q for i in range(head)]
        s = 0.0
        rid = 0
        for k, d in enumerate(digits):
            rid = (rid * q + d) % qm
            start = k - m + 1
            if 0 <= start < n:
                s += table[rid]
        S = np.full(1, s)
        R = np.full(1, rid, dtype=np.int64)
        for k in range(head, L):
            R = ((R[:, None] * q + np.arange(q)[None, :]) % qm).ravel()
            S = np.repeat(S, q)
            start = k - m + 1
            if 0 <= start < n:
                S = S + table[R]
        parts[h // q ** (head - p)].append(math.fsum(np.exp(coef * S * S - shift)))
    acc = np.array([math.fsum(v) for v in parts])
    with np.errstate(divide="ignore"):
        return np.log(acc) + shift
