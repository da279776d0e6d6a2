"""Pure numpy implementations of the hot kernels.

Same signatures and algorithms as the compiled module; used when the
extension is unavailable or when ``SPECINIT_PURE_PYTHON`` is set.
"""
import math

import numpy as np

_CHUNK = 2048


def atom_moments(z, w, ws2, lams):
    """Rows [m1..m6] of weighted z-atom sums at each lambda."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    ws2 = np.asarray(ws2, dtype=float)
    lams = np.asarray(lams, dtype=float)
    out = np.empty((lams.size, 6))
    keep = z != 0.0
    z, w, ws2 = z[keep], w[keep], ws2[keep]
    for i in range(0, lams.size, _CHUNK):
        lam = lams[i:i + _CHUNK, None]
        r = z / (lam - z)
        r2 = r * r
        out[i:i + _CHUNK, 0] = r @ w
        out[i:i + _CHUNK, 1] = r @ ws2
        out[i:i + _CHUNK, 2] = (r2 / z) @ w
        out[i:i + _CHUNK, 3] = r2 @ w
        out[i:i + _CHUNK, 4] = r2 @ ws2
        out[i:i + _CHUNK, 5] = (r * z) @ ws2
    return out


def secular_sum(p, q2, lam):
    """R = sum q2/(p - lam) and R' = sum q2/(p - lam)^2."""
    inv = 1.0 / (np.asarray(p, dtype=float) - lam)
    t = np.asarray(q2, dtype=float) * inv
    return float(t.sum()), float((t * inv).sum())


def _g(p, w, lam):
    return float(np.sum(w / (lam - p))) - 1.0


def secular_top(p, w):
    """Largest root of sum w/(lam - p) = 1 over entries with w > 0."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    act = w > 0.0
    if not act.any():
        raise ValueError("secular equation needs a positive weight")
    p, w = p[act], w[act]
    lo = float(np.max(p + w))
    hi = float(np.max(p) + np.sum(w))
    if hi <= lo:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _g(p, w, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def secular_roots(p, w):
    """All roots of sum w/(lam - p) = 1 for strictly increasing p and w > 0."""
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    k = p.size
    out = np.empty(k)
    for j in range(k - 1):
        lo, hi = p[j], p[j + 1]
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _g(p, w, mid) > 0.0:
                lo = mid
            else:
                hi = mid
        out[j] = 0.5 * (lo + hi)
    out[k - 1] = secular_top(p, w)
    return out


def _L(p, q2, pmax, mu):
    return max(secular_top(p, mu * q2), pmax)


def arrowhead_fixed_point(a, p, q2):
    """Solve L(mu) = a + 1/mu, L(mu) = max(R^-1(-1/mu), max p); returns (mu, L(mu))."""
    p = np.asarray(p, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    pmax = float(np.max(p))

    def f(mu):
        return _L(p, q2, pmax, mu) - a - 1.0 / mu

    lo = hi = 1.0
    while f(lo) > 0.0:
        lo *= 0.5
    while f(hi) < 0.0:
        hi *= 2.0
    while True:
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    mu = math.sqrt(lo * hi)
    return mu, _L(p, q2, pmax, mu)
