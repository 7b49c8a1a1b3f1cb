"""Numba-compiled inner loops.

Same signatures as ``_kernels_numpy``; selected through ``cvbias._backend``.
All kernels are pure functions of their arguments and release the GIL.
"""
import numpy as np
from numba import njit

BACKEND = "numba"

# leverage at or above this makes the leave-one-out downdate degenerate
LEVERAGE_LIMIT = 1.0 - 1e-10
# relative Cholesky pivot floor for training-set Gram matrices
PIVOT_RTOL = 1e-12


@njit(cache=True, nogil=True)
def ar1_path(eps, rho):
    """AR(1) recursion from a zero initial state.

    Returns (y, mu, resid) with resid computed as y - mu so the stored
    triple satisfies the decomposition identity bit-for-bit.
    """
    n = eps.shape[0]
    y = np.empty(n)
    mu = np.empty(n)
    resid = np.empty(n)
    prev = 0.0
    for t in range(n):
        m = rho * prev
        yt = m + eps[t]
        mu[t] = m
        y[t] = yt
        resid[t] = yt - m
        prev = yt
    return y, mu, resid


@njit(cache=True, nogil=True)
def var_path(eps, coeffs):
    """VAR(p) recursion from a zero initial state.

    eps is (n, k); coeffs is (p, k, k) with coeffs[l] applied to lag l+1.
    """
    n, k = eps.shape
    p = coeffs.shape[0]
    y = np.zeros((n, k))
    mu = np.empty((n, k))
    resid = np.empty((n, k))
    for t in range(n):
        for s in range(k):
            m = 0.0
            for l in range(p):
                tl = t - 1 - l
                if tl >= 0:
                    for c in range(k):
                        m += coeffs[l, s, c] * y[tl, c]
            mu[t, s] = m
            y[t, s] = m + eps[t, s]
            resid[t, s] = y[t, s] - m
    return y, mu, resid


@njit(cache=True, nogil=True)
def arch1_errors(z, omega, alpha, s0):
    """ARCH(1) recursion: eps_t = sqrt(s_t) * z_t, s_t = omega + alpha * eps_{t-1}^2."""
    n = z.shape[0]
    eps = np.empty(n)
    s = s0
    for t in range(n):
        e = np.sqrt(s) * z[t]
        eps[t] = e
        s = omega + alpha * e * e
    return eps


@njit(cache=True, nogil=True)
def _chol_solve(a, b, beta):
    """Solve a @ beta = b for SPD a, factoring a in place.

    Returns False when a pivot falls below PIVOT_RTOL times the largest
    diagonal entry, i.e. the system is numerically singular.
    """
    p = a.shape[0]
    dmax = 0.0
    for r in range(p):
        if a[r, r] > dmax:
            dmax = a[r, r]
    floor = dmax * PIVOT_RTOL
    for c in range(p):
        d = a[c, c]
        for k in range(c):
            d -= a[c, k] * a[c, k]
        if not d > floor:
            return False
        d = np.sqrt(d)
        a[c, c] = d
        for r in range(c + 1, p):
            s = a[r, c]
            for k in range(c):
                s -= a[r, k] * a[c, k]
            a[r, c] = s / d
    for r in range(p):
        s = b[r]
        for k in range(r):
            s -= a[r, k] * beta[k]
        beta[r] = s / a[r, r]
    for r in range(p - 1, -1, -1):
        s = beta[r]
        for k in range(r + 1, p):
            s -= a[k, r] * beta[k]
        beta[r] = s / a[r, r]
    return True


@njit(cache=True, nogil=True)
def accumulate_rep(acc, mu_cv, eps_cv, mu_t, eps_t, mu_hat, mask):
    """Fold one replication into the per-index accumulators.

    acc rows: [sum prod, sum prod^2, sum err, sum err^2] where
    prod = mu_cv * eps_t and err = mu_cv - mu_t, over masked indices.
    Returns (pooled prod, pooled prod excluding the last index,
    mean err^2, mean (mu_t - mu_hat)^2, mean eps_cv^2).
    """
    T = mu_cv.shape[0]
    sp = 0.0
    spl = 0.0
    sa = 0.0
    sf = 0.0
    sc = 0.0
    n = 0
    nl = 0
    for i in range(T):
        if not mask[i]:
            continue
        p = mu_cv[i] * eps_t[i]
        e = mu_cv[i] - mu_t[i]
        acc[0, i] += p
        acc[1, i] += p * p
        acc[2, i] += e
        acc[3, i] += e * e
        sp += p
        sa += e * e
        d = mu_t[i] - mu_hat[i]
        sf += d * d
        sc += eps_cv[i] * eps_cv[i]
        n += 1
        if i < T - 1:
            spl += p
            nl += 1
    pooled_lt = spl / nl if nl > 0 else np.nan
    return sp / n, pooled_lt, sa / n, sf / n, sc / n


@njit(cache=True, nogil=True)
def loo_arrays(x, y, gram_inv, beta):
    """Leave-one-out predictions via the rank-one downdate of the full fit.

    Returns (mu, eps, h, bad): bad is the first index whose leverage
    reaches LEVERAGE_LIMIT (its mu/eps are NaN), or -1.
    """
    T, p = x.shape
    mu = np.empty(T)
    eps = np.empty(T)
    h = np.empty(T)
    bad = -1
    for i in range(T):
        hi = 0.0
        mi = 0.0
        for a in range(p):
            u = 0.0
            for b in range(p):
                u += gram_inv[a, b] * x[i, b]
            hi += x[i, a] * u
            mi += x[i, a] * beta[a]
        h[i] = hi
        if hi >= LEVERAGE_LIMIT:
            if bad < 0:
                bad = i
            mu[i] = np.nan
            eps[i] = np.nan
            continue
        r = y[i] - mi
        mu[i] = mi - hi * r / (1.0 - hi)
        eps[i] = y[i] - mu[i]
    return mu, eps, h, bad


@njit(cache=True, nogil=True)
def hblock_arrays(x, y, gram, xty, h):
    """Blocked leave-out predictions: training for index i excludes |j - i| <= h.

    Returns (mu, eps, bad) with bad the first index whose training Gram
    is numerically singular, or -1.
    """
    T, p = x.shape
    mu = np.empty(T)
    eps = np.empty(T)
    a = np.empty((p, p))
    b = np.empty(p)
    beta = np.empty(p)
    for i in range(T):
        lo = i - h
        if lo < 0:
            lo = 0
        hi = i + h + 1
        if hi > T:
            hi = T
        for r in range(p):
            for c in range(p):
                a[r, c] = gram[r, c]
            b[r] = xty[r]
        for j in range(lo, hi):
            for r in range(p):
                xjr = x[j, r]
                for c in range(p):
                    a[r, c] -= xjr * x[j, c]
                b[r] -= xjr * y[j]
        if not _chol_solve(a, b, beta):
            return mu, eps, i
        m = 0.0
        for r in range(p):
            m += x[i, r] * beta[r]
        mu[i] = m
        eps[i] = y[i] - m
    return mu, eps, -1


@njit(cache=True, nogil=True)
def expanding_arrays(x, y, start, horizon):
    """Expanding-window predictions: index i is predicted from rows 0 .. i-horizon.

    Indices before ``start`` are left NaN (insufficient history).
    Returns (mu, eps, bad) with bad as in hblock_arrays.
    """
    T, p = x.shape
    mu = np.full(T, np.nan)
    eps = np.full(T, np.nan)
    a = np.zeros((p, p))
    b = np.zeros(p)
    fac = np.empty((p, p))
    beta = np.empty(p)
    n_in = 0
    for i in range(start, T):
        need = i - horizon + 1
        while n_in < need:
            for r in range(p):
                xr = x[n_in, r]
                for c in range(p):
                    a[r, c] += xr * x[n_in, c]
                b[r] += xr * y[n_in]
            n_in += 1
        for r in range(p):
            for c in range(p):
                fac[r, c] = a[r, c]
        if not _chol_solve(fac, b, beta):
            return mu, eps, i
        m = 0.0
        for r in range(p):
            m += x[i, r] * beta[r]
        mu[i] = m
        eps[i] = y[i] - m
    return mu, eps, -1
