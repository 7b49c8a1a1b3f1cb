"""Pure NumPy/SciPy implementations of the hot kernels.

Fallback path for environments without numba (or with CVBIAS_NO_NUMBA=1);
signatures match ``_kernels_numba``. Linear recursions lean on
``scipy.signal.lfilter``; batched solves replace the per-index loops.
"""
import numpy as np
from scipy.signal import lfilter

BACKEND = "numpy"

LEVERAGE_LIMIT = 1.0 - 1e-10
PIVOT_RTOL = 1e-12


def ar1_path(eps, rho):
    """AR(1) recursion from a zero initial state; returns (y, mu, resid)."""
    y = lfilter([1.0], [1.0, -rho], eps)
    mu = np.empty_like(y)
    mu[0] = 0.0
    mu[1:] = rho * y[:-1]
    return y, mu, y - mu


def var_path(eps, coeffs):
    """VAR(p) recursion from a zero initial state; eps (n, k), coeffs (p, k, k)."""
    n, k = eps.shape
    p = coeffs.shape[0]
    y = np.zeros((n, k))
    mu = np.empty((n, k))
    for t in range(n):
        m = np.zeros(k)
        for l in range(min(p, t)):
            m += coeffs[l] @ y[t - 1 - l]
        mu[t] = m
        y[t] = m + eps[t]
    return y, mu, y - mu


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


def _rcond(stack):
    """Reciprocal condition numbers of a stack of square matrices."""
    s = np.linalg.svd(stack, compute_uv=False)
    smax = s[..., 0]
    smin = s[..., -1]
    out = np.zeros_like(smax)
    np.divide(smin, smax, out=out, where=smax > 0)
    return out


def accumulate_rep(acc, mu_cv, eps_cv, mu_t, eps_t, mu_hat, mask):
    """Fold one replication into the per-index accumulators (see numba twin)."""
    m = mask
    prod = np.zeros_like(mu_cv)
    err = np.zeros_like(mu_cv)
    prod[m] = mu_cv[m] * eps_t[m]
    err[m] = mu_cv[m] - mu_t[m]
    acc[0] += prod
    acc[1] += prod * prod
    acc[2] += err
    acc[3] += err * err
    n = int(m.sum())
    lt = m.copy()
    lt[-1] = False
    nl = int(lt.sum())
    pooled_lt = prod[lt].sum() / nl if nl else np.nan
    return (
        prod[m].sum() / n,
        pooled_lt,
        (err[m] ** 2).sum() / n,
        ((mu_t[m] - mu_hat[m]) ** 2).sum() / n,
        (eps_cv[m] ** 2).sum() / n,
    )


def loo_arrays(x, y, gram_inv, beta):
    """Leave-one-out predictions via the rank-one downdate of the full fit."""
    u = x @ gram_inv
    h = np.einsum("tp,tp->t", u, x)
    mu_full = x @ beta
    degenerate = h >= LEVERAGE_LIMIT
    r = y - mu_full
    denom = np.where(degenerate, 1.0, 1.0 - h)
    mu = mu_full - h * r / denom
    eps = y - mu
    bad = -1
    if degenerate.any():
        bad = int(np.argmax(degenerate))
        mu[degenerate] = np.nan
        eps[degenerate] = np.nan
    return mu, eps, h, bad


def _prefix_sums(x, y):
    outer = x[:, :, None] * x[:, None, :]
    pref = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(outer, axis=0)])
    xy = x * y[:, None]
    prefb = np.concatenate([np.zeros((1, x.shape[1])), np.cumsum(xy, axis=0)])
    return pref, prefb


def hblock_arrays(x, y, gram, xty, h):
    """Blocked leave-out predictions: training for index i excludes |j - i| <= h."""
    T, p = x.shape
    pref, prefb = _prefix_sums(x, y)
    idx = np.arange(T)
    lo = np.maximum(idx - h, 0)
    hi = np.minimum(idx + h + 1, T)
    a = gram[None, :, :] - (pref[hi] - pref[lo])
    b = xty[None, :] - (prefb[hi] - prefb[lo])
    rc = _rcond(a)
    singular = ~(rc > PIVOT_RTOL)
    if singular.any():
        mu = np.empty(T)
        eps = np.empty(T)
        return mu, eps, int(np.argmax(singular))
    beta = np.linalg.solve(a, b[..., None])[..., 0]
    mu = np.einsum("tp,tp->t", x, beta)
    eps = y - mu
    return mu, eps, -1


def expanding_arrays(x, y, start, horizon):
    """Expanding-window predictions: index i is predicted from rows 0 .. i-horizon."""
    T, p = x.shape
    mu = np.full(T, np.nan)
    eps = np.full(T, np.nan)
    if start >= T:
        return mu, eps, -1
    pref, prefb = _prefix_sums(x, y)
    test = np.arange(start, T)
    ntrain = test - horizon + 1
    a = pref[ntrain]
    b = prefb[ntrain]
    rc = _rcond(a)
    singular = ~(rc > PIVOT_RTOL)
    if singular.any():
        return mu, eps, int(test[np.argmax(singular)])
    beta = np.linalg.solve(a, b[..., None])[..., 0]
    mu[test] = np.einsum("tp,tp->t", x[test], beta)
    eps[test] = y[test] - mu[test]
    return mu, eps, -1
