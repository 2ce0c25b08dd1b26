"""Truncated Taylor series arithmetic, vectorized over a leading batch axis.

A series is an array of shape ``(n, K)``; column ``j`` holds the coefficient of
``s**j`` (i.e. the j-th derivative divided by ``j!``).
"""

from __future__ import annotations

import numpy as np


def mul(a, b):
    K = a.shape[1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(K):
        out[:, k] = np.einsum("nj,nj->n", a[:, : k + 1], b[:, k::-1]) if k else a[:, 0] * b[:, 0]
    return out


def compose(f, g):
    """Series of ``f(g(s))`` where ``f`` is expanded about ``g(0)``."""
    dg = g.copy()
    dg[:, 0] = 0.0
    K = f.shape[1]
    out = np.zeros_like(dg)
    out[:, 0] = f[:, K - 1]
    for j in range(K - 2, -1, -1):
        out = mul(out, dg)
        out[:, 0] += f[:, j]
    return out


def revert(t):
    """Inverse series: given ``T(x0 + r) = T(x0) + sum_j t_j r^j`` return ``r(s)``.

    The constant term of the result is zero; ``t[:, 1]`` must be nonzero.
    """
    n, K = t.shape
    r = np.zeros((n, K))
    if K < 2:
        return r
    r[:, 1] = 1.0 / t[:, 1]
    ident = np.zeros((n, K))
    ident[:, 1] = 1.0
    for _ in range(K - 2):
        composed = compose(t, _shifted(r))
        composed[:, 0] = 0.0
        r = r - (composed - ident) * r[:, 1:2]
    return r


def _shifted(r):
    # compose() treats the constant term as the expansion point offset
    out = r.copy()
    out[:, 0] = 0.0
    return out


def exp(a):
    n, K = a.shape
    e = np.zeros((n, K))
    with np.errstate(over="ignore"):
        e[:, 0] = np.exp(a[:, 0])
    for k in range(1, K):
        j = np.arange(1, k + 1)
        e[:, k] = np.einsum("j,nj,nj->n", j, a[:, 1 : k + 1], e[:, k - 1 :: -1][:, :k]) / k
    return e


def log_abs(a):
    """Series of ``ln|a(s)|``; requires ``a[:, 0] != 0``."""
    n, K = a.shape
    out = np.zeros((n, K))
    a0 = a[:, 0]
    out[:, 0] = np.log(np.abs(a0))
    for k in range(1, K):
        acc = k * a[:, k]
        for j in range(1, k):
            acc = acc - j * out[:, j] * a[:, k - j]
        out[:, k] = acc / (k * a0)
    return out


def logsumexp(series_list):
    """Series of ``ln(sum_i exp(L_i(s)))``."""
    stack = np.stack(series_list)
    c = np.max(stack[:, :, 0], axis=0)
    c = np.where(np.isfinite(c), c, 0.0)
    total = np.zeros_like(stack[0])
    for s in stack:
        shifted = s.copy()
        shifted[:, 0] -= c
        total += exp(shifted)
    out = log_abs(total)
    out[:, 0] += c
    return out


def derivatives(series):
    """Convert Taylor coefficients to derivative values (multiply by j!)."""
    K = series.shape[1]
    fact = np.cumprod(np.r_[1.0, np.arange(1, K)])
    return series * fact
