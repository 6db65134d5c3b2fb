"""Hot kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``FRACHEAT_BACKEND``
(``numba`` or ``numpy``).  When the variable is unset numba is used if it
imports, otherwise numpy.  Both paths compute the same sums and differ
only in summation order; tests compare them at 1e-12 relative.
"""
from __future__ import annotations

import os

import numpy as np

_REQUESTED = os.environ.get("FRACHEAT_BACKEND", "").strip().lower()
if _REQUESTED not in ("", "numba", "numpy"):
    raise ImportError(f"FRACHEAT_BACKEND must be 'numba' or 'numpy', got {_REQUESTED!r}")

try:
    if _REQUESTED == "numpy":
        raise ImportError("numpy backend requested")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    if _REQUESTED == "numba":
        raise
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

_CHUNK = 1 << 21  # elements per temporary block in the numpy path


# ---------------------------------------------------------------- numpy path

def kernel_apply_numpy(x, y, W, p, lo, hi):
    """out[i] = sum_j |x_i - y_j|^-p W[j], skipping lo[i] <= j < hi[i]."""
    n, m = x.shape[0], y.shape[0]
    out = np.zeros((n, W.shape[1]))
    rows = max(1, _CHUNK // max(m, 1))
    cols = np.arange(m)
    for a in range(0, n, rows):
        b = min(n, a + rows)
        d = np.abs(x[a:b, None] - y[None, :])
        keep = (cols[None, :] < lo[a:b, None]) | (cols[None, :] >= hi[a:b, None])
        with np.errstate(divide="ignore"):
            K = np.where(keep, d ** (-p), 0.0)
        out[a:b] = K @ W
    return out


def pair_sum_numpy(y, w, pid, U, V, p):
    """sum over panel pairs with |pid_i - pid_j| >= 2 of
    w_i w_j |y_i - y_j|^-p (U_i - U_j)(V_i - V_j)^T."""
    n = y.shape[0]
    out = np.zeros((U.shape[1], V.shape[1]))
    rows = max(1, _CHUNK // max(n, 1))
    for a in range(0, n, rows):
        b = min(n, a + rows)
        far = np.abs(pid[a:b, None] - pid[None, :]) >= 2
        d = np.abs(y[a:b, None] - y[None, :])
        with np.errstate(divide="ignore"):
            K = np.where(far, d ** (-p), 0.0) * (w[a:b, None] * w[None, :])
        # expand (U_i - U_j)(V_i - V_j)^T into four matrix products
        Ua, Va = U[a:b], V[a:b]
        rk = K.sum(axis=1)
        ck = K.sum(axis=0)
        out += (Ua * rk[:, None]).T @ Va
        out -= Ua.T @ (K @ V)
        out -= (K @ U).T @ Va
        out += (U * ck[:, None]).T @ V
    return out


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def kernel_apply_numba(x, y, W, p, lo, hi):
        n, m, k = x.shape[0], y.shape[0], W.shape[1]
        out = np.zeros((n, k))
        for i in range(n):
            xi = x[i]
            for j in range(m):
                if j >= lo[i] and j < hi[i]:
                    continue
                kij = np.exp(-p * np.log(abs(xi - y[j])))
                for c in range(k):
                    out[i, c] += kij * W[j, c]
        return out

    @njit(cache=True, fastmath=True)
    def pair_sum_numba(y, w, pid, U, V, p):
        n = y.shape[0]
        ju, jv = U.shape[1], V.shape[1]
        out = np.zeros((ju, jv))
        du = np.empty(ju)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(pid[i] - pid[j]) < 2:
                    continue
                kij = 2.0 * w[i] * w[j] * np.exp(-p * np.log(abs(y[i] - y[j])))
                for a in range(ju):
                    du[a] = kij * (U[i, a] - U[j, a])
                for a in range(ju):
                    for b in range(jv):
                        out[a, b] += du[a] * (V[i, b] - V[j, b])
        return out


def kernel_apply(x, y, W, p, lo=None, hi=None, backend: str | None = None):
    """Apply the power kernel |x - y|^-p to the columns of ``W``."""
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    W = np.asarray(W, dtype=float)
    vec = W.ndim == 1
    W = np.ascontiguousarray(W.reshape(y.shape[0], -1))
    if lo is None:
        lo = np.zeros(x.shape[0], dtype=np.int64)
        hi = lo
    lo = np.ascontiguousarray(lo, dtype=np.int64)
    hi = np.ascontiguousarray(hi, dtype=np.int64)
    which = backend or BACKEND
    if which == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend unavailable")
        out = kernel_apply_numba(x, y, W, float(p), lo, hi)
    else:
        out = kernel_apply_numpy(x, y, W, float(p), lo, hi)
    return out[:, 0] if vec else out


def pair_sum(y, w, pid, U, V, p, backend: str | None = None):
    """Far-field part of a symmetric double integral over panel pairs."""
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    pid = np.ascontiguousarray(pid, dtype=np.int64)
    U = np.ascontiguousarray(np.asarray(U, dtype=float).reshape(y.shape[0], -1))
    V = np.ascontiguousarray(np.asarray(V, dtype=float).reshape(y.shape[0], -1))
    which = backend or BACKEND
    if which == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend unavailable")
        return pair_sum_numba(y, w, pid, U, V, float(p))
    return pair_sum_numpy(y, w, pid, U, V, float(p))
