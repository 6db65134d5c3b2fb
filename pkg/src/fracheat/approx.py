"""Explicit approximate eigenfunctions built from the half-line profile.

The half-line eigenfunction with frequency alpha is

    F_alpha(x) = sin(alpha x + (1 - s) pi / 4) - G(alpha x),   x > 0,

where G is the Laplace transform of a positive density gamma.  Two
reflected copies, blended by the C^1 cutoff q, give rho_k on (-1, 1).

gamma(y) contains exp(E(y)) with E an integral over r in (0, inf) whose
integrand has a logarithmic singularity at r = 1/y.  Substituting r = e^-u
turns E into a convolution of log((1 - z^2s)/(1 - z^2)), z = e^u, with a
sech kernel, which the trapezoid rule integrates to near machine
precision.  An adaptive scipy scheme split at r = 1/y is kept as an
independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .spectral import check_order, mu

__all__ = [
    "q_profile",
    "gamma_density",
    "gamma_density_quad",
    "laplace_G",
    "laplace_G_adaptive",
    "F_alpha",
    "rho",
    "rho_matrix",
    "ApproxEigenfunction",
    "QuadratureError",
]


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


def q_profile(x):
    """C^1 cutoff: 0 left of -1/3, 1 right of 1/3, quadratic pieces between."""
    x = np.asarray(x, dtype=float)
    out = np.where(
        x < -1 / 3, 0.0,
        np.where(x < 0.0, 4.5 * (x + 1 / 3) ** 2,
                 np.where(x < 1 / 3, 1.0 - 4.5 * (x - 1 / 3) ** 2, 1.0)))
    return float(out) if out.ndim == 0 else out


def _log_ratio(L, s):
    """log((1 - z^2s) / (1 - z^2)) at z = e^L, stable through z = 1."""
    with np.errstate(all="ignore"):
        r = np.expm1(2 * s * L) / np.expm1(2 * L)
    small = np.abs(L) < 1e-8
    if np.any(small):
        r = np.where(small, s * (1.0 + (s - 1.0) * L), r)
    return np.log(r)


def _exponent(v, s, du: float = 0.05, span: float = 45.0):
    """E at y = e^v via the sech-kernel trapezoid rule."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    k = np.arange(-int(span / du), int(span / du) + 1) * du
    kern = du / (np.pi * 2.0 * np.cosh(k))
    out = np.empty(v.size)
    step = max(1, 400_000 // k.size)
    for a in range(0, v.size, step):
        u = v[a:a + step, None] + k[None, :]
        out[a:a + step] = _log_ratio(u, s) @ kern
    return out


def _prefactor(y, s):
    y2 = y ** (2 * s)
    return (np.sqrt(4 * s) * np.sin(s * np.pi) / (2 * np.pi)
            * y2 / (1.0 + y2 * y2 - 2.0 * y2 * np.cos(s * np.pi)))


def gamma_density(y, s: float):
    """Density gamma(y) >= 0 whose Laplace transform is G."""
    s = check_order(s)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise ValueError("gamma_density needs y > 0")
    yy = np.atleast_1d(y)
    out = _prefactor(yy, s) * np.exp(_exponent(np.log(yy), s))
    return float(out[0]) if y.ndim == 0 else out


def gamma_density_quad(y: float, s: float, rtol: float = 1e-10) -> float:
    """gamma(y) with the inner r-integral done adaptively, split at r = 1/y."""
    s = check_order(s)
    y = float(y)
    if y <= 0.0:
        raise ValueError("gamma_density needs y > 0")

    def f(r):
        z = r * y
        return np.log((1.0 - z ** (2 * s)) / (1.0 - z * z)) / (1.0 + r * r) / np.pi

    a, ea = integrate.quad(f, 0.0, 1.0 / y, limit=200, epsrel=rtol)
    b, eb = integrate.quad(f, 1.0 / y, np.inf, limit=200, epsrel=rtol)
    err = ea + eb
    if not np.isfinite(a + b) or err > 1e-6 * max(1.0, abs(a + b)):
        raise QuadratureError("inner integral of gamma did not converge", err)
    return float(_prefactor(y, s) * np.exp(a + b))


@dataclass(frozen=True)
class _LaplaceTable:
    y: np.ndarray        # log-spaced nodes
    wy: np.ndarray       # gamma(y) * y * dv
    Y: float             # truncation point
    A: float             # tail amplitude, gamma(y) ~ A y^(-1-s)
    s: float

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.size)
        step = max(1, 2_000_000 // self.y.size)
        for a in range(0, x.size, step):
            out[a:a + step] = np.exp(-np.outer(x[a:a + step], self.y)) @ self.wy
        s, Y, A = self.s, self.Y, self.A
        z = x * Y
        with np.errstate(all="ignore"):
            tail = A * x ** s * (gamma_fn(1 - s) * gammaincc(1 - s, z) - z ** (-s) * np.exp(-z)) / (-s)
        tail = np.where(x > 0.0, tail, A * Y ** (-s) / s)
        return out + tail


@lru_cache(maxsize=16)
def _laplace_table(s: float) -> _LaplaceTable:
    dv = 0.02
    vmin = -40.0 / (1.0 + 2.0 * s)
    vmax = max(30.0, 16.0 / s)
    v = np.arange(vmin, vmax + dv / 2, dv)
    y = np.exp(v)
    g = _prefactor(y, s) * np.exp(_exponent(v, s))
    Y = float(y[-1])
    A = float(g[-1] * Y ** (1 + s))
    w = g * y * dv
    w[0] *= 0.5
    w[-1] *= 0.5
    for a in (y, w):
        a.flags.writeable = False
    return _LaplaceTable(y, w, Y, A, s)


def laplace_G(x, s: float):
    """G(x) = int_0^inf e^(-x y) gamma(y) dy for x >= 0 (log-space trapezoid + analytic tail)."""
    s = check_order(s)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("laplace_G needs x >= 0")
    out = _laplace_table(s)(x)
    return float(out[0]) if x.ndim == 0 else out


def laplace_G_adaptive(x: float, s: float, rtol: float = 1e-8) -> float:
    """Independent G(x): adaptive quadrature on dyadic panels with tail truncation.

    Dyadic panels cover [2^-60, 1]; panels [2^k, 2^(k+1)] are added until a panel contributes less than
    1e-14 of the running integral.  At x = 0 the density decays only like
    y^(-1-s), so the panels stop at 2^60 and a power-law tail fitted at the
    last panel closes the sum.
    """
    s = check_order(s)
    x = float(x)
    if x < 0.0:
        raise ValueError("laplace_G needs x >= 0")

    def f(y):
        return np.exp(-x * y) * gamma_density(y, s)

    # gamma vanishes like a power of y at 0: dyadic panels toward 0 as well
    total = err = 0.0
    for k in range(60, 0, -1):
        piece, e = integrate.quad(f, 2.0**-k, 2.0 ** (1 - k), epsrel=rtol, limit=200)
        total += piece
        err += e
    a = 1.0
    for _ in range(200):
        piece, e = integrate.quad(f, a, 2 * a, epsrel=rtol, limit=200)
        total += piece
        err += e
        a *= 2
        if piece < 1e-14 * total or (x == 0.0 and a >= 2.0**60):
            break
    else:
        raise QuadratureError("Laplace transform tail did not decay", err)
    if x == 0.0:
        # gamma ~ A y^(-1-s): add the remaining power-law tail
        A = gamma_density(a, s) * a ** (1 + s)
        total += A * a ** (-s) / s
    if err > 1e-6 * max(total, 1e-300):
        raise QuadratureError("Laplace transform quadrature inaccurate", err)
    return float(total)


def F_alpha(x, alpha: float, s: float):
    """Half-line profile; identically zero for x <= 0."""
    s = check_order(s)
    x = np.asarray(x, dtype=float)
    xp = np.clip(alpha * x, 0.0, None)
    val = np.sin(xp + (1 - s) * np.pi / 4) - laplace_G(np.atleast_1d(xp).ravel(), s).reshape(np.shape(xp))
    out = np.where(x > 0.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def rho(k: int, x, s: float):
    """Approximate k-th eigenfunction on R; exactly zero for |x| >= 1."""
    k = int(k)
    if k < 1:
        raise ValueError("index must be >= 1")
    m = mu(k, s)
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    xi = x[inside] if x.ndim else (x if inside else np.array([]))
    xi = np.atleast_1d(xi)
    left = q_profile(-xi) * F_alpha(1.0 + xi, m, s)
    right = q_profile(xi) * F_alpha(1.0 - xi, m, s)
    vals = left - (-1) ** k * right
    out = np.zeros(np.shape(x))
    if x.ndim:
        out[inside] = vals
        return out
    return float(vals[0]) if inside else 0.0


def rho_matrix(ks, x, s: float) -> np.ndarray:
    """rho_k(x) for several k; shape (len(x), len(ks))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.stack([rho(int(k), x, s) for k in np.atleast_1d(ks)], axis=1)


@dataclass(frozen=True)
class ApproxEigenfunction:
    k: int
    s: float
    mu: float

    @classmethod
    def build(cls, k: int, s: float) -> "ApproxEigenfunction":
        s = check_order(s)
        return cls(int(k), s, mu(k, s))

    def __call__(self, x):
        return rho(self.k, x, self.s)
