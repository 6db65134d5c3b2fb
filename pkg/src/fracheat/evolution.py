"""Modal solvers for the controlled fractional heat equation on (-1, 1).

States are coefficient vectors in the eigenbasis.  Controls are separable,
g(x, t) = sum_j c_j(t) p_j(x) on an exterior region O, where each time
coefficient is a piecewise polynomial times a fixed exponential,

    c_j(t) = exp(-beta_j (T - t)) * sum_p a_{k,j,p} (t - t_k)^p   on [t_k, t_{k+1}],

so the Duhamel integrals have closed forms in incomplete gamma functions.
A mode responds to the control through (g(., t), N_s phi_n)_O, entering
with a minus sign:

    u_n(t) = u_n(t0) e^{-lambda_n (t - t0)}
             - int_{t0}^{t} (g(., tau), N_s phi_n)_O e^{-lambda_n (t - tau)} dtau.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb, factorial
from typing import Callable

import numpy as np
from scipy.special import gammainc

from .quadrature import gauss_jacobi, gauss_legendre
from .regions import ExteriorRegion
from .spectral import (
    Grid,
    SpectralBasis,
    check_order,
    eigenvalue_asymptotic,
    jacobi_eigen_symbol,
    jacobi_table,
    normalization_constant,
)
from .nonlocal_ops import ExteriorProfile, SampledFunction, _exterior_kernel_integral

__all__ = [
    "ModalState",
    "TimeGrid",
    "ControlSignal",
    "DualTrace",
    "trace_projection",
    "solve_forward",
    "solve_dual",
    "dual_normal_trace",
    "solve_dirichlet",
    "duality_residual",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class ModalState:
    """Coefficients (u(., t), phi_n) of a state at time t."""

    t: float
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("modal coefficients must be finite")
        if not np.isfinite(self.t):
            raise ValueError("time must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "t", float(self.t))

    @property
    def size(self) -> int:
        return int(self.coefficients.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    @classmethod
    def mode(cls, n: int, N: int, t: float = 0.0) -> "ModalState":
        c = np.zeros(N)
        c[n - 1] = 1.0
        return cls(t, c)


@dataclass(frozen=True)
class TimeGrid:
    """Breakpoints 0 = t_0 < t_1 < ... < t_M = T."""

    breakpoints: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).reshape(-1)
        if b.size < 2 or b[0] != 0.0 or not np.all(np.diff(b) > 0.0) or not np.isfinite(b[-1]):
            raise ValueError("time grid must increase strictly from 0 to a finite horizon")
        b.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)

    @classmethod
    def uniform(cls, T: float, segments: int = 1) -> "TimeGrid":
        if not T > 0.0:
            raise ValueError("horizon must be positive")
        b = np.linspace(0.0, T, int(segments) + 1)
        b[-1] = T
        return cls(b)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def segments(self) -> int:
        return int(self.breakpoints.size - 1)


@dataclass(frozen=True)
class ControlSignal:
    """Separable exterior control on ``region`` over a time grid.

    ``profiles(x)`` returns an array of shape (len(x), J) for points of O.
    ``coefficients`` has shape (segments, J, degree + 1) and holds the
    polynomial coefficients in powers of (t - t_k); ``rates`` holds beta_j.
    ``projection`` optionally caches (p_j, N_s phi_n)_O as a (J, N) array;
    it must then come from the same basis the signal is used with.
    """

    region: ExteriorRegion
    profiles: Callable
    time_grid: TimeGrid
    coefficients: np.ndarray
    rates: np.ndarray | None = None
    projection: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.array(self.coefficients, dtype=float)
        if a.ndim != 3 or a.shape[0] != self.time_grid.segments:
            raise ValueError("coefficients must have shape (segments, J, degree + 1)")
        J = a.shape[1]
        r = np.zeros(J) if self.rates is None else np.array(self.rates, dtype=float).reshape(-1)
        if r.size != J or np.any(r < 0.0):
            raise ValueError("need one non-negative rate per profile")
        for arr in (a, r):
            arr.flags.writeable = False
        object.__setattr__(self, "coefficients", a)
        object.__setattr__(self, "rates", r)
        if self.projection is not None:
            p = np.array(self.projection, dtype=float)
            if p.ndim != 2 or p.shape[0] != J:
                raise ValueError("projection must have shape (J, N)")
            p.flags.writeable = False
            object.__setattr__(self, "projection", p)

    @property
    def n_profiles(self) -> int:
        return int(self.coefficients.shape[1])

    @property
    def T(self) -> float:
        return self.time_grid.T

    def scaled(self, c: float) -> "ControlSignal":
        return ControlSignal(self.region, self.profiles, self.time_grid, c * self.coefficients,
                             self.rates, self.projection)

    def time_coefficients(self, t) -> np.ndarray:
        """c_j(t), shape (len(t), J); zero outside [0, T]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        b = self.time_grid.breakpoints
        out = np.zeros((t.size, self.n_profiles))
        inside = (t >= 0.0) & (t <= self.T)
        k = np.clip(np.searchsorted(b, t[inside], side="right") - 1, 0, b.size - 2)
        tau = t[inside] - b[k]
        a = self.coefficients[k]                          # (m, J, P+1)
        powers = tau[:, None] ** np.arange(a.shape[2])    # (m, P+1)
        poly = np.einsum("mjp,mp->mj", a, powers)
        out[inside] = poly * np.exp(-self.rates[None, :] * (self.T - t[inside, None]))
        return out

    def __call__(self, x, t) -> np.ndarray:
        """g(x, t) on the outer product of points x and times t, shape (len(x), len(t))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.zeros((x.size, self.n_profiles))
        m = self.region.contains(x)
        if np.any(m):
            vals[m] = np.asarray(self.profiles(x[m]), dtype=float).reshape(m.sum(), -1)
        return vals @ self.time_coefficients(t).T

    def projection_for(self, basis) -> np.ndarray:
        if self.projection is not None:
            count = basis.count if isinstance(basis, SpectralBasis) else np.size(basis)
            if self.projection.shape[1] != count:
                raise ValueError("control projection does not match the basis size")
            return self.projection
        return trace_projection(self.profiles, self.region, basis)


def trace_projection(profiles: Callable, region: ExteriorRegion, basis: SpectralBasis,
                     n: int = 16) -> np.ndarray:
    """(p_j, N_s phi_n)_{L2(O)} as a (J, N) array."""
    s = basis.s
    if region.touches_boundary() and s >= 0.5:
        raise ValueError("N_s phi is not square integrable up to +-1 when s >= 1/2")
    x, w = region.rule(n=n, edge_power=-s, decay=2.0 + 2.0 * s)
    P = np.asarray(profiles(x), dtype=float).reshape(x.size, -1)
    return (P * w[:, None]).T @ basis.trace(x)


# ------------------------------------------------------------- moments

def _tail_moments(a: np.ndarray, width: float, pmax: int) -> np.ndarray:
    """m_i = int_0^width r^i e^{-a r} dr for i = 0..pmax, elementwise in a >= 0."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape + (pmax + 1,))
    small = a * width < 1e-300
    for i in range(pmax + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = factorial(i) * gammainc(i + 1, a * width) / a ** (i + 1)
        out[..., i] = np.where(small, width ** (i + 1) / (i + 1), v)
    return out


def _segment_moments(signal: ControlSignal, lam: np.ndarray, t0: float, t: float) -> np.ndarray:
    """E_{jn} = int_{t0}^{t} c_j(tau) e^{-lambda_n (t - tau)} dtau."""
    b = signal.time_grid.breakpoints
    T = signal.T
    J = signal.n_profiles
    P = signal.coefficients.shape[2] - 1
    beta = signal.rates
    E = np.zeros((J, lam.size))
    hi_t = min(t, T)
    for k in range(b.size - 1):
        lo, hi = max(b[k], t0), min(b[k + 1], hi_t)
        if hi <= lo:
            continue
        width = hi - lo
        A = beta[:, None] + lam[None, :]                   # total decay rate
        # integrand in r = hi - tau: (hi - r - t_k)^p e^{-A r} times the scale below
        scale = np.exp(-lam[None, :] * (t - hi) - beta[:, None] * (T - hi))
        m = _tail_moments(A, width, P)                     # (J, N, P+1)
        d = hi - b[k]
        for p in range(P + 1):
            acc = np.zeros_like(A)
            for i in range(p + 1):
                acc += comb(p, i) * d ** (p - i) * (-1.0) ** i * m[..., i]
            E += signal.coefficients[k, :, p][:, None] * scale * acc
    return E


def _check_basis(state: ModalState, basis) -> np.ndarray:
    """Eigenvalues of ``basis`` (a SpectralBasis or a bare eigenvalue array)."""
    lam = basis.eigenvalues if isinstance(basis, SpectralBasis) else np.asarray(basis, dtype=float)
    if state.size != lam.size:
        raise ValueError(f"state has {state.size} modes, basis has {lam.size}")
    return lam


# ------------------------------------------------------------- solvers

def solve_forward(u0: ModalState, g: ControlSignal | None, basis, t: float) -> ModalState:
    """State at time t from the state ``u0`` at time u0.t under control g.

    ``basis`` may be a bare eigenvalue array when g is None or carries its
    projection.
    """
    lam = _check_basis(u0, basis)
    t = float(t)
    if t < u0.t:
        raise ValueError("cannot evolve backwards in time")
    if g is not None and t > g.T:
        raise ValueError("time lies beyond the control horizon")
    out = u0.coefficients * np.exp(-lam * (t - u0.t))
    if g is not None:
        E = _segment_moments(g, lam, u0.t, t)
        out = out - np.sum(E * g.projection_for(basis), axis=0)
    return ModalState(t, out)


def solve_dual(psi0: ModalState, basis, t: float) -> ModalState:
    """Backward dual state psi(t) from the terminal datum psi0 given at time psi0.t = T."""
    lam = _check_basis(psi0, basis)
    T = psi0.t
    if not 0.0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    return ModalState(t, psi0.coefficients * np.exp(-lam * (T - t)))


@dataclass(frozen=True)
class DualTrace:
    """N_s psi(x, t) with an estimate of the truncated series tail."""

    values: np.ndarray
    remainder: float
    tolerance: float

    @property
    def within_tolerance(self) -> bool:
        return self.remainder <= self.tolerance


def dual_normal_trace(psi0: ModalState, basis: SpectralBasis, t: float, x, *,
                      tolerance: float = 1e-8, tail_terms: int = 2000) -> DualTrace:
    """sum_n psi0_n e^{-lambda_n (T - t)} N_s phi_n(x) for t < T.

    The tail beyond the basis is estimated by max|psi0| |N_s phi_N(x)| times
    sum_{n > N} e^{-lambda_asym(n) (T - t)}.
    """
    lam = _check_basis(psi0, basis)
    T = psi0.t
    t = float(t)
    if not 0.0 <= t < T:
        raise ValueError("the normal trace of the dual state is only defined for 0 <= t < T")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tr = basis.trace(x)
    decay = np.exp(-lam * (T - t))
    vals = tr @ (psi0.coefficients * decay)
    N = basis.count
    n = np.arange(N + 1, N + 1 + tail_terms)
    tail = float(np.sum(np.exp(-eigenvalue_asymptotic(n, basis.s) * (T - t))))
    scale = float(np.max(np.abs(psi0.coefficients), initial=0.0) * np.max(np.abs(tr[:, -1]), initial=0.0))
    return DualTrace(vals, scale * tail, tolerance)


def solve_dirichlet(g: ExteriorProfile, s: float, *, grid: Grid | int = 512,
                    degree: int = 96) -> SampledFunction:
    """Solution v of (-Laplacian)^s v = 0 in (-1, 1), v = g outside.

    Writing v = g + w with w = sum_m a_m (1 - x^2)^s P_m, the operator is
    diagonal on the weighted Jacobi functions, so a_m = b_m / lambda*_m with
    b_m = C_s int (1 - x^2)^s P_m(x) int g(y) |x - y|^(-1-2s) dy dx.
    """
    s = check_order(s)
    if isinstance(grid, (int, np.integer)):
        grid = Grid.uniform(int(grid))
    y, w = gauss_jacobi(-1.0, 1.0, degree + 40, s, s)
    h = normalization_constant(s) * np.array([_exterior_kernel_integral(g, yi, s) for yi in y])
    P = jacobi_table(y, degree, s)
    b = P.T @ (w * h)
    lam = jacobi_eigen_symbol(degree, s)
    if not np.all(lam > 0.0):
        raise np.linalg.LinAlgError("singular lifting system")
    a = b / lam
    xi = grid.interior
    vals = np.zeros(grid.nodes.size)
    vals[1:-1] = (jacobi_table(xi, degree, s) @ a) * ((1.0 - xi) * (1.0 + xi)) ** s
    return SampledFunction(grid, vals, s, "spline", g)


# ------------------------------------------------------------- duality

def _time_rule(a: float, b: float, rate: float, n: int = 24):
    """Gauss rule on [a, b] graded toward b at the scale 1/rate."""
    L = b - a
    offsets = [0.0]
    w = 0.5 / max(rate, 1e-300)
    while offsets[-1] + w < L:
        offsets.append(offsets[-1] + w)
        w *= 2.0
    offsets.append(L)
    br = b - np.array(offsets[::-1])
    br[0], br[-1] = a, b
    xs, ws = zip(*(gauss_legendre(p, q, n) for p, q in zip(br[:-1], br[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def duality_residual(u0: ModalState, g: ControlSignal | None, psi0: ModalState,
                     basis: SpectralBasis, *, relative: bool = False) -> float:
    """|(u(0), psi(0)) - (u(T), psi(T)) - int_0^T int_O g N_s psi|.

    u(T) uses the closed-form moments; the space-time integral is computed
    independently by Gauss quadrature in time of sum_j c_j(t) (p_j, N_s psi(t))_O.
    """
    lam = _check_basis(psi0, basis)
    T = psi0.t
    uT = solve_forward(u0, g, basis, T)
    a = float(u0.coefficients @ solve_dual(psi0, basis, u0.t).coefficients)
    b = float(uT.coefficients @ psi0.coefficients)
    c = 0.0
    if g is not None:
        Pm = g.projection_for(basis)                      # (J, N)
        br = g.time_grid.breakpoints
        for k in range(br.size - 1):
            lo, hi = max(br[k], u0.t), br[k + 1]
            if hi <= lo:
                continue
            rate = float(np.max(lam) + np.max(g.rates))
            tq, wq = _time_rule(lo, hi, rate)
            ct = g.time_coefficients(tq)                  # (m, J)
            psit = psi0.coefficients[None, :] * np.exp(-lam[None, :] * (T - tq[:, None]))
            c += float(wq @ np.einsum("mj,jn,mn->m", ct, Pm, psit))
    # with the control entering u with a minus sign, a - b equals +c
    res = abs(a - b - c)
    if relative:
        scale = max(abs(a), abs(b), abs(c))
        return res / scale if scale > 0.0 else res
    return res


def write_trajectory_csv(path, states, basis: SpectralBasis | None = None, x=None) -> None:
    """Rows (t, n, u_n); with ``x`` also rows (t, x, u(x, t)) in a second block."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "n", "u_n"])
        for st in states:
            for n, v in enumerate(st.coefficients, start=1):
                wr.writerow([f"{st.t:.17g}", n, f"{v:.17g}"])
        if x is not None and basis is not None:
            xs = np.sort(np.asarray(x, dtype=float))
            Phi = basis.evaluate(xs)
            wr.writerow([])
            wr.writerow(["t", "x", "u"])
            for st in states:
                vals = Phi @ st.coefficients
                for xi, v in zip(xs, vals):
                    wr.writerow([f"{st.t:.17g}", f"{xi:.17g}", f"{v:.17g}"])
