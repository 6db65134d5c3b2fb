"""Dirichlet spectral data of the fractional Laplacian on (-1, 1).

Two Galerkin discretisations are provided.

* ``"jacobi"`` (default): trial functions (1 - x^2)^s P_m^(s,s)(x).  The
  fractional Laplacian maps each of them to lambda*_m P_m^(s,s) exactly, so
  the stiffness matrix is diagonal and the only quadrature is a
  Gauss-Jacobi mass matrix.  Eigenvalues converge spectrally.
* ``"p1"``: continuous piecewise-linear hats on a uniform grid.  On a uniform
  grid the stiffness matrix is Toeplitz with a closed-form symbol (fourth
  differences of |t|^(3-2s)), so assembly is exact; eigenvalues converge
  at first order in h.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import eigh, toeplitz
from scipy.special import gamma, gammaln

from .quadrature import gauss_jacobi, graded_breaks

__all__ = [
    "check_order",
    "normalization_constant",
    "eigenvalue_asymptotic",
    "mu",
    "Grid",
    "assemble_stiffness",
    "assemble_mass",
    "EigenPairs",
    "EigenSolveError",
    "eigen_solve",
    "jacobi_table",
    "jacobi_matrices",
    "SpectralBasis",
    "build_basis",
]


class EigenSolveError(RuntimeError):
    """Generalised eigensolver did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def check_order(s: float) -> float:
    s = float(s)
    if not (0.0 < s < 1.0) or not np.isfinite(s):
        raise ValueError(f"fractional order must satisfy 0 < s < 1, got {s!r}")
    return s


def normalization_constant(s: float) -> float:
    """C_s = s 4^s Gamma(s + 1/2) / (sqrt(pi) Gamma(1 - s)); symbol |xi|^(2s)."""
    s = check_order(s)
    return float(s * 4.0**s * gamma(s + 0.5) / (np.sqrt(np.pi) * gamma(1.0 - s)))


def mu(k, s: float):
    """Shifted frequencies k pi/2 - (1 - s) pi/4 of the half-line profile."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("index must be >= 1")
    out = k * (np.pi / 2.0) - (1.0 - s) * (np.pi / 4.0)
    return float(out) if out.ndim == 0 else out


def eigenvalue_asymptotic(n, s: float):
    """Leading-order eigenvalue (n pi/2 - (2 - 2s) pi/8)^(2s).

    The remainder is O(1/n) with an unquantified constant.  ``s = 1`` is
    accepted as a formula extension (classical Dirichlet eigenvalues).
    """
    s = float(s)
    if not (0.0 < s <= 1.0):
        raise ValueError(f"order must satisfy 0 < s <= 1, got {s!r}")
    n = np.asarray(n)
    if np.any(n < 1):
        raise ValueError("index must be >= 1")
    out = (n * (np.pi / 2.0) - (2.0 - 2.0 * s) * np.pi / 8.0) ** (2.0 * s)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------- grid

@dataclass(frozen=True)
class Grid:
    """Ordered nodes covering [-1, 1], endpoints included."""

    nodes: np.ndarray
    h: float = field(init=False)

    def __post_init__(self):
        x = np.array(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("grid needs at least one interior node")
        if x[0] != -1.0 or x[-1] != 1.0:
            raise ValueError("grid must start at -1 and end at 1")
        d = np.diff(x)
        if np.any(d <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        x.flags.writeable = False
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "h", float(d.max()))

    @classmethod
    def uniform(cls, n_interior: int) -> "Grid":
        n_interior = int(n_interior)
        if n_interior < 1:
            raise ValueError("need at least one interior node")
        x = np.linspace(-1.0, 1.0, n_interior + 2)
        x[0], x[-1] = -1.0, 1.0
        return cls(x)

    @property
    def n_interior(self) -> int:
        return self.nodes.size - 2

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        d = np.diff(self.nodes)
        return bool(np.all(np.abs(d - d.mean()) <= rtol * d.mean()))


# ------------------------------------------------------------ P1 assembly

def _fourth_difference_symbol(n: int, s: float) -> np.ndarray:
    k = np.arange(n, dtype=float)
    if s == 0.5:
        def f(t):
            t = np.abs(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t > 0.0, t * t * np.log(np.where(t > 0, t, 1.0)), 0.0)
    else:
        def f(t):
            return np.abs(t) ** (3.0 - 2.0 * s)
    return f(k - 2) - 4.0 * f(k - 1) + 6.0 * f(k) - 4.0 * f(k + 1) + f(k + 2)


def assemble_stiffness(grid: Grid, s: float) -> np.ndarray:
    """Galerkin matrix of the energy form over interior hat functions.

    Uses the exact Toeplitz symbol on a uniform grid: each entry is the
    form evaluated in closed form for two hats k cells apart.
    """
    s = check_order(s)
    if not grid.is_uniform():
        raise ValueError("closed-form assembly requires a uniform grid")
    n = grid.n_interior
    h = 2.0 / (n + 1)
    d4 = _fourth_difference_symbol(n, s)
    if s == 0.5:
        col = d4 / (2.0 * np.pi)
    else:
        c = gamma(s - 1.5) / (2.0 ** (4.0 - 2.0 * s) * np.sqrt(np.pi) * gamma(2.0 - s))
        col = c * h ** (1.0 - 2.0 * s) * d4
    A = toeplitz(col)
    return A


def assemble_mass(grid: Grid) -> np.ndarray:
    """P1 mass matrix (tridiagonal) on any grid."""
    x = grid.nodes
    d = np.diff(x)
    diag = (d[:-1] + d[1:]) / 3.0
    off = d[1:-1] / 6.0
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


# ------------------------------------------------------- Jacobi machinery

@lru_cache(maxsize=32)
def _jacobi_recurrence(M: int, a: float):
    n = np.arange(1, M + 1, dtype=float)
    beta = n * (n + 2 * a) / ((2 * n + 2 * a + 1) * (2 * n + 2 * a - 1))
    h0 = np.exp((2 * a + 1) * np.log(2.0) + 2 * gammaln(a + 1) - gammaln(2 * a + 2))
    sb = np.sqrt(beta)
    sb.flags.writeable = False
    return sb, 1.0 / np.sqrt(h0)


def jacobi_table(x, M: int, a: float) -> np.ndarray:
    """Orthonormal P_m^(a,a)(x), m = 0..M, for weight (1 - x^2)^a; shape (len(x), M+1)."""
    x = np.asarray(x, dtype=float).ravel()
    sb, p0 = _jacobi_recurrence(int(M), float(a))
    P = np.empty((x.size, M + 1))
    P[:, 0] = p0
    if M >= 1:
        P[:, 1] = x * p0 / sb[0]
    for m in range(2, M + 1):
        P[:, m] = (x * P[:, m - 1] - sb[m - 2] * P[:, m - 2]) / sb[m - 1]
    return P


def jacobi_eigen_symbol(M: int, s: float) -> np.ndarray:
    """lambda*_m = Gamma(2s + m + 1) / m!, m = 0..M."""
    m = np.arange(M + 1, dtype=float)
    return np.exp(gammaln(2 * s + m + 1) - gammaln(m + 1))


@lru_cache(maxsize=16)
def jacobi_matrices(s: float, M: int):
    """Diagonal stiffness and mass matrix of the weighted Jacobi basis."""
    A = np.diag(jacobi_eigen_symbol(M, s))
    t, w = gauss_jacobi(-1.0, 1.0, M + 8, 2 * s, 2 * s)
    P = jacobi_table(t, M, s)
    B = (P * w[:, None]).T @ P
    B = 0.5 * (B + B.T)
    A.flags.writeable = False
    B.flags.writeable = False
    return A, B


# ------------------------------------------------------------ eigensolver

@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray  # columns, mass-orthonormal
    residual: float


def eigen_solve(stiffness, mass, count: int, *, reference=None, tol: float = 1e-9) -> EigenPairs:
    """Smallest ``count`` generalised eigenpairs, mass-normalised and sign-fixed.

    ``reference`` (optional, shape (dim, count)) holds mass-weighted
    approximants; vector k is flipped so that its pairing with column k is
    non-negative.  When the normalised pairing is below 1e-3 in magnitude
    the component of largest magnitude is made positive instead.
    """
    A = np.asarray(stiffness, dtype=float)
    B = np.asarray(mass, dtype=float)
    dim = A.shape[0]
    if A.shape != (dim, dim) or B.shape != (dim, dim):
        raise ValueError("matrices must be square and of equal size")
    if not (1 <= count <= dim):
        raise ValueError(f"count must lie in [1, {dim}], got {count}")
    if not np.array_equal(A, A.T) or not np.allclose(B, B.T, rtol=0, atol=1e-14 * np.abs(B).max()):
        raise ValueError("matrices must be symmetric")
    try:
        lam, V = eigh(A, B, subset_by_index=[0, count - 1])
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"generalised eigensolver failed: {exc}", float("nan")) from exc
    # refine orthonormality inside near-degenerate clusters
    start = 0
    for i in range(1, count + 1):
        if i == count or lam[i] - lam[i - 1] >= 1e-8 * abs(lam[i]):
            if i - start > 1:
                blk = V[:, start:i]
                G = blk.T @ B @ blk
                L = np.linalg.cholesky(G)
                V[:, start:i] = np.linalg.solve(L, blk.T).T
            start = i
    scale = np.sqrt(np.einsum("ij,ij->j", V, B @ V))
    V = V / scale
    R = A @ V - (B @ V) * lam
    res = float(np.max(np.linalg.norm(R, axis=0) / (np.abs(lam) * np.linalg.norm(B @ V, axis=0))))
    if not np.all(np.isfinite(lam)) or res > tol:
        raise EigenSolveError("generalised eigensolver residual above tolerance", res)
    for k in range(count):
        v = V[:, k]
        flip = False
        if reference is not None:
            r = reference[:, k]
            c = float(v @ r)
            den = float(np.sqrt(v @ B @ v) * np.linalg.norm(r)) or 1.0
            if abs(c) / den >= 1e-3:
                flip = c < 0.0
            else:
                flip = v[np.argmax(np.abs(v))] < 0.0
        else:
            flip = v[np.argmax(np.abs(v))] < 0.0
        if flip:
            V[:, k] = -v
    return EigenPairs(lam, V, res)


# ------------------------------------------------------------------ basis

def _omega_rule_points(s: float, c: float, n: int):
    """Nodes/weights for int_{-1}^{1} (1 - y^2)^s f(y) dy, f singular at c outside."""
    d = (c - 1.0) if c > 1.0 else (-1.0 - c)
    if d <= 0.0:
        raise ValueError("trace point must lie outside [-1, 1]")
    if d >= 0.5:
        return gauss_jacobi(-1.0, 1.0, n, s, s)
    sgn = 1.0 if c > 1.0 else -1.0
    # work on the mirrored picture where the singular point sits right of 1
    cc = 1.0 + d
    xs, ws = [], []
    y, w = gauss_jacobi(-1.0, 0.0, n, s, 0.0)
    xs.append(y)
    ws.append(w * (1.0 - y) ** s)
    br = graded_breaks(0.0, 1.0, cc)
    for a, b in zip(br[:-2], br[1:-1]):
        y, w = gauss_jacobi(a, b, n)
        xs.append(y)
        ws.append(w * ((1.0 - y) * (1.0 + y)) ** s)
    y, w = gauss_jacobi(br[-2], 1.0, n, 0.0, s)
    xs.append(y)
    ws.append(w * (1.0 + y) ** s)
    y = np.concatenate(xs)
    w = np.concatenate(ws)
    return sgn * y, w


def _p1_kernel_primitive(t, s):
    t = np.abs(t)
    if s == 0.5:
        return -np.log(t)
    return t ** (1.0 - 2.0 * s) / ((-2.0 * s) * (1.0 - 2.0 * s))


@dataclass(frozen=True)
class SpectralBasis:
    """First N Dirichlet eigenpairs, sampled on a grid.

    ``coefficients`` are Jacobi coefficients (method "jacobi") or interior
    nodal values (method "p1"); columns index the modes.  ``samples`` holds
    phi_n at every grid node (zeros at the endpoints), shape (N, nodes).
    """

    s: float
    method: str
    grid: Grid
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    samples: np.ndarray
    degree: int = 0
    residual: float = 0.0

    def __post_init__(self):
        check_order(self.s)
        lam = self.eigenvalues
        if lam.ndim != 1 or lam.size < 1 or lam[0] <= 0.0 or np.any(np.diff(lam) < 0.0):
            raise ValueError("eigenvalues must be positive and non-decreasing")
        for a in (self.eigenvalues, self.coefficients, self.samples):
            a.flags.writeable = False

    @property
    def count(self) -> int:
        return int(self.eigenvalues.size)

    def truncate(self, N: int) -> "SpectralBasis":
        if not 1 <= N <= self.count:
            raise ValueError(f"basis has {self.count} modes, asked for {N}")
        return SpectralBasis(self.s, self.method, self.grid, self.eigenvalues[:N].copy(),
                             self.coefficients[:, :N].copy(), self.samples[:N].copy(),
                             self.degree, self.residual)

    # evaluation --------------------------------------------------------
    def evaluate(self, x) -> np.ndarray:
        """phi_n(x) for all modes; shape (len(x), N); zero outside (-1, 1)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.count))
        inside = np.abs(x) < 1.0
        xi = x[inside]
        if self.method == "jacobi":
            P = jacobi_table(xi, self.degree, self.s)
            out[inside] = (P @ self.coefficients) * ((1.0 - xi) * (1.0 + xi))[:, None] ** self.s
        else:
            nodes = self.grid.nodes
            vals = np.zeros((nodes.size, self.count))
            vals[1:-1] = self.coefficients
            for k in range(self.count):
                out[inside, k] = np.interp(xi, nodes, vals[:, k])
        return out

    def frac_laplacian_interior(self, x) -> np.ndarray:
        """Exact (-Laplacian)^s phi_n at interior points (Jacobi basis only)."""
        if self.method != "jacobi":
            raise ValueError("exact interior operator needs the Jacobi basis")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.abs(x) >= 1.0):
            raise ValueError("points must lie in (-1, 1)")
        lam = jacobi_eigen_symbol(self.degree, self.s)
        return jacobi_table(x, self.degree, self.s) @ (lam[:, None] * self.coefficients)

    def trace(self, x) -> np.ndarray:
        """Nonlocal normal derivative N_s phi_n(x) at exterior points; shape (len(x), N)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.abs(x) <= 1.0):
            raise ValueError("trace points must satisfy |x| > 1")
        s = self.s
        cs = normalization_constant(s)
        out = np.empty((x.size, self.count))
        if self.method == "jacobi":
            n = self.degree // 2 + 24
            far = np.abs(x) >= 1.5
            if np.any(far):
                y, w = gauss_jacobi(-1.0, 1.0, self.degree + 40, s, s)
                Py = jacobi_table(y, self.degree, s) @ self.coefficients
                K = np.abs(x[far, None] - y[None, :]) ** (-1.0 - 2.0 * s)
                out[far] = -cs * (K * w) @ Py
            for i in np.flatnonzero(~far):
                y, w = _omega_rule_points(s, x[i], n)
                Py = jacobi_table(y, self.degree, s) @ self.coefficients
                out[i] = -cs * ((w * np.abs(x[i] - y) ** (-1.0 - 2.0 * s)) @ Py)
        else:
            nodes = self.grid.nodes
            h = nodes[1] - nodes[0]
            G = _p1_kernel_primitive(x[:, None] - nodes[None, :], s)
            D = (G[:, :-2] - 2.0 * G[:, 1:-1] + G[:, 2:]) / h
            out[:] = -cs * D @ self.coefficients
        return out

    def l2_gram(self, n_quad: int | None = None) -> np.ndarray:
        """(phi_n, phi_m) by quadrature; identity up to round-off."""
        if self.method == "jacobi":
            y, w = gauss_jacobi(-1.0, 1.0, n_quad or self.degree + 8, 2 * self.s, 2 * self.s)
            Py = jacobi_table(y, self.degree, self.s) @ self.coefficients
            return (Py * w[:, None]).T @ Py
        return self.coefficients.T @ assemble_mass(self.grid) @ self.coefficients


def default_degree(N: int) -> int:
    return max(64, 4 * int(N) + 64)


def _approximant_reference(s: float, N: int, method: str, grid: Grid, degree: int) -> np.ndarray:
    from .approx import rho_matrix
    from .quadrature import gauss_legendre

    if method == "jacobi":
        y, w = gauss_jacobi(-1.0, 1.0, degree + 40, s, s)
        R = rho_matrix(np.arange(1, N + 1), y, s)  # (len(y), N)
        P = jacobi_table(y, degree, s)
        return (P * w[:, None]).T @ R
    nodes = grid.nodes
    xs, ws = [], []
    for a, b in zip(nodes[:-1], nodes[1:]):
        t, w = gauss_legendre(a, b, 4)
        xs.append(t)
        ws.append(w)
    y, w = np.concatenate(xs), np.concatenate(ws)
    R = rho_matrix(np.arange(1, N + 1), y, s)
    H = np.clip(1.0 - np.abs(y[:, None] - nodes[None, 1:-1]) / grid.h, 0.0, None)
    return (H * w[:, None]).T @ R


def build_basis(s: float, N: int, *, grid: Grid | int = 512, method: str = "jacobi",
                degree: int | None = None, cache=None, sign_fix: bool = True) -> SpectralBasis:
    """Compute (or load from ``cache``) the first N eigenpairs."""
    s = check_order(s)
    if isinstance(grid, (int, np.integer)):
        grid = Grid.uniform(int(grid))
    if method not in ("jacobi", "p1"):
        raise ValueError(f"unknown method {method!r}")
    N = int(N)
    if method == "jacobi":
        degree = int(degree or default_degree(N))
        dim = degree + 1
    else:
        degree = 0
        dim = grid.n_interior
    if not 1 <= N <= dim:
        raise ValueError(f"mode count must lie in [1, {dim}], got {N}")
    key = None
    if cache is not None:
        key = cache.key(s=s, method=method, grid=grid, N=N, degree=degree)
        hit = cache.load(key)
        if hit is not None:
            lam, C = hit
            return _assemble_basis(s, method, grid, lam, C, degree, 0.0)
    if method == "jacobi":
        A, B = jacobi_matrices(s, degree)
    else:
        A, B = assemble_stiffness(grid, s), assemble_mass(grid)
    ref = _approximant_reference(s, N, method, grid, degree) if sign_fix else None
    pairs = eigen_solve(A, B, N, reference=ref)
    basis = _assemble_basis(s, method, grid, pairs.values, pairs.vectors, degree, pairs.residual)
    if cache is not None:
        cache.store(key, basis)
    return basis


def _assemble_basis(s, method, grid, lam, C, degree, residual) -> SpectralBasis:
    lam = np.asarray(lam, dtype=float).copy()
    C = np.asarray(C, dtype=float).copy()
    samples = np.zeros((lam.size, grid.nodes.size))
    if method == "jacobi":
        xi = grid.interior
        P = jacobi_table(xi, degree, s)
        samples[:, 1:-1] = ((P @ C) * ((1.0 - xi) * (1.0 + xi))[:, None] ** s).T
    else:
        samples[:, 1:-1] = C.T
    return SpectralBasis(s, method, grid, lam, C, samples, degree, residual)
