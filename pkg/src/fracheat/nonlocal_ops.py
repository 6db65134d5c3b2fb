"""Nonlocal operators on sampled functions supported in [-1, 1].

Sampled functions are interpolated by a cubic spline of u / (1 - x^2)^e,
where e is a declared edge exponent (e = s for eigenfunctions).  All
singular integrals are split into a near zone, treated with graded or
endpoint-weighted Gauss rules, and a far zone summed by the power-kernel
backend.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import _backend
from .quadrature import composite, gauss_jacobi, gauss_legendre, graded_breaks, endpoint_graded_breaks
from .regions import ExteriorRegion, interval_kernel_integral, parse_region
from .spectral import Grid, SpectralBasis, check_order, normalization_constant

__all__ = [
    "ExteriorRegion",
    "parse_region",
    "ExteriorProfile",
    "SampledFunction",
    "frac_laplacian_pv",
    "nonlocal_normal_derivative",
    "exterior_gram",
    "bilinear_form",
    "gagliardo_seminorm",
    "integration_by_parts_residual",
    "integration_by_parts_terms",
    "lower_bound_eta",
    "write_trace_csv",
]

_NQ = 8        # Gauss points per cell in far-field sums
_NNEAR = 16    # Gauss points per near-zone piece


@dataclass(frozen=True)
class ExteriorProfile:
    """Exterior data g on ``support``; |g(x)| <= C |x|^-decay on unbounded parts."""

    func: Callable
    support: ExteriorRegion
    decay: float = np.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        m = self.support.contains(x)
        if np.any(m):
            out[m] = self.func(x[m])
        return out


@dataclass(frozen=True)
class SampledFunction:
    """Grid samples of u on [-1, 1] plus a declared exterior extension.

    ``values`` are given at every grid node, endpoints included.  With
    ``edge_exponent`` e > 0 the spline interpolates u / (1 - x^2)^e on the
    interior nodes and the endpoint values must be zero.
    """

    grid: Grid
    values: np.ndarray
    edge_exponent: float = 0.0
    interpolation: str = "spline"
    exterior: ExteriorProfile | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("values must match the grid nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        e = float(self.edge_exponent)
        if not 0.0 <= e < 1.0:
            raise ValueError("edge exponent must lie in [0, 1)")
        if self.interpolation not in ("spline", "linear"):
            raise ValueError("interpolation must be 'spline' or 'linear'")
        if self.interpolation == "linear" and e != 0.0:
            raise ValueError("linear interpolation takes no edge exponent")
        if e > 0.0 and (v[0] != 0.0 or v[-1] != 0.0):
            raise ValueError("edge exponent requires zero endpoint values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "edge_exponent", e)

    # constructors ---------------------------------------------------------
    @classmethod
    def from_callable(cls, func, grid: Grid, edge_exponent: float = 0.0, exterior=None,
                      interpolation: str = "spline") -> "SampledFunction":
        x = grid.nodes
        v = np.asarray(func(x), dtype=float).copy()
        if edge_exponent > 0.0:
            v[0] = v[-1] = 0.0
        return cls(grid, v, edge_exponent, interpolation, exterior)

    @classmethod
    def from_basis(cls, basis: SpectralBasis, coeffs) -> "SampledFunction":
        """u = sum_n c_n phi_n; an int selects a single mode (1-based)."""
        if isinstance(coeffs, (int, np.integer)):
            c = np.zeros(basis.count)
            c[int(coeffs) - 1] = 1.0
        else:
            c = np.asarray(coeffs, dtype=float)
        v = c @ basis.samples
        v[0] = v[-1] = 0.0
        e = basis.s if basis.method == "jacobi" else 0.0
        interp = "spline" if basis.method == "jacobi" else "linear"
        return cls(basis.grid, v, e, interp)

    def scaled(self, c: float) -> "SampledFunction":
        ext = self.exterior
        if ext is not None:
            f = ext.func
            ext = ExteriorProfile(lambda x: c * f(x), ext.support, ext.decay)
        return SampledFunction(self.grid, c * self.values, self.edge_exponent, self.interpolation, ext)

    # evaluation -------------------------------------------------------------
    @cached_property
    def _interp(self):
        x = self.grid.nodes
        e = self.edge_exponent
        if self.interpolation == "linear":
            return None
        if e > 0.0:
            xi = x[1:-1]
            w = self.values[1:-1] / ((1.0 - xi) * (1.0 + xi)) ** e
            if xi.size < 4:
                raise ValueError("spline interpolation needs at least 4 interior nodes")
            return CubicSpline(xi, w, bc_type="not-a-knot", extrapolate=True)
        return CubicSpline(x, self.values, bc_type="not-a-knot")

    def weighted(self, x) -> np.ndarray:
        """u(x) / (1 - x^2)^e on [-1, 1] (the smooth factor)."""
        x = np.asarray(x, dtype=float)
        if self.interpolation == "linear":
            return np.interp(x, self.grid.nodes, self.values)
        return self._interp(x)

    def interior(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.interpolation == "linear":
            return np.interp(x, self.grid.nodes, self.values)
        e = self.edge_exponent
        w = self._interp(x)
        if e > 0.0:
            om = np.clip((1.0 - x) * (1.0 + x), 0.0, None)
            return w * om ** e
        return w

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        inside = np.abs(x) <= 1.0
        if np.any(inside):
            out[inside] = self.interior(x[inside])
        if self.exterior is not None and np.any(~inside):
            out[~inside] = self.exterior(x[~inside])
        return out

    def increment(self, x: float, t: np.ndarray) -> np.ndarray:
        """u(x + t) - u(x) for |x|, |x + t| <= 1, without cancellation in w.

        The spline part is split into a Taylor increment of the piece that
        contains x + t plus the exact cubic jump terms at the knots crossed;
        the edge factor uses expm1/log1p.
        """
        t = np.asarray(t, dtype=float)
        if self.interpolation == "linear":
            return np.interp(x + t, self.grid.nodes, self.values) - np.interp(x, self.grid.nodes, self.values)
        cs = self._interp
        bp, c = cs.x, cs.c
        nint = bp.size - 1
        y = x + t
        jc = min(max(int(np.searchsorted(bp, x, side="right")) - 1, 0), nint - 1)
        j = np.clip(np.searchsorted(bp, y, side="right") - 1, 0, nint - 1)
        z = x - bp[j]
        c0, c1, c2 = c[0, j], c[1, j], c[2, j]
        d1 = 3.0 * c0 * z * z + 2.0 * c1 * z + c2
        d2 = 6.0 * c0 * z + 2.0 * c1
        dw = t * (d1 + t * (0.5 * d2 + t * c0))
        # w_j(x) - w_C(x): sum of leading-coefficient jumps times (x - knot)^3
        jump = np.diff(c[0])                      # at knots bp[1..nint-1]
        steps = j - jc
        for q in range(1, int(np.max(np.abs(steps), initial=0)) + 1):
            up = steps >= q
            down = steps <= -q
            if np.any(up):
                kn = jc + q                         # knot bp[kn] crossed going right
                dw[up] += jump[kn - 1] * (x - bp[kn]) ** 3
            if np.any(down):
                kn = jc - q + 1                     # knot bp[kn] crossed going left
                dw[down] -= jump[kn - 1] * (x - bp[kn]) ** 3
        e = self.edge_exponent
        if e == 0.0:
            return dw
        om0 = (1.0 - x) * (1.0 + x)
        q = -t * (2.0 * x + t) / om0
        rel = np.expm1(e * np.log1p(q))           # (omega(y)/omega(x))^e - 1
        wx = cs(x)
        return om0 ** e * ((1.0 + rel) * dw + wx * rel)

    def knots_between(self, a: float, b: float) -> np.ndarray:
        x = self.grid.nodes
        return x[(x > a) & (x < b)]

    # quadrature helpers -------------------------------------------------------
    def _piece_geometry(self, a: float, b: float, n: int):
        """Nodes, weights and endpoint flag (+1 at x = 1, -1 at x = -1, 0 else)."""
        e = self.edge_exponent
        if e > 0.0 and b == 1.0:
            y, w = gauss_jacobi(a, b, n, 0.0, e)
            return y, w, 1
        if e > 0.0 and a == -1.0:
            y, w = gauss_jacobi(a, b, n, e, 0.0)
            return y, w, -1
        y, w = gauss_legendre(a, b, n)
        return y, w, 0

    def _weigh(self, y: np.ndarray, w: np.ndarray, flag: np.ndarray) -> np.ndarray:
        """w * u(y), where endpoint-weighted nodes already carry (1 -+ y)^e."""
        e = self.edge_exponent
        out = w * self.interior(y)
        if e > 0.0 and np.any(flag):
            sm = self.weighted(y)
            r = flag == 1
            out[r] = w[r] * sm[r] * (1.0 + y[r]) ** e
            m = flag == -1
            out[m] = w[m] * sm[m] * (1.0 - y[m]) ** e
        return out

    def piece(self, a: float, b: float, n: int = _NNEAR):
        """(y, wu) with  int_a^b u(y) f(y) dy ~ sum wu f(y)  for smooth f.

        [a, b] must not contain a knot in its interior.
        """
        y, w, f = self._piece_geometry(a, b, n)
        return y, self._weigh(y, w, np.full(y.size, f))

    @cached_property
    def cell_rule(self):
        """Flattened per-cell rule over [-1, 1], cell-major with _NQ points per cell."""
        x = self.grid.nodes
        ys, ws = [], []
        for a, b in zip(x[:-1], x[1:]):
            y, wu = self.piece(a, b, _NQ)
            ys.append(y)
            ws.append(wu)
        y, wu = np.concatenate(ys), np.concatenate(ws)
        y.flags.writeable = False
        wu.flags.writeable = False
        return y, wu

    def near_kernel_integral(self, a: float, b: float, c: float, s: float) -> float:
        """int_a^b u(y) |c - y|^(-1-2s) dy with c outside (a, b), split at knots."""
        if b <= a:
            return 0.0
        ys, ws, fs = self._near_geometry(a, b, c)
        y, w, f = np.concatenate(ys), np.concatenate(ws), np.concatenate(fs)
        return float(self._weigh(y, w, f) @ np.abs(c - y) ** (-1.0 - 2.0 * s))

    def _near_geometry(self, a: float, b: float, c: float, ys=None, ws=None, fs=None):
        """Append the graded, knot-split rule of [a, b] (singular point c outside)."""
        ys, ws, fs = ([] if v is None else v for v in (ys, ws, fs))
        if b <= a:
            return ys, ws, fs
        br = np.concatenate(([a], self.knots_between(a, b), [b]))
        for lo, hi in zip(br[:-1], br[1:]):
            d = (lo - c) if c <= lo else (c - hi)
            if d <= 0.0:
                raise ValueError("kernel singularity on the integration piece")
            sub = graded_breaks(lo, hi, c) if d < hi - lo else (lo, hi)
            sub = np.asarray(sub, dtype=float)
            pieces = []
            if self.edge_exponent > 0.0 and sub[-1] == 1.0:
                pieces.append(self._piece_geometry(sub[-2], 1.0, _NNEAR))
                sub = sub[:-1]
            if self.edge_exponent > 0.0 and sub.size > 1 and sub[0] == -1.0:
                pieces.append(self._piece_geometry(-1.0, sub[1], _NNEAR))
                sub = sub[1:]
            if sub.size > 1:
                pieces.append((*composite(sub, _NNEAR), 0))
            for y, w, f in pieces:
                ys.append(y)
                ws.append(w)
                fs.append(np.full(y.size, f))
        return ys, ws, fs


def _cell_index(nodes: np.ndarray, p: float) -> int:
    i = int(np.searchsorted(nodes, p, side="right")) - 1
    return min(max(i, 0), nodes.size - 2)


def _exterior_kernel_integral(ext: ExteriorProfile, x: float, s: float) -> float:
    """int over the exterior support of g(y) |x - y|^(-1-2s) dy for |x| < 1."""
    p = 1.0 + 2.0 * s
    total = 0.0
    for a, b in ext.support.intervals:
        if a >= 1.0:
            lo, hi, c, sgn = a, b, x, 1.0
        else:
            lo, hi, c, sgn = -b, -a, -x, -1.0
        hf = hi if np.isfinite(hi) else lo + max(4.0, 4.0 * (lo - c))
        y, w = composite(graded_breaks(lo, hf, c), _NNEAR)
        ys, ws = [y], [w]
        if not np.isfinite(hi):
            dec = ext.decay + p
            X = hf * 1e13 ** (1.0 / (dec - 1.0)) if np.isfinite(dec) else hf * 64.0
            X = min(X, hf * 1e12)
            k = max(1, int(np.ceil(np.log2(X / hf))))
            tb = hf * 2.0 ** np.arange(k + 1)
            y, w = composite(tb, _NNEAR)
            ys.append(y)
            ws.append(w)
            if np.isfinite(dec):
                ys.append(np.array([tb[-1]]))
                ws.append(np.array([tb[-1] / (dec - 1.0)]))
        y, w = np.concatenate(ys), np.concatenate(ws)
        total += float((w * ext(sgn * y)) @ np.abs(c - y) ** (-p))
    return total


# --------------------------------------------------------------- operators

def _pv_near(u: SampledFunction, x: float, s: float, delta: float, zone: tuple) -> float:
    """Window term plus the near-zone kernel integral (without far field)."""
    ux = float(u.interior(np.array([x]))[0])
    nodes = u.grid.nodes
    tk = np.abs(nodes[(nodes > x - delta) & (nodes < x + delta)] - x)
    tb = np.unique(np.concatenate(([0.0, delta], tk[tk > 0.0])))
    # first piece: Gauss-Jacobi weight t^(1-2s) on D2/t^2; later pieces: plain Gauss
    t, w = gauss_jacobi(tb[0], tb[1], _NNEAR, 1.0 - 2.0 * s, 0.0)
    ts, wts = [t], [w / (t * t)]
    for t0, t1 in zip(tb[1:-1], tb[2:]):
        t, w = composite(graded_breaks(t0, t1, 0.0), _NNEAR)
        ts.append(t)
        wts.append(w * t ** (-1.0 - 2.0 * s))
    t = np.concatenate(ts)
    inc = u.increment(x, np.concatenate((t, -t)))
    window = -float(np.concatenate(wts) @ (inc[: t.size] + inc[t.size:]))
    a_z, b_z = zone
    ys, ws, fs = u._near_geometry(a_z, x - delta, x)
    ys, ws, fs = u._near_geometry(x + delta, b_z, x, ys, ws, fs)
    if ys:
        y, w, f = np.concatenate(ys), np.concatenate(ws), np.concatenate(fs)
        rest = float(u._weigh(y, w, f) @ np.abs(x - y) ** (-1.0 - 2.0 * s))
    else:
        rest = 0.0
    return ux * delta ** (-2.0 * s) / s + window - rest


def frac_laplacian_pv(u: SampledFunction, x, s: float, *, allow_boundary: bool = False):
    """C_s P.V. int (u(x) - u(y)) |x - y|^(-1-2s) dy at points x.

    Interior points closer than one grid cell to +-1 are rejected unless
    ``allow_boundary``; exterior points must lie outside the support of the
    exterior data.
    """
    s = check_order(s)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = u.grid.nodes
    h = u.grid.h
    cs = normalization_constant(s)
    p = 1.0 + 2.0 * s
    y, wu = u.cell_rule
    out = np.empty(xa.size)
    inside = np.abs(xa) < 1.0
    lo = np.zeros(xa.size, dtype=np.int64)
    hi = np.zeros(xa.size, dtype=np.int64)
    zones = {}
    for i in np.flatnonzero(inside):
        xi = xa[i]
        dist = 1.0 - abs(xi)
        if dist < h * (1.0 - 1e-12) and not allow_boundary:
            raise ValueError(f"x = {xi} lies within one grid cell of the boundary")
        if u.interpolation == "linear" and s >= 0.5:
            gap = np.min(np.abs(nodes - xi))
            if gap < h:
                raise ValueError(f"x = {xi} lies within one grid cell of an interpolation kink")
        i0 = _cell_index(nodes, max(xi - 2 * h, -1.0))
        i1 = _cell_index(nodes, min(xi + 2 * h, 1.0))
        lo[i], hi[i] = i0 * _NQ, (i1 + 1) * _NQ
        zones[i] = (nodes[i0], nodes[i1 + 1])
    ext_pts = np.flatnonzero(~inside)
    if u.exterior is not None and ext_pts.size:
        if np.any(u.exterior.support.contains(xa[ext_pts])) or np.any(np.abs(xa[ext_pts]) == 1.0):
            raise ValueError("principal value inside the exterior data support is not supported")
    if np.any(np.abs(xa) == 1.0):
        raise ValueError("x = +-1 is a kink of the zero extension")
    far = _backend.kernel_apply(xa[inside], y, wu, p, lo[inside], hi[inside])
    far_full = np.zeros(xa.size)
    far_full[inside] = far
    far = far_full
    ext_int = _interior_kernel_integral(u, xa[ext_pts], s) if ext_pts.size else None
    for i in range(xa.size):
        xi = xa[i]
        if inside[i]:
            dist = 1.0 - abs(xi)
            delta = min(h, 0.5 * dist)
            val = _pv_near(u, xi, s, delta, zones[i]) - far[i]
            if u.exterior is not None:
                val -= _exterior_kernel_integral(u.exterior, xi, s)
        else:
            val = -ext_int[np.searchsorted(ext_pts, i)]
            if u.exterior is not None:
                val -= _exterior_support_integral(u.exterior, xi, s)
        out[i] = cs * val
    return out if np.ndim(x) else float(out[0])


def _exterior_support_integral(ext: ExteriorProfile, x: float, s: float) -> float:
    """int over the exterior data of g(y)|x - y|^(-1-2s) for x outside its closure."""
    p = 1.0 + 2.0 * s
    total = 0.0
    for a, b in ext.support.intervals:
        bf = b if np.isfinite(b) else max(a, x) + 64.0
        af = a if np.isfinite(a) else min(b, x) - 64.0
        if x <= af:
            br = graded_breaks(af, bf, x)
        elif x >= bf:
            br = graded_breaks(af, bf, x)
        else:
            raise ValueError("point inside exterior data support")
        for u0, u1 in zip(br[:-1], br[1:]):
            y, w = gauss_legendre(u0, u1, _NNEAR)
            total += float((w * ext(y)) @ np.abs(x - y) ** (-p))
    return total


def _interior_kernel_integral(u: SampledFunction, xa: np.ndarray, s: float) -> np.ndarray:
    """int_{-1}^{1} u(y) |x - y|^(-1-2s) dy for exterior points |x| > 1."""
    nodes = u.grid.nodes
    h = u.grid.h
    p = 1.0 + 2.0 * s
    y, wu = u.cell_rule
    ncell = nodes.size - 1
    lo = np.zeros(xa.size, dtype=np.int64)
    hi = np.zeros(xa.size, dtype=np.int64)
    near = []
    for i, xi in enumerate(xa):
        if abs(xi) - 1.0 < 2.0 * h:
            if xi > 0:
                i0 = _cell_index(nodes, 1.0 - 2.0 * h)
                lo[i], hi[i] = i0 * _NQ, ncell * _NQ
                near.append((i, nodes[i0], 1.0))
            else:
                i1 = _cell_index(nodes, -1.0 + 2.0 * h)
                lo[i], hi[i] = 0, (i1 + 1) * _NQ
                near.append((i, -1.0, nodes[i1 + 1]))
    acc = _backend.kernel_apply(xa, y, wu, p, lo, hi)
    for i, a, b in near:
        acc[i] += u.near_kernel_integral(a, b, xa[i], s)
    return acc


def nonlocal_normal_derivative(u: SampledFunction, x, s: float):
    """N_s u(x) = C_s int_{-1}^{1} (u(x) - u(y)) |x - y|^(-1-2s) dy for |x| > 1."""
    s = check_order(s)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(xa) <= 1.0):
        raise ValueError("normal derivative needs |x| > 1")
    acc = _interior_kernel_integral(u, xa, s)
    kap = interval_kernel_integral(xa, -1.0, 1.0, s)
    out = normalization_constant(s) * (u(xa) * kap - acc)
    return out if np.ndim(x) else float(out[0])


# ------------------------------------------------------------ gram / eta

def exterior_gram(basis: SpectralBasis, region: ExteriorRegion, K: int | None = None,
                  n: int = 16) -> np.ndarray:
    """kappa_nm = int_O N_s phi_n N_s phi_m dx for the first K modes."""
    K = basis.count if K is None else int(K)
    b = basis.truncate(K)
    s = basis.s
    if region.touches_boundary() and s >= 0.5:
        raise ValueError("N_s phi is not square integrable up to +-1 when s >= 1/2")
    x, w = region.rule(n=n, edge_power=-2.0 * s, decay=2.0 + 4.0 * s)
    T = b.trace(x)
    G = (T * w[:, None]).T @ T
    return 0.5 * (G + G.T)


def lower_bound_eta(basis: SpectralBasis, region: ExteriorRegion, K: int | None = None) -> float:
    """min over k <= K of ||N_s phi_k||_{L2(O)}."""
    kap = exterior_gram(basis, region, K)
    return float(np.sqrt(np.min(np.diag(kap))))


def write_trace_csv(path, basis: SpectralBasis, x) -> None:
    """Rows (k, x, N_s phi_k(x)) sorted by (k, x), 17 significant digits."""
    xs = np.sort(np.asarray(x, dtype=float))
    T = basis.trace(xs)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "x", "N_s_phi_k"])
        for k in range(basis.count):
            for j, xj in enumerate(xs):
                wr.writerow([k + 1, f"{xj:.17g}", f"{T[j, k]:.17g}"])


# ------------------------------------------------------- double integrals

def _panels_for_interval(a: float, b: float, width: float, grade_left: bool, grade_right: bool,
                         levels: int = 10):
    """Breakpoints for panel pairs: uniform cells, graded toward flagged ends."""
    m = max(1, int(np.ceil((b - a) / width - 1e-9)))
    br = np.linspace(a, b, m + 1)
    if grade_left:
        g = endpoint_graded_breaks(br[0], br[1], True, levels)
        br = np.concatenate((g[:-1], br[1:]))
    if grade_right:
        g = endpoint_graded_breaks(br[-2], br[-1], False, levels)
        br = np.concatenate((br[:-2], g))
    return br


def _self_pairs(pa, pb, fu, fv, s, nt=12, nz=12):
    """sum over panels of  int int_{P x P} (du)(dv) |x-y|^(-1-2s)."""
    H = pb - pa
    t_ref, wt_ref = gauss_jacobi(0.0, 1.0, nt, 1.0 - 2.0 * s, 0.0)
    z_ref, wz_ref = gauss_legendre(0.0, 1.0, nz)
    # t = H tau; z = pa + (H - t) zeta
    t = H[:, None] * t_ref[None, :]                          # (P, nt)
    wt = wt_ref[None, :] * H[:, None] ** (2.0 - 2.0 * s)     # includes t^(1-2s) and dt
    L = H[:, None] - t
    z = pa[:, None, None] + L[:, :, None] * z_ref[None, None, :]
    wz = L[:, :, None] * wz_ref[None, None, :]
    zf = z.ravel()
    tf = np.broadcast_to(t[:, :, None], z.shape).ravel()
    Du = (fu(zf + tf) - fu(zf)) / tf[:, None]
    Dv = (fv(zf + tf) - fv(zf)) / tf[:, None]
    W = 2.0 * (np.broadcast_to(wt[:, :, None], z.shape) * wz).ravel()
    return (Du * W[:, None]).T @ Dv


def _adjacent_pairs(pa, pm, pb, fu, fv, s, n=12):
    """sum over adjacent panel pairs [pa,pm],[pm,pb] of both orderings."""
    W1 = pm - pa
    W2 = pb - pm
    wmin = np.minimum(W1, W2)
    wmax = np.maximum(W1, W2)
    pieces = [(np.zeros_like(wmin), wmin, True), (wmin, wmax, False), (wmax, W1 + W2, False)]
    xi_ref, wxi_ref = gauss_legendre(0.0, 1.0, n)
    acc = None
    for r0, r1, first in pieces:
        if first:
            r_ref, wr_ref = gauss_jacobi(0.0, 1.0, n, 2.0 - 2.0 * s, 0.0)
            r = r0[:, None] + (r1 - r0)[:, None] * r_ref[None, :]
            wr = wr_ref[None, :] * (r1 - r0)[:, None] ** (3.0 - 2.0 * s)
            wr = wr / r ** (2.0 - 2.0 * s)   # rule for smooth f; r-power re-applied below
        else:
            r_ref, wr_ref = gauss_legendre(0.0, 1.0, n)
            r = r0[:, None] + (r1 - r0)[:, None] * r_ref[None, :]
            wr = wr_ref[None, :] * (r1 - r0)[:, None]
        # xi range for each r: [max(0, 1 - W1/r), min(1, W2/r)]
        with np.errstate(divide="ignore", invalid="ignore"):
            x0 = np.clip(1.0 - W1[:, None] / r, 0.0, 1.0)
            x1 = np.clip(W2[:, None] / r, 0.0, 1.0)
        span = np.clip(x1 - x0, 0.0, None)
        xi = x0[:, :, None] + span[:, :, None] * xi_ref[None, None, :]
        wxi = span[:, :, None] * wxi_ref[None, None, :]
        rr = np.broadcast_to(r[:, :, None], xi.shape)
        a = rr * xi
        b = rr * (1.0 - xi)
        xp = (pm[:, None, None] + a).ravel()
        yp = (pm[:, None, None] - b).ravel()
        rf = rr.ravel()
        Du = (fu(xp) - fu(yp)) / rf[:, None]
        Dv = (fv(xp) - fv(yp)) / rf[:, None]
        W = 2.0 * (np.broadcast_to(wr[:, :, None], xi.shape) * wxi).ravel() * rf ** (2.0 - 2.0 * s)
        part = (Du * W[:, None]).T @ Dv
        acc = part if acc is None else acc + part
    return acc


def _pair_form(breaks_list, fu, fv, s, nq=_NQ, backend=None):
    """int int over (union of panels)^2 of (u(x)-u(y))(v(x)-v(y))^T |x-y|^(-1-2s).

    ``breaks_list`` is a list of breakpoint arrays, one per connected
    interval.  ``fu``/``fv`` map points to arrays of shape (n, J).
    """
    p = 1.0 + 2.0 * s
    ys, ws, pids = [], [], []
    pid = 0
    pa_all, pb_all, adj = [], [], []
    for br in breaks_list:
        for k, (a, b) in enumerate(zip(br[:-1], br[1:])):
            y, w = gauss_legendre(a, b, nq)
            ys.append(y)
            ws.append(w)
            pids.append(np.full(nq, pid))
            pa_all.append(a)
            pb_all.append(b)
            if k > 0:
                adj.append((br[k - 1], a, b))
            pid += 1
        pid += 1  # separate intervals are never adjacent
    y = np.concatenate(ys)
    w = np.concatenate(ws)
    pids = np.concatenate(pids)
    U = fu(y)
    V = fv(y)
    far = _backend.pair_sum(y, w, pids, U, V, p, backend=backend)
    # pairs of panels in different intervals but consecutive ids are excluded by the id gap;
    # non-adjacent panels with |pid difference| == 1 do not occur.
    self_part = _self_pairs(np.array(pa_all), np.array(pb_all), fu, fv, s)
    adj = np.array(adj)
    adj_part = _adjacent_pairs(adj[:, 0], adj[:, 1], adj[:, 2], fu, fv, s) if adj.size else 0.0
    return far + self_part + adj_part


def _as_columns(f):
    def g(x):
        r = np.asarray(f(x), dtype=float)
        return r.reshape(r.shape[0], -1)
    return g


def _omega_breaks(u: SampledFunction, levels: int = 10):
    nodes = u.grid.nodes
    g0 = endpoint_graded_breaks(nodes[0], nodes[1], True, levels)
    g1 = endpoint_graded_breaks(nodes[-2], nodes[-1], False, levels)
    return np.concatenate((g0[:-1], nodes[1:-1], g1[1:]))


def _exterior_difference_integral(v: SampledFunction, x: np.ndarray, s: float) -> np.ndarray:
    """H(x) = int_{|y|>1} (v(x) - v(y)) |x - y|^(-1-2s) dy for |x| < 1."""
    p = 1.0 + 2.0 * s
    vx = v.interior(x)
    ext = v.exterior
    out = vx * interval_kernel_integral(x, 1.0, np.inf, s) + vx * interval_kernel_integral(x, -np.inf, -1.0, s)
    if ext is None:
        return out
    for i, xi in enumerate(x):
        out[i] -= _exterior_kernel_integral(ext, xi, s)
    return out


def _outer_rule(u: SampledFunction):
    br = _omega_breaks(u)
    xq, wq = composite(br, _NNEAR)
    return br, xq, wq


def bilinear_form(u: SampledFunction, v: SampledFunction, s: float, backend=None) -> float:
    """F(u, v) = (C_s/2) int int_{R^2} (u(x)-u(y))(v(x)-v(y)) |x-y|^(-1-2s), u zero outside."""
    s = check_order(s)
    if u.exterior is not None:
        raise ValueError("u must vanish outside [-1, 1]")
    cs = normalization_constant(s)
    br, xq, wq = _outer_rule(u)
    fu = _as_columns(lambda x: u.interior(np.clip(x, -1.0, 1.0)))
    fv = _as_columns(lambda x: v.interior(np.clip(x, -1.0, 1.0)))
    inner = float(_pair_form([br], fu, fv, s, backend=backend)[0, 0])
    cross = float(wq @ (u.interior(xq) * _exterior_difference_integral(v, xq, s)))
    return 0.5 * cs * inner + cs * cross


def integration_by_parts_terms(u: SampledFunction, v: SampledFunction, s: float, backend=None):
    """(F(u, v), int_Omega v (-Lap)^s u, int_{R minus Omega} v N_s u)."""
    F = bilinear_form(u, v, s, backend=backend)
    if u.edge_exponent > 0.0:
        # (-Lap)^s u is smooth up to +-1 here; graded nodes would only sit
        # where x -+ 1 has lost most of its digits
        xq, wq = composite(u.grid.nodes, _NNEAR)
    else:
        _, xq, wq = _outer_rule(u)
    lap = frac_laplacian_pv(u, xq, s, allow_boundary=True)
    interior = float(wq @ (v.interior(xq) * lap))
    exterior = 0.0
    if v.exterior is not None:
        xe, we = v.exterior.support.rule(n=_NNEAR, edge_power=-s,
                                         decay=v.exterior.decay + 1.0 + 2.0 * s)
        ns = nonlocal_normal_derivative(u, xe, s)
        exterior = float(we @ (v.exterior(xe) * ns))
    return F, interior, exterior


def integration_by_parts_residual(u: SampledFunction, v: SampledFunction, s: float) -> float:
    """|F(u, v) - int_Omega v (-Lap)^s u - int_{R minus Omega} v N_s u|."""
    if v.exterior is None and not np.any(v.values):
        return 0.0
    F, a, b = integration_by_parts_terms(u, v, s)
    return abs(F - a - b)


def gagliardo_seminorm(u, s: float, domain="real", backend=None) -> float:
    """Double-integral seminorm of u over domain^2.

    ``domain`` is "interval" ((-1,1)^2), "real" (R^2, for u vanishing
    outside [-1, 1]) or an ExteriorRegion O (O x O; u is then a callable
    on O, possibly vector-valued, and the Gram matrix of the components is
    returned when it has more than one).
    """
    s = check_order(s)
    if isinstance(domain, ExteriorRegion):
        M = region_seminorm_gram(u, domain, s, backend=backend)
        return float(np.sqrt(max(M[0, 0], 0.0))) if M.shape == (1, 1) else M
    if not isinstance(u, SampledFunction):
        raise TypeError("interval/real seminorms need a SampledFunction")
    br, xq, wq = _outer_rule(u)
    fu = _as_columns(lambda x: u.interior(np.clip(x, -1.0, 1.0)))
    inner = float(_pair_form([br], fu, fu, s, backend=backend)[0, 0])
    if domain == "interval":
        return float(np.sqrt(max(inner, 0.0)))
    if domain != "real":
        raise ValueError(f"unknown domain {domain!r}")
    if u.exterior is not None:
        raise ValueError("real-line seminorm implemented for zero exterior extension")
    kap = interval_kernel_integral(xq, 1.0, np.inf, s) + interval_kernel_integral(xq, -np.inf, -1.0, s)
    cross = float(wq @ (u.interior(xq) ** 2 * kap))
    return float(np.sqrt(max(inner + 2.0 * cross, 0.0)))


def region_seminorm_gram(f: Callable, region: ExteriorRegion, s: float, panels_per_unit: int = 8,
                         backend=None) -> np.ndarray:
    """Gram matrix int int_{O x O} (f_j(x)-f_j(y))(f_k(x)-f_k(y)) |x-y|^(-1-2s)."""
    brs = []
    for a, b in region.intervals:
        af = a if np.isfinite(a) else b - 1e3
        bf = b if np.isfinite(b) else a + 1e3
        width = 1.0 / panels_per_unit
        brs.append(_panels_for_interval(af, bf, width, af == 1.0, bf == -1.0))
    fc = _as_columns(f)
    M = _pair_form(brs, fc, fc, s, backend=backend)
    return 0.5 * (M + M.T)
