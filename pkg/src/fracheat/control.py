"""Exterior null controls from the observability Gramian.

The control ansatz is g = chi_O N_s psi, with psi the backward dual state
started from psi0.  With the forward sign convention of ``evolution``,

    u_n(T) = u0_n e^{-lambda_n T} - (G psi0)_n,
    G_nm = kappa_nm (1 - e^{-(lambda_n + lambda_m) T}) / (lambda_n + lambda_m),

so the null control solves G psi0 = u0 e^{-lambda T}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, eigh, solve_triangular

from .evolution import ControlSignal, ModalState, TimeGrid, solve_forward
from .nonlocal_ops import exterior_gram, region_seminorm_gram
from .regions import ExteriorRegion
from .spectral import SpectralBasis, eigenvalue_asymptotic

__all__ = [
    "GramianError",
    "ObservabilityBreakdown",
    "Gramian",
    "CGResult",
    "GramianSystem",
    "ControlResult",
    "Verification",
    "MuntzReport",
    "assemble_gramian",
    "pcg",
    "synthesize_null_control",
    "verify_null_control",
    "steer_to_trajectory",
    "muntz_report",
    "observability_constant_estimate",
    "observability_sweep",
]


class GramianError(ArithmeticError):
    """The assembled Gramian is not positive (semi)definite within tolerance."""


class ObservabilityBreakdown(ArithmeticError):
    """Cholesky of the (regularised) Gramian failed."""

    def __init__(self, message: str, smallest_ritz: float):
        super().__init__(f"{message} (smallest Ritz value {smallest_ritz:.3e})")
        self.smallest_ritz = smallest_ritz


def _time_factor(lam: np.ndarray, T: float) -> np.ndarray:
    L = lam[:, None] + lam[None, :]
    return -np.expm1(-L * T) / L


@dataclass(frozen=True)
class Gramian:
    """Truncated observability Gramian on a region and horizon."""

    s: float
    T: float
    region: ExteriorRegion
    eigenvalues: np.ndarray
    kappa: np.ndarray
    matrix: np.ndarray

    @property
    def N(self) -> int:
        return int(self.eigenvalues.size)

    def condition(self) -> float | None:
        ev = np.linalg.eigvalsh(self.matrix)
        return float(ev[-1] / ev[0]) if ev[0] > 0.0 else None


def assemble_gramian(basis: SpectralBasis, region: ExteriorRegion, T: float,
                     N: int | None = None, *, kappa: np.ndarray | None = None,
                     psd_tol: float = 1e-12) -> Gramian:
    if not T > 0.0:
        raise ValueError("horizon must be positive")
    N = basis.count if N is None else int(N)
    b = basis.truncate(N)
    kap = exterior_gram(b, region) if kappa is None else np.asarray(kappa, dtype=float)[:N, :N]
    lam = b.eigenvalues.copy()
    G = kap * _time_factor(lam, T)
    G = 0.5 * (G + G.T)
    tr = float(np.trace(G))
    if np.linalg.eigvalsh(G)[0] < -psd_tol * tr:
        raise GramianError("Gramian has a negative eigenvalue beyond tolerance; trace quadrature failed")
    for a in (lam, kap, G):
        a.flags.writeable = False
    return Gramian(b.s, float(T), region, lam, kap, G)


# ------------------------------------------------------------------ CG

@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float       # relative residual ||b - A x|| / ||b|| of x
    converged: bool


def pcg(A: np.ndarray, b: np.ndarray, *, tol: float = 1e-12, maxiter: int | None = None,
        replace_every: int = 10) -> CGResult:
    """Conjugate gradients with diagonal preconditioning.

    The recursive residual is replaced by b - A x every ``replace_every``
    steps; the iterate with the smallest true residual is returned.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = 10 * n if maxiter is None else int(maxiter)
    nb = float(np.linalg.norm(b))
    x = np.zeros(n)
    if nb == 0.0:
        return CGResult(x, 0, 0.0, True)
    d = np.diag(A).copy()
    if np.any(d <= 0.0):
        raise GramianError("non-positive diagonal; system is indefinite")
    dinv = 1.0 / d
    eps_curv = n * np.finfo(float).eps * float(np.abs(A).max())
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    best_x, best_res, best_it = x.copy(), 1.0, 0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            if pAp < -eps_curv * float(p @ p):
                raise GramianError("negative curvature in CG; system is indefinite")
            break  # p is at the rounding level of A; no further progress possible
        alpha = rz / pAp
        x = x + alpha * p
        if it % replace_every == 0:
            r = b - A @ x
        else:
            r = r - alpha * Ap
        true_res = float(np.linalg.norm(b - A @ x)) / nb
        if true_res < best_res:
            best_x, best_res, best_it = x.copy(), true_res, it
        if true_res <= tol:
            return CGResult(x, it, true_res, True)
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(best_x, best_it, best_res, best_res <= tol)


class ConvergenceError(ArithmeticError):
    def __init__(self, result: CGResult):
        super().__init__(f"CG did not reach the tolerance: residual {result.residual:.3e} "
                         f"after {result.iterations} iterations")
        self.result = result


# ------------------------------------------------------------ synthesis

@dataclass(frozen=True)
class GramianSystem:
    """(G + eps I) psi0 = r with its solution and diagnostics."""

    gramian: Gramian
    rhs: np.ndarray
    epsilon: float
    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool

    @property
    def N(self) -> int:
        return self.gramian.N


@dataclass(frozen=True)
class ControlResult:
    """Synthesised control and its effect.

    ``defect`` is ||u(T) - target(T)|| / ||scale|| where target(T) is zero
    for null control and the free target trajectory for steering; the scale
    is the free terminal state of the uncontrolled problem being cancelled.
    """

    system: GramianSystem
    control: ControlSignal
    initial: ModalState
    terminal: ModalState
    target: ModalState
    free_terminal: ModalState
    cost_l2: float
    defect: float

    def cost_gagliardo(self, basis: SpectralBasis) -> float:
        """sqrt(||g||^2_{L2(O x (0,T))} + int_0^T |g(., t)|^2_{H^s(O)} dt)."""
        gram = self.system.gramian
        b = basis.truncate(gram.N)
        H = region_seminorm_gram(lambda x: b.trace(x), gram.region, gram.s)
        W = _time_factor(gram.eigenvalues, gram.T)
        psi = self.system.solution
        extra = float(psi @ ((H * W) @ psi))
        return float(np.sqrt(max(self.cost_l2 ** 2 + extra, 0.0)))


def _hum_signal(gram: Gramian, basis: SpectralBasis, psi0: np.ndarray) -> ControlSignal:
    b = basis.truncate(gram.N)
    coeffs = np.asarray(psi0, dtype=float).reshape(1, -1, 1)
    return ControlSignal(gram.region, lambda x: b.trace(x), TimeGrid.uniform(gram.T),
                         coeffs, gram.eigenvalues, gram.kappa)


def _solve_system(gram: Gramian, r: np.ndarray, epsilon: float, tol: float,
                  maxiter: int | None, strict: bool) -> GramianSystem:
    if epsilon < 0.0:
        raise ValueError("regularisation must be non-negative")
    A = gram.matrix + epsilon * np.eye(gram.N)
    if epsilon == 0.0:
        try:
            cho_factor(A)
        except LinAlgError as exc:
            raise GramianError("Gramian is not numerically positive definite; use epsilon > 0") from exc
    res = pcg(A, r, tol=tol, maxiter=maxiter)
    if strict and not res.converged:
        raise ConvergenceError(res)
    for a in (r, res.x):
        a.flags.writeable = False
    return GramianSystem(gram, r, float(epsilon), res.x, res.iterations, res.residual, res.converged)


def _target_problem(u0: ModalState, target0: ModalState | None, gram: Gramian,
                    basis: SpectralBasis, epsilon: float, tol: float,
                    maxiter: int | None, strict: bool) -> ControlResult:
    N = gram.N
    b = basis.truncate(N)
    lam = gram.eigenvalues
    if u0.size != N:
        raise ValueError(f"initial state has {u0.size} modes, Gramian has {N}")
    decay = np.exp(-lam * gram.T)
    diff = u0.coefficients if target0 is None else u0.coefficients - target0.coefficients
    r = diff * decay
    system = _solve_system(gram, r, epsilon, tol, maxiter, strict)
    signal = _hum_signal(gram, b, system.solution)
    start = ModalState(0.0, u0.coefficients)
    uT = solve_forward(start, signal, b, gram.T)
    if target0 is None:
        tgt = ModalState(gram.T, np.zeros(N))
        free = ModalState(gram.T, u0.coefficients * decay)
    else:
        tgt = ModalState(gram.T, target0.coefficients * decay)
        free = ModalState(gram.T, diff * decay)
    num = float(np.linalg.norm(uT.coefficients - tgt.coefficients))
    den = tgt.norm() if target0 is not None else free.norm()
    defect = num / den if den > 0.0 else (0.0 if num == 0.0 else np.inf)
    psi = system.solution
    cost = float(np.sqrt(max(psi @ (gram.matrix @ psi), 0.0)))
    return ControlResult(system, signal, start, uT, tgt, free, cost, float(defect))


def synthesize_null_control(u0: ModalState, basis: SpectralBasis, region: ExteriorRegion, T: float,
                            N: int | None = None, epsilon: float = 0.0, *, gramian: Gramian | None = None,
                            tol: float = 1e-12, maxiter: int | None = None,
                            strict: bool = False) -> ControlResult:
    """HUM control driving u0 to zero at time T.

    The CG solve targets relative residual ``tol`` within ``maxiter``
    (default 10 N) iterations.  If it does not get there, the best iterate is
    used and ``system.converged`` is False; ``strict`` raises instead.
    For u0 = 0 the control is zero and the defect is reported as 0.
    """
    gram = gramian or assemble_gramian(basis, region, T, N)
    return _target_problem(u0, None, gram, basis, epsilon, tol, maxiter, strict)


def steer_to_trajectory(u0: ModalState, target0: ModalState, basis: SpectralBasis,
                        region: ExteriorRegion, T: float, N: int | None = None, epsilon: float = 0.0, *,
                        gramian: Gramian | None = None, tol: float = 1e-12,
                        maxiter: int | None = None, strict: bool = False) -> ControlResult:
    """Control taking u0 onto the free trajectory of target0 at time T.

    The control is the null control of u0 - target0; ``defect`` is
    ||u(T) - target(T)|| / ||target(T)||.
    """
    gram = gramian or assemble_gramian(basis, region, T, N)
    return _target_problem(u0, target0, gram, basis, epsilon, tol, maxiter, strict)


# ---------------------------------------------------------- verification

@dataclass(frozen=True)
class Verification:
    terminal: np.ndarray          # re-simulated u_n(T)
    defect: float                 # re-simulated defect
    defect_mismatch: float        # |re-simulated - reported|
    closed_loop_error: float      # ||u0 e^{-lambda T} - G psi0 - u(T)||
    duality_residuals: np.ndarray  # relative residuals of the duality identity per probe

    def passed(self, defect_tol: float = 1e-12, duality_tol: float = 1e-8) -> bool:
        return bool(self.defect_mismatch <= defect_tol and np.all(self.duality_residuals <= duality_tol))


def verify_null_control(result: ControlResult, basis: SpectralBasis, *, probes: int = 10,
                        seed: int = 0) -> Verification:
    """Re-simulate the closed loop and test the duality identity on random probes.

    For each probe psi_T, (u(0), psi(0)) - (u(T), psi_T) must equal the
    space-time pairing of g with N_s psi; the pairing is computed from the
    Gramian in closed form, independently of the forward solve.
    """
    gram = result.system.gramian
    N = gram.N
    b = basis.truncate(N)
    lam = gram.eigenvalues
    u0 = result.initial
    uT = solve_forward(u0, result.control, b, gram.T)
    num = float(np.linalg.norm(uT.coefficients - result.target.coefficients))
    den = result.target.norm() if np.any(result.target.coefficients) else result.free_terminal.norm()
    defect = num / den if den > 0.0 else (0.0 if num == 0.0 else np.inf)
    psi = result.system.solution
    closed = u0.coefficients * np.exp(-lam * gram.T) - gram.matrix @ psi
    closed_err = float(np.linalg.norm(closed - uT.coefficients))
    rng = np.random.default_rng(seed)
    res = np.empty(probes)
    for i in range(probes):
        ph = rng.standard_normal(N)
        a = float(u0.coefficients @ (ph * np.exp(-lam * gram.T)))
        bb = float(uT.coefficients @ ph)
        c = float(psi @ (gram.matrix @ ph))   # int_0^T int_O g N_s psi_probe
        scale = max(abs(a), abs(bb), abs(c), np.finfo(float).tiny)
        res[i] = abs(a - bb - c) / scale
    return Verification(uT.coefficients.copy(), float(defect), abs(defect - result.defect), closed_err, res)


# ---------------------------------------------------------------- Müntz

@dataclass(frozen=True)
class MuntzReport:
    """Partial sums S_N = sum_{n <= N} 1/lambda_asym(n)."""

    s: float
    N_max: int
    checkpoints: np.ndarray
    partial_sums: np.ndarray
    verdict: str            # "divergent" iff 2s <= 1
    tail_model: str
    fit_coefficient: float  # c in c ln N, c N^(1-2s), or the tail bound at N_max

    def sum_at(self, N: int) -> float:
        i = np.searchsorted(self.checkpoints, N)
        if i >= self.checkpoints.size or self.checkpoints[i] != N:
            raise KeyError(f"{N} is not a checkpoint")
        return float(self.partial_sums[i])


def _default_checkpoints(N_max: int) -> np.ndarray:
    pts = {N_max}
    k = 10
    while k <= N_max:
        for m in (1, 2, 5):
            if m * k <= N_max:
                pts.add(m * k)
        k *= 10
    return np.array(sorted(pts), dtype=np.int64)


def muntz_report(s: float, N_max: int, checkpoints=None) -> MuntzReport:
    if N_max < 10:
        raise ValueError("N_max must be at least 10")
    N_max = int(N_max)
    n = np.arange(1, N_max + 1)
    terms = 1.0 / eigenvalue_asymptotic(n, s)
    S = np.cumsum(terms)
    cps = _default_checkpoints(N_max) if checkpoints is None else np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cps[0] < 1 or cps[-1] > N_max:
        raise ValueError("checkpoints must lie in [1, N_max]")
    sums = S[cps - 1]
    p = 2.0 * s
    lo, hi = int(cps[0]), int(cps[-1])
    if p < 1.0:
        model = "power: S_N ~ c N^(1-2s)"
        coef = (S[hi - 1] - S[lo - 1]) / (hi ** (1.0 - p) - lo ** (1.0 - p)) if hi > lo else np.nan
        verdict = "divergent"
    elif p == 1.0:
        model = "logarithmic: S_N ~ c ln N"
        coef = (S[hi - 1] - S[lo - 1]) / np.log(hi / lo) if hi > lo else np.nan
        verdict = "divergent"
    else:
        model = "convergent p-series: S_inf - S_N <= (2/pi)^(2s) (N - (1-s)/2)^(1-2s) / (2s-1)"
        coef = (2.0 / np.pi) ** p * (N_max - 0.5 * (1.0 - s)) ** (1.0 - p) / (p - 1.0)
        verdict = "convergent"
    sums.flags.writeable = False
    cps.flags.writeable = False
    return MuntzReport(float(s), N_max, cps, sums, verdict, model, float(coef))


# ------------------------------------------------------- observability

def observability_constant_estimate(gram: Gramian, epsilon: float = 0.0) -> float:
    """C_N = max psi^T D^2 psi / psi^T (G + eps I) psi with D = diag(e^{-lambda T})."""
    A = gram.matrix + epsilon * np.eye(gram.N)
    try:
        L, lower = cho_factor(A, lower=True)
    except LinAlgError as exc:
        ritz = float(np.linalg.eigvalsh(A)[0])
        raise ObservabilityBreakdown("Gramian numerically singular", ritz) from exc
    Lt = np.tril(L)
    D = np.diag(np.exp(-gram.eigenvalues * gram.T))
    M = solve_triangular(Lt, D, lower=True)          # L^{-1} D
    return float(eigh(M @ M.T, eigvals_only=True)[-1])


def observability_sweep(basis: SpectralBasis, region: ExteriorRegion, T: float, Ns,
                        epsilon: float | None = None, *, kappa: np.ndarray | None = None) -> dict:
    """C_N for nested truncations sharing one exterior Gram matrix.

    ``epsilon=None`` selects 0 for s > 1/2 and 1e-10 trace(G)/N for s <= 1/2,
    evaluated at the largest N and used for every N so the values are nested.
    """
    Ns = sorted(int(n) for n in Ns)
    Nmax = Ns[-1]
    big = assemble_gramian(basis, region, T, Nmax, kappa=kappa)
    if epsilon is None:
        epsilon = 0.0 if basis.s > 0.5 else 1e-10 * float(np.trace(big.matrix)) / Nmax
    out = {}
    for n in Ns:
        g = assemble_gramian(basis, region, T, n, kappa=big.kappa)
        out[n] = observability_constant_estimate(g, epsilon)
    return {"epsilon": float(epsilon), "C": out}
