"""Command-line front end: ``fracheat <command> [options]``.

Settings come from built-in defaults, then an optional INI file
(``--config``; any section names, keys must be unique), then command-line
flags.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure, 4 file or format error, 5 verification mismatch.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .cache import BasisCache
from .control import (
    ConvergenceError,
    GramianError,
    ObservabilityBreakdown,
    assemble_gramian,
    muntz_report,
    observability_sweep,
    steer_to_trajectory,
    synthesize_null_control,
    verify_null_control,
)
from .evolution import (
    ControlSignal,
    ModalState,
    TimeGrid,
    dual_normal_trace,
    solve_forward,
    trace_projection,
    write_trajectory_csv,
)
from .nonlocal_ops import exterior_gram, write_trace_csv
from .regions import ExteriorRegion, parse_region
from .report import SCHEMA, SCHEMA_VERSION, read_json, write_json
from .spectral import EigenSolveError, build_basis, eigenvalue_asymptotic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
EXIT_MISMATCH = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """All run settings; every field can be set in the config file."""

    s: float = 0.75
    horizon: float = 1.0
    grid: int = 1024
    modes: int = 20
    degree: int = 0              # 0 selects the default Jacobi degree
    method: str = "jacobi"
    region: str = "1.5:2.5"
    epsilon: str = "auto"        # "auto": 0 for s > 1/2, 1e-10 trace(G)/N otherwise
    cg_tol: float = 1e-12
    cg_maxiter: int = 0          # 0 selects 10 N
    initial: str = "mode:1"      # mode:K | random | zero | coeffs:c1,c2,...
    target: str = "none"         # none | same forms as initial
    source: float = 0.0          # amplitude of a time-constant indicator source on O (solve)
    seed: int = 0
    times: int = 11              # output times on [0, T]
    points: int = 21             # trace points per finite interval of O
    trace_times: str = ""        # dual trace times; empty = 0, T/4, T/2, 3T/4
    n_max: int = 10000
    sweep: str = "5,10,15,20"
    probes: int = 10
    out: str = "."
    cache: str = ""              # empty = <out>/cache

    def validate(self) -> "RunConfig":
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"s must lie in (0, 1), got {self.s}")
        if not self.horizon > 0.0 or not np.isfinite(self.horizon):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.grid < 8:
            raise ConfigError("grid must have at least 8 interior nodes")
        if self.modes < 1:
            raise ConfigError("modes must be at least 1")
        if self.method not in ("jacobi", "p1"):
            raise ConfigError(f"method must be jacobi or p1, got {self.method!r}")
        if self.method == "jacobi" and self.degree and self.degree + 1 < self.modes:
            raise ConfigError("degree too small for the requested modes")
        try:
            self.region_obj
        except ValueError as exc:
            raise ConfigError(f"region: {exc}") from None
        if self.epsilon != "auto":
            try:
                e = float(self.epsilon)
            except ValueError:
                raise ConfigError(f"epsilon must be 'auto' or a number, got {self.epsilon!r}") from None
            if not e >= 0.0:
                raise ConfigError("epsilon must be non-negative")
        if not self.cg_tol > 0.0:
            raise ConfigError("cg_tol must be positive")
        if self.cg_maxiter < 0 or self.times < 2 or self.points < 1 or self.probes < 1:
            raise ConfigError("cg_maxiter, times, points and probes must be positive")
        if self.n_max < 10:
            raise ConfigError("n_max must be at least 10")
        for spec in (self.initial, self.target):
            _check_state_spec(spec, self.modes)
        self.sweep_values
        self.trace_time_values
        return self

    @property
    def region_obj(self) -> ExteriorRegion:
        return parse_region(self.region)

    @property
    def sweep_values(self) -> list:
        try:
            v = sorted({int(x) for x in self.sweep.split(",") if x.strip()})
        except ValueError:
            raise ConfigError(f"sweep must be comma-separated integers, got {self.sweep!r}") from None
        if v and (v[0] < 1 or v[-1] > self.modes):
            raise ConfigError("sweep values must lie in [1, modes]")
        return v

    @property
    def trace_time_values(self) -> list:
        if not self.trace_times.strip():
            return [0.0, 0.25 * self.horizon, 0.5 * self.horizon, 0.75 * self.horizon]
        try:
            v = [float(x) for x in self.trace_times.split(",") if x.strip()]
        except ValueError:
            raise ConfigError("trace_times must be comma-separated numbers") from None
        if any(not 0.0 <= t < self.horizon for t in v):
            raise ConfigError("trace times must lie in [0, horizon)")
        return v

    def epsilon_for(self, gram_trace: float, N: int) -> float:
        if self.epsilon == "auto":
            return 0.0 if self.s > 0.5 else 1e-10 * gram_trace / N
        return float(self.epsilon)


def _check_state_spec(spec: str, N: int) -> None:
    kind, _, arg = spec.partition(":")
    if kind in ("none", "zero", "random") and not arg:
        return
    if kind == "mode":
        try:
            k = int(arg)
        except ValueError:
            raise ConfigError(f"bad mode index in {spec!r}") from None
        if not 1 <= k <= N:
            raise ConfigError(f"mode index must lie in [1, {N}]")
        return
    if kind == "coeffs":
        try:
            c = [float(x) for x in arg.split(",")]
        except ValueError:
            raise ConfigError(f"bad coefficients in {spec!r}") from None
        if len(c) > N:
            raise ConfigError("more coefficients than modes")
        return
    raise ConfigError(f"state must be mode:K, random, zero or coeffs:..., got {spec!r}")


def state_from_spec(spec: str, N: int, rng: np.random.Generator) -> ModalState | None:
    kind, _, arg = spec.partition(":")
    if kind == "none":
        return None
    c = np.zeros(N)
    if kind == "mode":
        c[int(arg) - 1] = 1.0
    elif kind == "random":
        c = rng.standard_normal(N)
        c /= np.linalg.norm(c)
    elif kind == "coeffs":
        v = [float(x) for x in arg.split(",")]
        c[: len(v)] = v
    return ModalState(0.0, c)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, raw) -> object:
    kind = _FIELD_TYPES[name]
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None
    return str(raw)


def load_config(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config {path}: {exc.message.splitlines()[0]}") from None
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.replace("-", "_")
            if name not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            if name in out:
                raise ConfigError(f"config key {key!r} set twice")
            out[name] = _coerce(name, value)
    return out


# ------------------------------------------------------------ helpers

def _open_cache(cfg: RunConfig) -> BasisCache:
    d = Path(cfg.cache) if cfg.cache else Path(cfg.out) / "cache"
    return BasisCache(d)


def _basis(cfg: RunConfig):
    return build_basis(cfg.s, cfg.modes, grid=cfg.grid, method=cfg.method,
                       degree=cfg.degree or None, cache=_open_cache(cfg))


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _g(v: float) -> str:
    return f"{float(v):.17g}"


# ----------------------------------------------------------- commands

def cmd_eigen(cfg: RunConfig) -> int:
    b = _basis(cfg)
    n = np.arange(1, b.count + 1)
    asym = eigenvalue_asymptotic(n, cfg.s)
    with open(_out(cfg, "eigenvalues.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "lambda_n", "lambda_asymptotic", "abs_difference"])
        for k, lam, la in zip(n, b.eigenvalues, asym):
            wr.writerow([int(k), _g(lam), _g(la), _g(abs(lam - la))])
    return EXIT_OK


def _region_points(region: ExteriorRegion, per_interval: int) -> np.ndarray:
    pts = []
    for a, b in region.intervals:
        af = a if np.isfinite(a) else b - 10.0
        bf = b if np.isfinite(b) else a + 10.0
        # interior points only, so intervals touching +-1 stay valid
        pts.append(np.linspace(af, bf, per_interval + 2)[1:-1])
    return np.concatenate(pts)


def cmd_trace(cfg: RunConfig) -> int:
    b = _basis(cfg)
    write_trace_csv(_out(cfg, "traces.csv"), b, _region_points(cfg.region_obj, cfg.points))
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    b = _basis(cfg)
    rng = np.random.default_rng(cfg.seed)
    u0 = state_from_spec(cfg.initial, cfg.modes, rng) or ModalState(0.0, np.zeros(cfg.modes))
    g = None
    if cfg.source != 0.0:
        amp = cfg.source
        prof = lambda x: np.full((np.size(x), 1), amp)  # noqa: E731
        proj = trace_projection(prof, cfg.region_obj, b)
        g = ControlSignal(cfg.region_obj, prof, TimeGrid.uniform(cfg.horizon), np.ones((1, 1, 1)),
                          projection=proj)
    times = np.linspace(0.0, cfg.horizon, cfg.times)
    states = [solve_forward(u0, g, b, t) for t in times]
    write_trajectory_csv(_out(cfg, "trajectory.csv"), states)
    return EXIT_OK


def cmd_dual(cfg: RunConfig) -> int:
    b = _basis(cfg)
    rng = np.random.default_rng(cfg.seed)
    psi = state_from_spec(cfg.initial, cfg.modes, rng) or ModalState(0.0, np.zeros(cfg.modes))
    psi0 = ModalState(cfg.horizon, psi.coefficients)
    xs = _region_points(cfg.region_obj, cfg.points)
    with open(_out(cfg, "dual_trace.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "x", "N_s_psi", "remainder_estimate"])
        for t in cfg.trace_time_values:
            d = dual_normal_trace(psi0, b, t, xs)
            for x, v in zip(xs, d.values):
                wr.writerow([_g(t), _g(x), _g(v), _g(d.remainder)])
    return EXIT_OK


def cmd_muntz(cfg: RunConfig) -> int:
    m = muntz_report(cfg.s, cfg.n_max)
    with open(_out(cfg, "muntz.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["N", "S_N"])
        for N, S in zip(m.checkpoints, m.partial_sums):
            wr.writerow([int(N), _g(S)])
    write_json(_out(cfg, "muntz.json"), {
        "s": m.s, "N_max": m.N_max, "verdict": m.verdict,
        "tail_model": m.tail_model, "fit_coefficient": m.fit_coefficient,
    })
    return EXIT_OK


def _control_report(cfg: RunConfig, basis) -> tuple[dict, list]:
    region = cfg.region_obj
    N = cfg.modes
    rng = np.random.default_rng(cfg.seed)
    u0 = state_from_spec(cfg.initial, N, rng) or ModalState(0.0, np.zeros(N))
    target = state_from_spec(cfg.target, N, rng)
    kappa = exterior_gram(basis, region)
    gram = assemble_gramian(basis, region, cfg.horizon, kappa=kappa)
    eps = cfg.epsilon_for(float(np.trace(gram.matrix)), N)
    kw = dict(gramian=gram, epsilon=eps, tol=cfg.cg_tol, maxiter=cfg.cg_maxiter or None)
    if target is None:
        res = synthesize_null_control(u0, basis, region, cfg.horizon, **kw)
    else:
        res = steer_to_trajectory(u0, target, basis, region, cfg.horizon, **kw)
    ver = verify_null_control(res, basis, probes=cfg.probes, seed=cfg.seed)
    m = muntz_report(cfg.s, cfg.n_max)
    sweep = cfg.sweep_values
    costs, consts = {}, {}
    if sweep:
        obs = observability_sweep(basis, region, cfg.horizon, sweep, None if cfg.epsilon == "auto" else eps,
                                  kappa=kappa)
        consts = {str(k): v for k, v in obs["C"].items()}
        for n in sweep:
            g_n = assemble_gramian(basis, region, cfg.horizon, n, kappa=kappa)
            u_n = ModalState(0.0, u0.coefficients[:n])
            t_n = None if target is None else ModalState(0.0, target.coefficients[:n])
            kw_n = dict(gramian=g_n, epsilon=obs["epsilon"], tol=cfg.cg_tol)
            r_n = (synthesize_null_control(u_n, basis, region, cfg.horizon, **kw_n) if t_n is None
                   else steer_to_trajectory(u_n, t_n, basis, region, cfg.horizon, **kw_n))
            costs[str(n)] = r_n.cost_l2
    cost_values = [costs[k] for k in costs]
    trend = "rising" if len(cost_values) > 1 and all(np.diff(cost_values) > 0) else "not monotone"
    report = {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "s": cfg.s,
        "T": cfg.horizon,
        "region": str(region),
        "N": N,
        "grid": cfg.grid,
        "method": cfg.method,
        "degree": basis.degree,
        "seed": cfg.seed,
        "epsilon": eps,
        "regularized": eps > 0.0,
        "initial": u0.coefficients,
        "target": None if target is None else target.coefficients,
        "eigenvalues": gram.eigenvalues,
        "eta": float(np.sqrt(np.min(np.diag(kappa)))),
        "kappa": kappa,
        "gramian_condition": gram.condition(),
        "psi0": res.system.solution,
        "cg": {
            "tolerance": cfg.cg_tol,
            "max_iterations": cfg.cg_maxiter or 10 * N,
            "iterations": res.system.iterations,
            "relative_residual": res.system.residual,
            "converged": res.system.converged,
        },
        "terminal_state": res.terminal.coefficients,
        "terminal_defect": res.defect,
        "control_cost_L2": res.cost_l2,
        "control_cost_gagliardo": res.cost_gagliardo(basis),
        "verification": {
            "closed_loop_error": ver.closed_loop_error,
            "duality_residual_max": float(np.max(ver.duality_residuals)),
        },
        "cost_sweep": costs,
        "cost_trend": trend,
        "observability_constants": consts,
        "muntz_partial_sums": {
            "N": m.checkpoints, "S": m.partial_sums, "verdict": m.verdict,
            "tail_model": m.tail_model, "fit_coefficient": m.fit_coefficient,
        },
    }
    times = np.linspace(0.0, cfg.horizon, cfg.times)
    states = [solve_forward(res.initial, res.control, basis, t) for t in times]
    return report, states


def cmd_control(cfg: RunConfig) -> int:
    basis = _basis(cfg)
    report, states = _control_report(cfg, basis)
    write_json(_out(cfg, "report.json"), report)
    write_trajectory_csv(_out(cfg, "trajectory.csv"), states)
    return EXIT_OK


def verify_report(data: dict, *, defect_tol: float = 1e-12, duality_tol: float = 1e-8) -> list:
    """Re-derive a report's terminal state, defect and duality residuals; list mismatches."""
    if data.get("schema") != SCHEMA or data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("not a control report of a supported schema version")
    lam = np.asarray(data["eigenvalues"], dtype=float)
    kappa = np.asarray(data["kappa"], dtype=float)
    psi = np.asarray(data["psi0"], dtype=float)
    u0 = np.asarray(data["initial"], dtype=float)
    T = float(data["T"])
    region = parse_region(data["region"])
    N = lam.size
    if kappa.shape != (N, N) or psi.size != N or u0.size != N:
        raise ValueError("report arrays have inconsistent sizes")

    def no_profiles(x):
        raise RuntimeError("profiles are not stored in a report")

    signal = ControlSignal(region, no_profiles, TimeGrid.uniform(T), psi.reshape(1, N, 1), lam, kappa)
    uT = solve_forward(ModalState(0.0, u0), signal, lam, T).coefficients
    decay = np.exp(-lam * T)
    if data.get("target") is None:
        tgt = np.zeros(N)
        den = float(np.linalg.norm(u0 * decay))
    else:
        tgt = np.asarray(data["target"], dtype=float) * decay
        den = float(np.linalg.norm(tgt))
    num = float(np.linalg.norm(uT - tgt))
    defect = num / den if den > 0.0 else (0.0 if num == 0.0 else np.inf)
    problems = []
    if abs(defect - float(data["terminal_defect"])) > defect_tol * max(1.0, abs(defect)):
        problems.append(f"terminal_defect: stored {float(data['terminal_defect']):.17g}, "
                        f"recomputed {defect:.17g}")
    stored_uT = np.asarray(data["terminal_state"], dtype=float)
    if stored_uT.shape != uT.shape or not np.array_equal(stored_uT, uT):
        problems.append("terminal_state differs from the re-simulated state")
    L = lam[:, None] + lam[None, :]
    G = kappa * (-np.expm1(-L * T) / L)
    G = 0.5 * (G + G.T)
    rng = np.random.default_rng(int(data.get("seed", 0)))
    worst = 0.0
    for _ in range(10):
        ph = rng.standard_normal(N)
        a = float(u0 @ (ph * decay))
        b = float(uT @ ph)
        c = float(psi @ (G @ ph))
        worst = max(worst, abs(a - b - c) / max(abs(a), abs(b), abs(c), np.finfo(float).tiny))
    if worst > duality_tol:
        problems.append(f"duality residual {worst:.3e} exceeds {duality_tol:.1e}")
    return problems


def cmd_verify(path) -> int:
    try:
        data = read_json(path)
    except OSError as exc:
        print(f"fracheat: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fracheat: {path} is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        problems = verify_report(data)
    except (KeyError, ValueError, TypeError) as exc:
        print(f"fracheat: malformed report {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return EXIT_MISMATCH
    print(f"PASS {path}")
    return EXIT_OK


COMMANDS = {
    "eigen": cmd_eigen,
    "trace": cmd_trace,
    "solve": cmd_solve,
    "dual": cmd_dual,
    "control": cmd_control,
    "muntz": cmd_muntz,
}


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    p = argparse.ArgumentParser(
        prog="fracheat",
        description="Spectral solver and exterior null control for the fractional heat equation on (-1, 1).",
        epilog="Exit codes: 0 ok, 2 invalid configuration, 3 numerical failure, "
               "4 file/format error, 5 verification mismatch.",
    )
    p.add_argument("command", choices=[*COMMANDS, "verify"])
    p.add_argument("report", nargs="?", help="report.json to check (verify only)")
    p.add_argument("--config", help="INI file with key = value settings (see configs/fracheat.ini)")
    p.add_argument("--out", help=f"output directory (default {d.out!r})")
    p.add_argument("--cache", help="eigenpair cache directory (default <out>/cache)")
    p.add_argument("--seed", type=int, help=f"seed for random states and probes (default {d.seed})")
    p.add_argument("--modes", type=int, help=f"number of modes N (default {d.modes})")
    p.add_argument("--s", type=float, help=f"fractional order in (0, 1) (default {d.s})")
    p.add_argument("--horizon", type=float, help=f"final time T (default {d.horizon})")
    p.add_argument("--region", help=f'control region "a:b[,c:d]" (default {d.region!r})')
    return p


def resolve_config(args) -> RunConfig:
    values = load_config(args.config) if args.config else {}
    for name in ("out", "cache", "seed", "modes", "s", "horizon", "region"):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    return replace(RunConfig(), **values).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        if not args.report:
            print("fracheat: config error: verify needs a report path", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_verify(args.report)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"fracheat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"fracheat: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](cfg)
    except (EigenSolveError, GramianError, ObservabilityBreakdown, ConvergenceError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fracheat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"fracheat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fracheat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
