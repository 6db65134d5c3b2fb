from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracheat.evolution import (
    ControlSignal,
    ModalState,
    TimeGrid,
    dual_normal_trace,
    duality_residual,
    solve_dirichlet,
    solve_dual,
    solve_forward,
    trace_projection,
    write_trajectory_csv,
)
from fracheat.nonlocal_ops import ExteriorProfile, frac_laplacian_pv
from fracheat.regions import parse_region
from fracheat.spectral import build_basis

S = 0.75
N = 20
O = parse_region("1.5:2.5")


def two_profiles(x):
    return np.stack([np.sin(x), np.exp(-x)], axis=1)


@pytest.fixture(scope="module")
def basis():
    return build_basis(S, N, grid=512)


@pytest.fixture(scope="module")
def proj(basis):
    return trace_projection(two_profiles, O, basis)


def signal(rng, proj, segments=4, degree=2, rates=(0.0, 3.0)):
    return ControlSignal(O, two_profiles, TimeGrid.uniform(1.0, segments),
                         rng.standard_normal((segments, 2, degree + 1)), rates, proj)


coeffs = st.lists(st.floats(-5, 5), min_size=N, max_size=N).map(np.array)


# --------------------------------------------------------------- containers

def test_modal_state_validation():
    with pytest.raises(ValueError):
        ModalState(0.0, [1.0, np.nan])
    with pytest.raises(ValueError):
        ModalState(np.inf, [1.0])
    m = ModalState.mode(3, 5)
    assert m.norm() == 1.0 and m.coefficients[2] == 1.0 and m.size == 5


@pytest.mark.parametrize("bp", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5], [0.0, np.inf]])
def test_time_grid_validation(bp):
    with pytest.raises(ValueError):
        TimeGrid(np.array(bp))


def test_control_signal_shape_checks(proj):
    tg = TimeGrid.uniform(1.0, 2)
    with pytest.raises(ValueError):
        ControlSignal(O, two_profiles, tg, np.zeros((3, 2, 1)))
    with pytest.raises(ValueError):
        ControlSignal(O, two_profiles, tg, np.zeros((2, 2, 1)), rates=[1.0, -1.0])
    with pytest.raises(ValueError):
        ControlSignal(O, two_profiles, tg, np.zeros((2, 2, 1)), projection=np.zeros((3, N)))


def test_control_signal_evaluation():
    g = ControlSignal(O, two_profiles, TimeGrid.uniform(1.0, 2), np.array([[[1.0, 2.0], [0.0, 0.0]],
                                                                            [[3.0, 0.0], [0.0, 1.0]]]),
                      rates=[0.5, 0.0])
    c = g.time_coefficients([0.25, 0.75, 1.5])
    assert c[0, 0] == pytest.approx((1.0 + 2.0 * 0.25) * np.exp(-0.5 * 0.75))
    assert c[1, 1] == pytest.approx(0.25)
    assert np.all(c[2] == 0.0)
    vals = g(np.array([0.0, 2.0]), [0.25])
    assert vals[0, 0] == 0.0
    assert vals[1, 0] == pytest.approx(np.sin(2.0) * c[0, 0])


# ------------------------------------------------------------ forward solve

def test_uncontrolled_decay_closed_form(basis):
    u = solve_forward(ModalState.mode(2, N), None, basis, 0.3)
    assert u.coefficients[1] == pytest.approx(np.exp(-basis.eigenvalues[1] * 0.3), rel=1e-15)


@given(coeffs, st.floats(0.0, 0.5), st.floats(0.0, 0.5))
@settings(max_examples=25, deadline=None)
def test_semigroup_property(basis, proj, c, t1, t2):
    g = signal(np.random.default_rng(7), proj)
    u0 = ModalState(0.0, c)
    direct = solve_forward(u0, g, basis, t1 + t2)
    stepped = solve_forward(solve_forward(u0, g, basis, t1), g, basis, t1 + t2)
    scale = 1.0 + np.abs(direct.coefficients).max()
    np.testing.assert_allclose(stepped.coefficients, direct.coefficients, atol=1e-12 * scale)


@given(coeffs, st.floats(0.01, 1.0))
@settings(max_examples=25, deadline=None)
def test_uncontrolled_norm_decreases(basis, c, t):
    u0 = ModalState(0.0, c)
    u = solve_forward(u0, None, basis, t)
    assert u.norm() <= np.exp(-basis.eigenvalues[0] * t) * u0.norm() * (1 + 1e-14)


@given(coeffs, coeffs, st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_forward_map_is_affine_linear(basis, proj, a, b, k):
    rng = np.random.default_rng(11)
    g1, g2 = signal(rng, proj), signal(rng, proj)
    g12 = ControlSignal(O, two_profiles, g1.time_grid, g1.coefficients + k * g2.coefficients,
                        g1.rates, proj)
    lhs = solve_forward(ModalState(0.0, a + k * b), g12, basis, 1.0).coefficients
    rhs = (solve_forward(ModalState(0.0, a), g1, basis, 1.0).coefficients
           + k * solve_forward(ModalState(0.0, b), g2, basis, 1.0).coefficients)
    np.testing.assert_allclose(lhs, rhs, atol=1e-11 * (1 + np.abs(lhs).max()))


def test_forward_against_duhamel_quadrature(basis, proj):
    g = signal(np.random.default_rng(1), proj)
    t = 0.7
    u = solve_forward(ModalState(0.0, np.zeros(N)), g, basis, t)
    lam = basis.eigenvalues
    for n in (0, 5, 19):
        f = lambda tau: -(g.time_coefficients(tau)[0] @ proj[:, n]) * np.exp(-lam[n] * (t - tau))
        ref = integrate.quad(f, 0.0, t, points=[0.25, 0.5], epsabs=0, epsrel=1e-13, limit=200)[0]
        assert u.coefficients[n] == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_constant_profile_closed_form(basis):
    p = lambda x: np.exp(-x)[:, None]
    g = ControlSignal(O, p, TimeGrid.uniform(1.0), np.ones((1, 1, 1)))
    uT = solve_forward(ModalState(0.0, np.zeros(N)), g, basis, 1.0)
    P = trace_projection(p, O, basis)[0]
    lam = basis.eigenvalues
    np.testing.assert_allclose(uT.coefficients, -P * (-np.expm1(-lam)) / lam, rtol=1e-13, atol=1e-17)


def test_projection_matches_quadrature(basis, proj):
    ref = integrate.quad(lambda x: np.sin(x) * basis.trace([x])[0, 3], 1.5, 2.5, epsrel=1e-12)[0]
    assert proj[0, 3] == pytest.approx(ref, rel=1e-10)


def test_positive_exterior_source_raises_first_mode(basis):
    g = ControlSignal(O, lambda x: np.ones((x.size, 1)), TimeGrid.uniform(1.0), np.ones((1, 1, 1)))
    assert solve_forward(ModalState(0.0, np.zeros(N)), g, basis, 1.0).coefficients[0] > 0


def test_forward_time_checks(basis, proj):
    g = signal(np.random.default_rng(0), proj)
    with pytest.raises(ValueError):
        solve_forward(ModalState(0.5, np.zeros(N)), g, basis, 0.2)
    with pytest.raises(ValueError):
        solve_forward(ModalState(0.0, np.zeros(N)), g, basis, 1.5)
    with pytest.raises(ValueError):
        solve_forward(ModalState(0.0, np.zeros(3)), None, basis, 0.5)


# --------------------------------------------------------------- dual solve

@given(coeffs, st.floats(0.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_dual_norm_bounded_by_terminal(basis, c, t):
    psi0 = ModalState(1.0, c)
    psi = solve_dual(psi0, basis, t)
    assert psi.norm() <= psi0.norm() * (1 + 1e-14)
    assert psi.t == t


def test_dual_trace_rejects_terminal_time(basis):
    with pytest.raises(ValueError):
        dual_normal_trace(ModalState(1.0, np.ones(N)), basis, 1.0, [2.0])


def test_dual_trace_stable_under_more_modes():
    b40 = build_basis(S, 40, grid=512)
    c = np.random.default_rng(2).standard_normal(40) * np.exp(-0.2 * np.arange(40))
    x = np.array([1.5, 2.0, 2.5])
    d20 = dual_normal_trace(ModalState(1.0, c[:20]), b40.truncate(20), 0.5, x)
    d40 = dual_normal_trace(ModalState(1.0, c), b40, 0.5, x)
    assert d20.within_tolerance
    np.testing.assert_allclose(d20.values, d40.values, atol=1e-8)


# ------------------------------------------------------------- Dirichlet data

def test_dirichlet_zero_data_gives_zero():
    v = solve_dirichlet(ExteriorProfile(lambda x: 0.0 * x, O), S, grid=128)
    assert np.all(v.values == 0.0)


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_dirichlet_nonnegative_data_gives_nonnegative_harmonic_function(s):
    v = solve_dirichlet(ExteriorProfile(lambda x: np.exp(-8 * (x - 2) ** 2), O), s, grid=256)
    assert v.values.min() >= -1e-14
    assert v.values[1:-1].max() > 0
    x = np.linspace(-0.8, 0.8, 7)
    assert np.abs(frac_laplacian_pv(v, x, s)).max() < 1e-5 * np.abs(v(x)).max()


# ------------------------------------------------------------------ duality

def test_duality_with_zero_control_is_exact(basis):
    rng = np.random.default_rng(3)
    r = duality_residual(ModalState(0.0, rng.standard_normal(N)), None,
                         ModalState(1.0, rng.standard_normal(N)), basis)
    assert r < 1e-14


@given(st.floats(0.1, 1e3))
@settings(max_examples=10, deadline=None)
def test_duality_relative_residual_scale_invariant(basis, proj, k):
    rng = np.random.default_rng(5)
    u0 = ModalState(0.0, rng.standard_normal(N))
    psi = ModalState(1.0, rng.standard_normal(N))
    g = signal(rng, proj)
    r1 = duality_residual(u0, g, psi, basis, relative=True)
    rk = duality_residual(ModalState(0.0, k * u0.coefficients), g.scaled(k), psi, basis, relative=True)
    assert r1 < 1e-12 and rk < 1e-12


# ---------------------------------------------------------------------- io

def test_trajectory_csv_round_trip(tmp_path, basis):
    states = [solve_forward(ModalState(0.0, np.arange(1.0, N + 1)), None, basis, t) for t in (0.0, 0.5)]
    x = np.array([0.5, -0.25])
    write_trajectory_csv(tmp_path / "traj.csv", states, basis, x)
    with open(tmp_path / "traj.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "n", "u_n"]
    vals = np.array([float(r[2]) for r in rows[1:2 * N + 1]]).reshape(2, N)
    np.testing.assert_array_equal(vals, [s.coefficients for s in states])
    k = rows.index(["t", "x", "u"])
    pts = np.array([[float(v) for v in r] for r in rows[k + 1:]])
    np.testing.assert_array_equal(pts[:2, 1], np.sort(x))
    np.testing.assert_array_equal(pts[:2, 2], basis.evaluate(np.sort(x)) @ states[0].coefficients)
