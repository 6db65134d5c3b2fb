from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracheat.approx import (
    ApproxEigenfunction,
    F_alpha,
    gamma_density,
    gamma_density_quad,
    laplace_G,
    laplace_G_adaptive,
    q_profile,
    rho,
)
from fracheat.nonlocal_ops import SampledFunction, bilinear_form
from fracheat.spectral import (
    Grid,
    assemble_mass,
    assemble_stiffness,
    build_basis,
    default_degree,
    eigen_solve,
    eigenvalue_asymptotic,
    mu,
    normalization_constant,
)

orders = st.floats(min_value=0.05, max_value=0.95)


# ------------------------------------------------------------- constants

@pytest.mark.parametrize("s", [0.2, 0.5, 0.75, 0.9])
def test_normalization_constant_matches_fourier_symbol(s):
    # (-Lap)^s e^{ix} = e^{ix} forces C_s * int (1 - cos t) |t|^{-1-2s} dt = 1
    f = lambda t: 0.5 * np.sinc(t / (2.0 * np.pi)) ** 2  # (1 - cos t) / t^2
    head = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(1.0 - 2.0 * s, 0.0), epsabs=0, epsrel=1e-13)[0]
    tail = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf)[0]
    osc = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf, weight="cos", wvar=1.0)[0]
    assert normalization_constant(s) * 2.0 * (head + tail - osc) == pytest.approx(1.0, rel=1e-9)


def test_normalization_constant_reference_values():
    assert normalization_constant(0.5) == pytest.approx(1.0 / np.pi, rel=1e-15)
    assert normalization_constant(0.9) == pytest.approx(0.16491, rel=1e-3)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_normalization_constant_rejects_bad_orders(s):
    with pytest.raises(ValueError):
        normalization_constant(s)


def test_asymptotic_reference_values():
    assert eigenvalue_asymptotic(10, 0.75) == pytest.approx(61.09, abs=0.01)
    assert eigenvalue_asymptotic(1, 0.5) == pytest.approx(3 * np.pi / 8, rel=1e-15)
    # classical Dirichlet eigenvalues on (-1, 1) when s = 1
    n = np.arange(1, 6)
    np.testing.assert_allclose(eigenvalue_asymptotic(n, 1.0), (n * np.pi / 2) ** 2, rtol=1e-15)


@given(st.integers(1, 10**6), orders)
def test_asymptotic_equals_shifted_frequency_power(n, s):
    assert eigenvalue_asymptotic(n, s) == pytest.approx(mu(n, s) ** (2 * s), rel=4e-15)


@given(st.integers(1, 10**5), orders)
def test_asymptotic_strictly_increasing(n, s):
    assert eigenvalue_asymptotic(n + 1, s) > eigenvalue_asymptotic(n, s) > 0


def test_asymptotic_rejects_index_zero():
    with pytest.raises(ValueError):
        eigenvalue_asymptotic(0, 0.5)


# ------------------------------------------------------------------ grid

def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([-1.0, 1.0]))
    with pytest.raises(ValueError):
        Grid(np.array([-1.0, 0.5, 0.2, 1.0]))
    with pytest.raises(ValueError):
        Grid(np.array([-0.9, 0.0, 1.0]))
    g = Grid(np.array([-1.0, -0.5, 0.3, 1.0]))
    assert g.h == pytest.approx(0.8)
    assert g.n_interior == 2


# ------------------------------------------------------------ P1 Galerkin

@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_p1_stiffness_symmetric_positive_definite(s):
    A = assemble_stiffness(Grid.uniform(40), s)
    np.testing.assert_allclose(A, A.T, atol=0, rtol=1e-14)
    assert np.linalg.eigvalsh(A)[0] > 0


def test_p1_nine_nodes_first_eigenvalue_near_asymptotic():
    g = Grid.uniform(9)
    pairs = eigen_solve(assemble_stiffness(g, 0.5), assemble_mass(g), 1)
    assert abs(pairs.values[0] / (3 * np.pi / 8) - 1.0) < 0.25


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_p1_stiffness_matches_panel_quadrature(s):
    g = Grid.uniform(7)
    A = assemble_stiffness(g, s)
    hats = [SampledFunction(g, np.eye(9)[i], interpolation="linear") for i in (1, 3, 4)]
    for a, i in zip(hats, (1, 3, 4)):
        for b, j in zip(hats, (1, 3, 4)):
            assert bilinear_form(a, b, s) == pytest.approx(A[i - 1, j - 1], rel=1e-7, abs=1e-9)


def test_p1_eigenvalues_decrease_under_refinement():
    prev = None
    for n in (31, 63, 127):
        b = build_basis(0.6, 4, grid=n, method="p1")
        if prev is not None:
            assert np.all(b.eigenvalues < prev)
        prev = b.eigenvalues


def test_p1_approaches_jacobi_eigenvalues():
    ref = build_basis(0.6, 3, grid=255).eigenvalues
    p1 = build_basis(0.6, 3, grid=255, method="p1").eigenvalues
    np.testing.assert_allclose(p1, ref, rtol=5e-3)


# -------------------------------------------------------- Jacobi default

def test_first_eigenvalues_literature_values():
    assert build_basis(0.5, 1).eigenvalues[0] == pytest.approx(1.1577738836977, rel=1e-10)
    assert build_basis(0.75, 1).eigenvalues[0] == pytest.approx(1.5975035, rel=1e-7)


def test_default_degree():
    assert default_degree(8) == 96
    assert default_degree(20) == 144
    assert default_degree(2) == 72


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_basis_is_orthonormal_and_sorted(s):
    b = build_basis(s, 12, grid=256)
    np.testing.assert_allclose(b.l2_gram(), np.eye(12), atol=1e-11)
    assert np.all(np.diff(b.eigenvalues) > 0)
    assert np.all(b.eigenvalues > 0)


def test_sample_endpoints_vanish_and_parity(basis34_small):
    b = basis34_small
    assert np.all(b.samples[:, 0] == 0) and np.all(b.samples[:, -1] == 0)
    x = np.linspace(0.05, 0.95, 9)
    P, M = b.evaluate(x), b.evaluate(-x)
    for k in range(6):
        sign = 1.0 if k % 2 == 0 else -1.0
        np.testing.assert_allclose(M[:, k], sign * P[:, k], atol=1e-12)


def test_signs_align_with_approximants(basis34_small):
    x = np.linspace(-0.99, 0.99, 401)
    P = basis34_small.evaluate(x)
    for k in range(1, 11):
        assert P[:, k - 1] @ rho(k, x, 0.75) > 0


def test_eigen_identity_residual_small_and_shrinks_with_degree(basis34_small):
    x = np.linspace(-0.95, 0.95, 17)
    b = basis34_small
    res = np.abs(b.frac_laplacian_interior(x) - b.evaluate(x) * b.eigenvalues).max(axis=0)
    assert np.all(res < 2e-6 * b.eigenvalues)
    fine = build_basis(0.75, 1, grid=512, degree=2 * b.degree)
    res_fine = np.abs(fine.frac_laplacian_interior(x)[:, 0] - fine.evaluate(x)[:, 0] * fine.eigenvalues[0]).max()
    assert res_fine < res[0] / 2


def test_truncate_and_evaluate_outside(basis34_small):
    t = basis34_small.truncate(5)
    assert t.count == 5
    assert np.all(t.evaluate([-2.0, 1.0, 3.0]) == 0)
    with pytest.raises(ValueError):
        basis34_small.truncate(21)


def test_trace_rejects_interior_points(basis34_small):
    with pytest.raises(ValueError):
        basis34_small.trace([0.5])


def test_mode_count_validation():
    with pytest.raises(ValueError):
        build_basis(0.5, 0)
    with pytest.raises(ValueError):
        build_basis(0.5, 4, method="fem")


# --------------------------------------------------------- approximants

def test_q_profile_values():
    assert q_profile(-1.0) == 0.0
    assert q_profile(1.0) == 1.0
    assert q_profile(0.0) == pytest.approx(0.5)
    assert q_profile(1.0 / 6.0) == pytest.approx(7.0 / 8.0)


@pytest.mark.parametrize("x0", [-1.0 / 3.0, 0.0, 1.0 / 3.0])
def test_q_profile_is_c1(x0):
    e = 1e-7
    left = (q_profile(x0) - q_profile(x0 - e)) / e
    right = (q_profile(x0 + e) - q_profile(x0)) / e
    assert abs(q_profile(x0 + e) - q_profile(x0 - e)) < 1e-6
    assert left == pytest.approx(right, abs=1e-5)


@given(st.floats(-2.0, 2.0))
def test_q_profile_partition_of_unity(x):
    assert q_profile(x) + q_profile(-x) == pytest.approx(1.0, abs=1e-14)
    assert 0.0 <= q_profile(x) <= 1.0


@given(st.integers(1, 12), st.floats(0.1, 0.9), st.floats(1.0, 5.0))
@settings(max_examples=30, deadline=None)
def test_rho_vanishes_outside_interval(k, s, x):
    assert rho(k, x, s) == 0.0
    assert rho(k, -x, s) == 0.0


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_laplace_transform_at_zero(s):
    assert laplace_G(np.array([0.0]), s)[0] == pytest.approx(np.sin((1 - s) * np.pi / 4), abs=1e-12)


@pytest.mark.parametrize("s", [0.25, 0.75])
def test_laplace_transform_cross_scheme(s):
    x = np.array([0.3, 1.0, 4.0])
    fast = laplace_G(x, s)
    for xi, f in zip(x, fast):
        assert f == pytest.approx(laplace_G_adaptive(xi, s), rel=1e-10)


def test_laplace_transform_positive_decreasing():
    x = np.linspace(0.0, 30.0, 61)
    G = laplace_G(x, 0.6)
    assert np.all(G > 0)
    assert np.all(np.diff(G) < 0)


def test_gamma_density_cross_scheme():
    y = np.array([0.2, 0.9, 1.7])
    fast = gamma_density(y, 0.75)
    for yi, f in zip(y, fast):
        assert f == pytest.approx(gamma_density_quad(yi, 0.75, rtol=1e-11), rel=1e-8)


def test_half_line_profile_zero_on_left():
    assert F_alpha(-0.5, 2.0, 0.75) == 0.0
    a = ApproxEigenfunction.build(3, 0.75)
    assert a.mu == pytest.approx(mu(3, 0.75))
    assert a(0.2) == rho(3, 0.2, 0.75)
