"""Spectral solver and exterior null control for the fractional heat equation on (-1, 1)."""
from __future__ import annotations

from .spectral import (
    EigenSolveError,
    Grid,
    SpectralBasis,
    build_basis,
    eigenvalue_asymptotic,
    mu,
    normalization_constant,
)
from .approx import ApproxEigenfunction, F_alpha, gamma_density, laplace_G, q_profile, rho
from .regions import ExteriorRegion, parse_region
from .nonlocal_ops import (
    ExteriorProfile,
    SampledFunction,
    bilinear_form,
    exterior_gram,
    frac_laplacian_pv,
    gagliardo_seminorm,
    integration_by_parts_residual,
    lower_bound_eta,
    nonlocal_normal_derivative,
)
from .evolution import (
    ControlSignal,
    ModalState,
    TimeGrid,
    dual_normal_trace,
    duality_residual,
    solve_dirichlet,
    solve_dual,
    solve_forward,
)
from .control import (
    assemble_gramian,
    muntz_report,
    observability_constant_estimate,
    steer_to_trajectory,
    synthesize_null_control,
    verify_null_control,
)
from .cache import BasisCache

__version__ = "0.1.0"
