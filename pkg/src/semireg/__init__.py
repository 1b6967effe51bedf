"""Regularity of degenerate diffusion semigroups on the unit cube.

Polynomial coefficient systems, their regularity constants, the drift flow
and its variational equations, 1D and tensorized diffusion propagators, Monte
Carlo and Trotter evaluation of the full semigroup, and empirical
certification of the C^m bounds.
"""

__version__ = "0.1.0"

from .coeffs import (BUILTINS, CoefficientSystem, CosineProduct, PolyExpr, PolyFunction,
                     PolySyntaxError, TestFunction, ValidationReport, Violation, as_test_function,
                     builtin, format_poly, mean_function, multiindices, named_function, parse_poly,
                     partial, validate)
from .constants import ConstantsReport, bound_factor, cm_norm, compute_constants, sup_norm
from .diffusion1d import (Propagator1D, check_nu_bounds, check_resolvent, propagate_1d,
                          resolvent_solve, simulate_1d)
from .drift_flow import FlowResult, apply_T1, check_gronwall, flow
from .grid import GridFunction, GridSpec
from .noise import NoiseStream
from .semigroup import (CertificateReport, certify, cm_norm_estimate, fd_derivative,
                        generator_apply, generator_consistency, mc_estimate, simulate_full,
                        trotter_compose)
from .tensor_diffusion import apply_T2_grid, check_mu_bound, simulate_nd_diffusion

__all__ = [
    "BUILTINS", "CertificateReport", "CoefficientSystem", "ConstantsReport", "CosineProduct",
    "FlowResult", "GridFunction", "GridSpec", "NoiseStream", "PolyExpr", "PolyFunction",
    "PolySyntaxError", "Propagator1D", "TestFunction", "ValidationReport", "Violation",
    "apply_T1", "apply_T2_grid", "as_test_function", "bound_factor", "builtin", "certify",
    "check_gronwall", "check_mu_bound", "check_nu_bounds", "check_resolvent", "cm_norm",
    "cm_norm_estimate", "compute_constants", "fd_derivative", "flow", "format_poly",
    "generator_apply", "generator_consistency", "mc_estimate", "mean_function", "multiindices",
    "named_function", "parse_poly", "partial", "propagate_1d", "resolvent_solve",
    "simulate_1d", "simulate_full", "simulate_nd_diffusion", "sup_norm", "trotter_compose",
    "validate",
]
