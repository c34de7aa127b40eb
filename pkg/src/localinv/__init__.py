"""Certified local inversion of maps between finite-dimensional normed spaces.

The package certifies contraction-type properties of the auxiliary map
``x -> x - A(f(x) - y)`` on convex bodies, builds local inverse charts from
them, and uses the charts for implicit functions and level-set ODE solving.
"""

__version__ = "0.1.0"

from .tolerances import DEFAULT, Tolerances
from .spaces import (Annulus, Ball, DimensionMismatch, NormedSpaceModel, ProductBody, ProductSpace,
                     ball, characteristic_of_convexity, interval, modulus_of_convexity,
                     product_body)
from .maps import (DegenerateDerivative, LinearMap, MapModel, OutsideDomain, directional_derivative,
                   inverse_jacobian_map, jacobian, pair)
from .fixedpoint import (banach_iterate, grid_min_residual, km_iterate, probe_fixed_point_set)
from .cert import (Budgets, Classification, PropertyACertificate, ScaleProfile, TildeMap,
                   build_tilde, certify, certify_on_scales, estimate_lipschitz, pair_certificates)
from .inversion import (LocalInverseChart, build_chart, dense_scale_check, discreteness_probe,
                        hadamard_levy, inverse_derivative, invert, preimage_count,
                        segment_nondegeneracy_probe)
from .implicit import (ImplicitProblem, OdeProblem, build_F, f_from_g, implicit_derivative,
                       implicit_solve, ode_residual_check, ode_solve)
from .suite import get_problem, register_builtin, run_problem

__all__ = [
    "DEFAULT", "Tolerances", "Annulus", "Ball", "DimensionMismatch", "NormedSpaceModel",
    "ProductBody", "ProductSpace", "ball", "characteristic_of_convexity", "interval",
    "modulus_of_convexity", "product_body", "DegenerateDerivative", "LinearMap", "MapModel",
    "OutsideDomain", "directional_derivative", "inverse_jacobian_map", "jacobian", "pair",
    "banach_iterate", "grid_min_residual", "km_iterate", "probe_fixed_point_set", "Budgets",
    "Classification", "PropertyACertificate", "ScaleProfile", "TildeMap", "build_tilde",
    "certify", "certify_on_scales", "estimate_lipschitz", "pair_certificates",
    "LocalInverseChart", "build_chart", "dense_scale_check", "discreteness_probe",
    "hadamard_levy", "inverse_derivative", "invert", "preimage_count",
    "segment_nondegeneracy_probe", "ImplicitProblem", "OdeProblem", "build_F", "f_from_g",
    "implicit_derivative", "implicit_solve", "ode_residual_check", "ode_solve", "get_problem",
    "register_builtin", "run_problem",
    "__version__",
]
