"""Numerics for 1/2-harmonic maps into spheres and their singular sets."""

__version__ = "0.1.0"

from .fields import (ConstantExterior, DomainError, FunctionExterior, GridSpec, SphereTarget,
                     VectorField, VortexExterior, analytic_vortex, constant_field,
                     gradient, gradient_norm, project_to_sphere, rescale_field)
from .quadrature import gamma_n
from .energy import (Ball, EnergyReport, MinimizeOptions, StagnationError, fractional_pairing,
                     h_half_seminorm, half_energy, minimize, sphere_el_residual,
                     weak_harmonic_test)
from .extension import (HalfField, HalfGridSpec, ResolutionError, density_curve,
                        monotonicity_audit, poisson_extend, theta_density, xi_density)
from .symmetry import (defect_profile, effective_span, quantitative_stratum, regularity_scale,
                       symmetrize, symmetry_defect)
from .reifenberg import (DiscreteMeasure, covering_tree, jones_beta, multiscale_beta_integral,
                         reifenberg_predicate, second_moment, vitali_subcover)

__all__ = [
    "ConstantExterior", "DomainError", "FunctionExterior", "GridSpec", "SphereTarget",
    "VectorField", "VortexExterior", "analytic_vortex", "constant_field", "gamma_n",
    "gradient", "gradient_norm", "project_to_sphere", "rescale_field",
    "Ball", "EnergyReport", "MinimizeOptions", "StagnationError", "fractional_pairing",
    "h_half_seminorm", "half_energy", "minimize", "sphere_el_residual", "weak_harmonic_test",
    "HalfField", "HalfGridSpec", "ResolutionError", "density_curve", "monotonicity_audit",
    "poisson_extend", "theta_density", "xi_density",
    "defect_profile", "effective_span", "quantitative_stratum", "regularity_scale",
    "symmetrize", "symmetry_defect",
    "DiscreteMeasure", "covering_tree", "jones_beta", "multiscale_beta_integral",
    "reifenberg_predicate", "second_moment", "vitali_subcover",
]
