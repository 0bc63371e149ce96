"""Numerical verification toolkit for coordinate diffusion models.

The package builds weighted sequence spaces, checks structural
assumptions on drift/dispersion pairs, solves low-dimensional forward
equations on grids, simulates path ensembles, and cross-validates the
two routes against each other through separating families of test
functions.  A staged CLI (``fpklab``) wires the pieces into a
reproducible pipeline.
"""

from .coefficients import (AssumptionParams, CheckReport, CoefficientModel,
                           LyapunovData, SamplePlan, check_coercivity,
                           check_component_envelope, check_equicontinuity,
                           check_gauge_class, check_growth, check_lyapunov,
                           check_measure_uniform, check_symmetry_psd,
                           demicontinuity_profile, diffusion_matrix,
                           diffusion_matrix_block, shifted_square_lyapunov)
from .errors import (ConfigError, DimensionError, DivergenceError,
                     DomainTooSmallError, EvaluationError, FpkLabError,
                     GridMismatchError, SingularWeightError, StepSizeError,
                     TimeWindowError)
from .fpke import (GridSpec, coefficient_l1_mass, narrow_continuity_modulus,
                   solve_fpke_grid, solve_fpke_particle, weak_residual,
                   weak_residual_profile)
from .martingale import (MartingaleStat, PathEnsemble, PathFunctional,
                         energy_estimate, ensemble_flow, marginal,
                         martingale_suite, martingale_test,
                         path_integrability, product_functional, simulate_em)
from .mckean import (MeasureDependentCoefficients, PicardResult, freeze,
                     freeze_at_measure, solve_mkv_interacting,
                     solve_mkv_picard, verify_nonlinear_superposition)
from .measures import EmpiricalMeasure, GridDensity, MarginalFlow
from .models import REGISTRY, get_model
from .snse import (SNSEConfig, build_snse_coefficients, interaction_tensor,
                   snse_assumption_bundle, snse_energy_check, snse_gauge,
                   snse_triple, wavevectors)
from .spaces import (DissipationGauge, FinitelyBasedFunction, SpaceTriple,
                     apply_generator, constant_function, coordinate_bump,
                     coordinate_function, generator_profile, h_power_gauge,
                     quadratic_function, separating_family,
                     weighted_square_gauge)
from .superposition import (LyapunovLedger, SuperpositionReport,
                            galerkin_convergence, ks_band, ks_statistic,
                            lyapunov_bound_check, lyapunov_constants,
                            marginal_distance, superposition_integrability,
                            verify_superposition)

__version__ = "0.1.0"

__all__ = [
    "AssumptionParams", "CheckReport", "CoefficientModel", "ConfigError",
    "DimensionError", "DissipationGauge", "DivergenceError",
    "DomainTooSmallError", "EmpiricalMeasure", "EvaluationError",
    "FinitelyBasedFunction", "FpkLabError", "GridDensity", "GridMismatchError",
    "GridSpec", "LyapunovData", "LyapunovLedger", "MarginalFlow",
    "MartingaleStat", "MeasureDependentCoefficients", "PathEnsemble",
    "PathFunctional", "PicardResult", "REGISTRY", "SNSEConfig", "SamplePlan",
    "SingularWeightError", "SpaceTriple", "StepSizeError",
    "SuperpositionReport", "TimeWindowError", "apply_generator",
    "build_snse_coefficients", "check_coercivity", "check_component_envelope",
    "check_equicontinuity", "check_gauge_class", "check_growth",
    "check_lyapunov", "check_measure_uniform", "check_symmetry_psd",
    "coefficient_l1_mass", "constant_function", "coordinate_bump",
    "coordinate_function", "demicontinuity_profile", "diffusion_matrix",
    "diffusion_matrix_block", "energy_estimate", "ensemble_flow", "freeze",
    "freeze_at_measure", "galerkin_convergence", "generator_profile",
    "get_model", "h_power_gauge", "interaction_tensor", "ks_band",
    "ks_statistic", "lyapunov_bound_check", "lyapunov_constants", "marginal",
    "marginal_distance", "martingale_suite", "martingale_test",
    "narrow_continuity_modulus", "path_integrability", "product_functional",
    "quadratic_function", "separating_family", "shifted_square_lyapunov",
    "simulate_em", "snse_assumption_bundle", "snse_energy_check",
    "snse_gauge", "snse_triple", "solve_fpke_grid", "solve_fpke_particle",
    "solve_mkv_interacting", "solve_mkv_picard", "superposition_integrability",
    "verify_nonlinear_superposition", "verify_superposition", "wavevectors",
    "weak_residual", "weak_residual_profile", "weighted_square_gauge",
]
