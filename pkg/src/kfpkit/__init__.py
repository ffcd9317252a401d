"""kfpkit: numerical toolkit for kinetic Fokker-Planck equations with rough coefficients.

Modules
-------
geometry    Galilean group, kinetic scaling and cylinders.
matrices    time-matrix profiles a(t) and the kernel matrices A0, A1, A2, P, M.
kernel      fundamental solution, its derivatives and moment scaling scans.
grid        gridded fields and the KFP1 binary container.
solver      kernel (Duhamel) and finite-difference solvers.
regularity  Hoelder-type seminorm estimators and interpolation/Schauder checks.
landau      Landau coefficients and the scaling frame.
cli         the ``kfpkit`` command.
"""
from .errors import (CFLError, DimensionError, EllipticityError, KFPError, NumericalFailure, PreconditionError,
                     QuadratureError)
from .geometry import (KineticCylinder, KineticPoint, compose, cylinder_contains, invert_into, inverse, japanese,
                       kinetic_scale)
from .grid import GridField
from .kernel import (MomentSpec, QuadratureBudget, chapman_kolmogorov_check, eval_kernel, eval_kernel_derivative,
                     eval_kolmogorov, kernel_value, moment_integral, moment_scaling_scan)
from .landau import (LandauBudget, LandauParams, ScalingFrame, VelocityProfile, check_abar_holder_scaling,
                     landau_abar, landau_cbar, landau_field, make_scaling_frame, rescale_field,
                     transformed_coefficients, verify_ellipticity_bounds)
from .matrices import (KineticMatrices, TimeMatrixProfile, assemble_matrices, load_profile, profile_from_dict,
                       verify_matrix_bounds, verify_p_dynamics)
from .regularity import (ExperimentConfig, SeminormSpec, WeightedNorm, check_interpolation, check_log_interpolation,
                         check_logholder_scaling, check_weight_interpolation, estimate_seminorm, schauder_experiment)
from .solver import CoefficientField, residual_check, solve_fd, solve_forced_kernel, solve_ivp_kernel

__version__ = "0.1.0"

__all__ = [
    "CFLError", "CoefficientField", "DimensionError", "EllipticityError", "ExperimentConfig", "GridField",
    "KFPError", "KineticCylinder", "KineticMatrices", "KineticPoint", "LandauBudget", "LandauParams", "MomentSpec",
    "NumericalFailure", "PreconditionError", "QuadratureBudget", "QuadratureError", "ScalingFrame", "SeminormSpec",
    "TimeMatrixProfile", "VelocityProfile", "WeightedNorm", "assemble_matrices", "chapman_kolmogorov_check",
    "check_abar_holder_scaling", "check_interpolation", "check_log_interpolation", "check_logholder_scaling",
    "check_weight_interpolation", "compose", "cylinder_contains", "estimate_seminorm", "eval_kernel",
    "eval_kernel_derivative", "eval_kolmogorov", "inverse", "invert_into", "japanese", "kernel_value",
    "kinetic_scale", "landau_abar", "landau_cbar", "landau_field", "load_profile", "make_scaling_frame",
    "moment_integral", "moment_scaling_scan", "profile_from_dict", "rescale_field", "residual_check",
    "schauder_experiment", "solve_fd", "solve_forced_kernel", "solve_ivp_kernel", "transformed_coefficients",
    "verify_ellipticity_bounds", "verify_matrix_bounds", "verify_p_dynamics",
]
