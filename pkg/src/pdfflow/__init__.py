"""Transport of one-point velocity distributions in incompressible flows.

The package models the evolution of p(u; x, t), the density of finding
velocity u at position x and time t, under a Fokker-Planck-type transport
equation whose drift is assembled from two-point conditional statistics of
the underlying field. Modules:

- flow_model: conditional statistics, drift coefficients, flow classes
- characteristics: backward stochastic and deterministic path solvers
- estimator: density evaluation along the paths (MC and quadrature)
- invariants: mass / divergence / residual / moment verification
- showcase: a fully worked closed-form example with jump surfaces
- kernels: hot evaluation loops, compiled lane with reference fallback
"""

from .flow_model import (
    ConditionalStatistics,
    CoefficientField,
    FlowSpec,
    builtin_flow,
    builtin_statistics,
    classify_flow,
    coefficient_bundle,
    conditional_mean,
    diffusion_matrix,
    drift_vector,
    pressure_drift,
)
from .characteristics import (
    LinearDriftModel,
    NoiseSpec,
    linear_drift_solution,
    sensitivity_vanishing_time,
    simulate_backward_ensemble,
    solve_inviscid_characteristic,
)
from .estimator import (
    DensityField,
    InitialDensity,
    PdfEstimate,
    SliceGrid,
    density_slice,
    estimate_general,
    estimate_homogeneous,
    evaluate_inviscid,
    evaluate_isotropic,
    transport_kernel,
)
from .invariants import (
    CheckResult,
    VelocityQuadrature,
    VerificationReport,
    assemble_report,
    check_divergence_free,
    check_mass,
    check_moment_identity,
    check_pde_residual,
    check_positivity_bound,
    showcase_velocity_plan,
)
from .quadrature import QuadratureConfig, singular_kernel_integral

__version__ = "0.1.0"

__all__ = [
    "ConditionalStatistics", "CoefficientField", "FlowSpec",
    "builtin_flow", "builtin_statistics", "classify_flow",
    "coefficient_bundle", "conditional_mean", "diffusion_matrix",
    "drift_vector", "pressure_drift",
    "LinearDriftModel", "NoiseSpec", "linear_drift_solution",
    "sensitivity_vanishing_time", "simulate_backward_ensemble",
    "solve_inviscid_characteristic",
    "DensityField", "InitialDensity", "PdfEstimate", "SliceGrid",
    "density_slice", "estimate_general", "estimate_homogeneous",
    "evaluate_inviscid", "evaluate_isotropic", "transport_kernel",
    "CheckResult", "VelocityQuadrature", "VerificationReport",
    "assemble_report", "check_divergence_free", "check_mass",
    "check_moment_identity", "check_pde_residual", "check_positivity_bound",
    "showcase_velocity_plan",
    "QuadratureConfig", "singular_kernel_integral",
    "__version__",
]
