"""Small-mass limits of Langevin dynamics with state-dependent friction.

The package simulates the fast-slow system

    dX = (1/eps) Y dt
    dY = -(1/eps^2) M(X) Y dt + (1/eps) F(X) dt + (1/eps) dW

together with its homogenized limit

    dX = S(X) dt + M(X)^{-1} F(X) dt + M(X)^{-1} dW,

lifts trajectories to grid rough paths, and measures the distance between
the two in Hölder-type rough path metrics, plus the matching averaging
and invariant-measure diagnostics.

Numerical kernels run through a compiled extension when it is available
and fall back to a pure NumPy implementation otherwise; see
``kernel_backend()``.
"""

__version__ = "0.1.0"

from .backend import kernel_backend
from .errors import (
    BlowUp,
    GridMismatch,
    InsufficientData,
    NonFiniteField,
    RoughSKError,
    SingularSystem,
    StabilityViolation,
    UnknownModel,
    ValidationError,
)
from .models import (
    AssumptionCheck,
    AssumptionReport,
    ModelSpec,
    ScalarObservableSpec,
    builtin_model,
    check_assumptions,
    default_probe_cloud,
    friction_grad_of,
    registry_names,
    synthesized_friction_grad,
)
from .linalg import (
    LyapunovSolution,
    area_correction_integrand,
    covariance_J,
    noise_induced_drift,
    solve_lyapunov,
)
from .sde import (
    NoiseBundle,
    SamplePath,
    change_of_variables,
    sample_noise,
    simulate_fast_slow,
    simulate_frozen,
    simulate_limit,
    stream_key,
    write_path_csv,
)
from .roughpath import (
    GridRoughPath,
    chen_area,
    holder_norm,
    ito_lift,
    level2_norm,
    limit_lift,
    rho_alpha,
    rho_components,
    stratonovich_lift,
    write_area_csv,
)
from .averaging import (
    PoissonSolution,
    averaging_error,
    build_poisson_solution,
    empirical_invariant_covariance,
    fbar,
    generator_apply,
    observable_value,
    poisson_residual,
)
from .harness import (
    AveragingReport,
    ConvergenceReport,
    EpsScaled,
    ExperimentConfig,
    FixedDt,
    HolderScalingReport,
    canonical_json,
    config_hash,
    run_averaging_validation,
    run_convergence,
    run_holder_scaling,
)

__all__ = [
    "__version__",
    "kernel_backend",
    "RoughSKError",
    "ValidationError",
    "UnknownModel",
    "NonFiniteField",
    "SingularSystem",
    "StabilityViolation",
    "BlowUp",
    "GridMismatch",
    "InsufficientData",
    "ModelSpec",
    "ScalarObservableSpec",
    "AssumptionCheck",
    "AssumptionReport",
    "builtin_model",
    "registry_names",
    "check_assumptions",
    "default_probe_cloud",
    "friction_grad_of",
    "synthesized_friction_grad",
    "LyapunovSolution",
    "solve_lyapunov",
    "covariance_J",
    "noise_induced_drift",
    "area_correction_integrand",
    "NoiseBundle",
    "SamplePath",
    "stream_key",
    "sample_noise",
    "simulate_fast_slow",
    "simulate_limit",
    "simulate_frozen",
    "change_of_variables",
    "write_path_csv",
    "GridRoughPath",
    "ito_lift",
    "stratonovich_lift",
    "limit_lift",
    "chen_area",
    "holder_norm",
    "level2_norm",
    "rho_components",
    "rho_alpha",
    "write_area_csv",
    "PoissonSolution",
    "observable_value",
    "fbar",
    "build_poisson_solution",
    "generator_apply",
    "poisson_residual",
    "averaging_error",
    "empirical_invariant_covariance",
    "FixedDt",
    "EpsScaled",
    "ExperimentConfig",
    "ConvergenceReport",
    "HolderScalingReport",
    "AveragingReport",
    "run_convergence",
    "run_holder_scaling",
    "run_averaging_validation",
    "canonical_json",
    "config_hash",
]
