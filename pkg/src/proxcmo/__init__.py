"""Continuous-time solvers for equality-constrained nonsmooth composite
optimization: proximal machinery, closed-loop dynamics, gain certificates,
and a reproducible experiment harness."""

from .prox import (
    ConvergenceError,
    IntersectionSet,
    L1Norm,
    BoxIndicator,
    ShidokuIndicator,
    IntersectionIndicator,
    ZeroFunction,
    StackedProx,
    MoreauEnvelope,
    soft_threshold,
    project_shidoku,
    dykstra_project,
)
from .problem import (
    AffineConstraint,
    CompositeProblem,
    SpectralConstants,
    SystemState,
    aug_lagrangian,
    kkt_residual,
    saddle_residual,
    spectral_constants,
)
from .integrate import (
    IntegratorConfig,
    Trajectory,
    StepUnderflow,
    NonFinite,
    integrate_adaptive,
    integrate_fixed_rk4,
)
from .dynamics import (
    GainSet,
    Variant,
    plant_rhs,
    static_proxcmo_rhs,
    dynamic_proxcmo_rhs,
    dynamic_unconstrained_rhs,
    baseline_rhs,
    stationarity_residual,
    simulate,
)
from .gains import (
    StabilityCertificate,
    certify_static,
    certify_dynamic_unconstrained,
    certify_dynamic_constrained,
    tune_static_epsilon,
    lyapunov_value,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "IntersectionSet", "L1Norm", "BoxIndicator",
    "ShidokuIndicator", "IntersectionIndicator", "ZeroFunction", "StackedProx",
    "MoreauEnvelope", "soft_threshold", "project_shidoku", "dykstra_project",
    "AffineConstraint", "CompositeProblem", "SpectralConstants", "SystemState",
    "aug_lagrangian", "kkt_residual", "saddle_residual", "spectral_constants",
    "IntegratorConfig", "Trajectory", "StepUnderflow", "NonFinite",
    "integrate_adaptive", "integrate_fixed_rk4",
    "GainSet", "Variant", "plant_rhs", "static_proxcmo_rhs",
    "dynamic_proxcmo_rhs", "dynamic_unconstrained_rhs", "baseline_rhs",
    "stationarity_residual", "simulate",
    "StabilityCertificate", "certify_static", "certify_dynamic_unconstrained",
    "certify_dynamic_constrained", "tune_static_epsilon", "lyapunov_value",
    "__version__",
]
