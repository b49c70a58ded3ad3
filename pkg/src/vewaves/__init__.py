"""Spectral toolkit for compressible viscoelastic flow near the rest state.

Provides the exact linearized solution operator in Fourier variables, an
exponential time-differencing solver for the reformulated nonlinear system,
displacement/deformation kinematics, an unbounded-domain radial instrument
for decay-rate measurement, and verification harnesses.
"""

from .params import ModelParams, PressureModel
from .spectral import (
    CutoffSpec,
    Field,
    SpectralGrid,
    apply_multiplier,
    field_from_physical,
    field_from_spectral,
    frequency_split,
    inverse_laplacian,
    leray_project,
    lp_norm,
    make_grid,
    sobolev_norm,
)
from .state import StateU
from .semigroup import (
    KernelFactors,
    ModeEigen,
    eigenprojections,
    eigenvalues,
    generator_matrix,
    kernel_apply_point,
    kernel_factors,
    semigroup_apply,
)
from .harness import (
    DecaySeries,
    ExperimentConfig,
    fit_decay_exponent,
    run_experiment,
    theoretical_rate,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "PressureModel",
    "SpectralGrid",
    "Field",
    "CutoffSpec",
    "StateU",
    "ModeEigen",
    "KernelFactors",
    "make_grid",
    "apply_multiplier",
    "frequency_split",
    "inverse_laplacian",
    "leray_project",
    "lp_norm",
    "sobolev_norm",
    "field_from_physical",
    "field_from_spectral",
    "eigenvalues",
    "kernel_factors",
    "kernel_apply_point",
    "semigroup_apply",
    "eigenprojections",
    "generator_matrix",
    "DecaySeries",
    "ExperimentConfig",
    "theoretical_rate",
    "fit_decay_exponent",
    "run_experiment",
    "verify",
    "__version__",
]
