"""Inhomogeneous-lineshape effects in EIT quantum memories.

Susceptibility of broadened EIT media, a Maxwell-Bloch storage and retrieval
solver, control-field optimization, the analytic AFC benchmark, and
kernel-based lineshape optimization.
"""

from .afc import AfcParams, afc_report, d_eff, eta_afc, optimize_finesse
from .kernelopt import (
    LadderConfig,
    MemoryKernel,
    SplineVector,
    SvdResult,
    build_kernel,
    interpolation_ladder,
    optimize_lineshape,
    rectangularity,
    svd_modes,
)
from .lineshape import FrequencyGrid, Kind, Lineshape, normalize, perturb_quadratic
from .optimizer import OptimizerConfig, PowerConstraint, optimize_control, sweep
from .solver import ControlParams, MemoryParams, SimGrid, memory_efficiency, run_memory
from .susceptibility import EitParams, compute_curve, eit_metrics

__version__ = "0.1.0"

__all__ = [
    "AfcParams", "afc_report", "d_eff", "eta_afc", "optimize_finesse",
    "LadderConfig", "MemoryKernel", "SplineVector", "SvdResult", "build_kernel",
    "interpolation_ladder", "optimize_lineshape", "rectangularity", "svd_modes",
    "FrequencyGrid", "Kind", "Lineshape", "normalize", "perturb_quadratic",
    "OptimizerConfig", "PowerConstraint", "optimize_control", "sweep",
    "ControlParams", "MemoryParams", "SimGrid", "memory_efficiency", "run_memory",
    "EitParams", "compute_curve", "eit_metrics",
]
