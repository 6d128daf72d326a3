"""Energy-difference functional on a clamped ball and its minimization."""

from .bonds import BondList, build_bonds
from .minimize import RelaxResult, SolverOptions, minimize
from .model import (
    EnergyModel,
    build_model,
    energy_diff,
    free_gradient,
    gradient,
    hessian_vector,
    residual_force,
    site_energy_changes,
    stability_diagnostic,
)

__all__ = [
    "BondList",
    "EnergyModel",
    "RelaxResult",
    "SolverOptions",
    "build_bonds",
    "build_model",
    "energy_diff",
    "free_gradient",
    "gradient",
    "hessian_vector",
    "minimize",
    "residual_force",
    "site_energy_changes",
    "stability_diagnostic",
]
