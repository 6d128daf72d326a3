"""Finite-difference stencils, stencil norms and weight classes."""

from .displacement import Displacement, finite_difference
from .norms import (
    NormEquivalenceReport,
    NormResult,
    WeightedNormResult,
    brute_force_upper_constant,
    nn_norm,
    norm_equivalence_report,
    weighted_norm,
)
from .weights import WeightFunction, WeightKind, shell_sum_bound

__all__ = [
    "Displacement",
    "NormEquivalenceReport",
    "NormResult",
    "WeightFunction",
    "WeightKind",
    "WeightedNormResult",
    "brute_force_upper_constant",
    "finite_difference",
    "nn_norm",
    "norm_equivalence_report",
    "shell_sum_bound",
    "weighted_norm",
]
