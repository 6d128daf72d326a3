"""Homogeneous difference operator: force constants, symbol, stability and Green's function."""

from .force_constants import (
    ForceConstants,
    convolution_form,
    force_constants,
    force_constants_for,
    nn_energy_ratio,
    periodic_differences,
    second_variation,
)
from .green import GreenTable, LogGrowthFit, green_decay_fit, green_differences, green_function, green_log_growth
from .symbol import StabilityReport, reciprocal_basis, shortest_wavevectors, stability_scan, symbol_eval

__all__ = [
    "ForceConstants",
    "GreenTable",
    "LogGrowthFit",
    "StabilityReport",
    "convolution_form",
    "force_constants",
    "force_constants_for",
    "green_decay_fit",
    "green_differences",
    "green_function",
    "green_log_growth",
    "nn_energy_ratio",
    "periodic_differences",
    "reciprocal_basis",
    "second_variation",
    "shortest_wavevectors",
    "stability_scan",
    "symbol_eval",
]
