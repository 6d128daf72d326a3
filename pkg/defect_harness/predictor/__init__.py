"""Far-field predictors: zero for point defects, CLE-based for straight dislocations."""

from __future__ import annotations

from .cle import CLEKind, CLESolution, antiplane_cle, branch_log, cle_eval, cle_from_potential, elastic_tensor
from .dislocation import (
    CutFunction,
    DislocationPredictor,
    PointDefectPredictor,
    Predictor,
    build_dislocation,
    check_predictor_admissible,
    default_core,
    predictor_configuration,
    predictor_decay_fit,
    predictor_differences,
    predictor_eval,
)
from .slip import (
    burgers_circuit,
    elastic_strain,
    in_omega_gamma,
    permuted_difference,
    rectangular_loop,
    slip_apply,
    slip_stencil,
    slip_values,
)

__all__ = [
    "CLEKind",
    "CLESolution",
    "CutFunction",
    "DislocationPredictor",
    "PointDefectPredictor",
    "Predictor",
    "antiplane_cle",
    "branch_log",
    "build_dislocation",
    "burgers_circuit",
    "check_predictor_admissible",
    "cle_eval",
    "cle_from_potential",
    "default_core",
    "elastic_strain",
    "elastic_tensor",
    "in_omega_gamma",
    "permuted_difference",
    "predictor_configuration",
    "predictor_decay_fit",
    "predictor_differences",
    "predictor_eval",
    "rectangular_loop",
    "slip_apply",
    "slip_stencil",
    "slip_values",
]
