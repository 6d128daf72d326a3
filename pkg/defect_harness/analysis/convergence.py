from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from defect_harness.analysis.decay import DecayFit, decay_fit
from defect_harness.errors import InputError
from defect_harness.geometry.lattice import ReferenceConfig
from defect_harness.potentials.base import SitePotential
from defect_harness.predictor.dislocation import Predictor
from defect_harness.relax.minimize import RelaxResult, SolverOptions, minimize
from defect_harness.relax.model import EnergyModel, build_model
from defect_harness.stencil.displacement import Displacement
from defect_harness.stencil.norms import nn_norm
from defect_harness.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class ConvergenceRow:
    R_dom: float
    n_free: int
    energy: float
    iterations: int
    grad_norm: float
    difference: float


@dataclass(slots=True)
class ConvergenceTable:
    rows: list[ConvergenceRow]
    reference_radius: float
    monotone: bool
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "reference_radius": self.reference_radius,
            "monotone": self.monotone,
            "differences": [row.difference for row in self.rows],
            "energies": [row.energy for row in self.rows],
            "notes": list(self.notes),
        }


def corrector_norms(model: EnergyModel, result: RelaxResult) -> tuple[np.ndarray, np.ndarray]:
    """(|Dū(ℓ)|_N, |ℓ|) over the free sites of a relaxed model."""
    per_site = nn_norm(result.u, model.config).per_site
    radii = np.linalg.norm(model.domain.positions, axis=1)
    return per_site[model.free], radii[model.free]


def corrector_decay_fit(
    model: EnergyModel,
    result: RelaxResult,
    rmin: float = 4.0,
    rmax: float | None = None,
    fit_model: str = "power",
) -> DecayFit:
    """Shell fit of |Dū(ℓ)|_N; rmax defaults to R_dom − buffer − r_cut."""
    limit = model.R_free - model.potential.r_cut
    hi = limit if rmax is None else rmax
    if hi > limit + 1e-9:
        logger.warning("decay fit rmax %.4g reaches into the clamped boundary layer (limit %.4g)", hi, limit)
    values, radii = corrector_norms(model, result)
    fit = decay_fit(values, radii, rmin, hi, fit_model)
    logger.info("corrector decay (%s): exponent %.4f ± %.4f", fit_model, fit.exponent, fit.half_width)
    return fit


def _extend(u: Displacement, target: EnergyModel) -> Displacement:
    values = u.value_at(target.domain.positions)
    return Displacement(domain=target.domain, values=values, clamp_radius=target.domain.radius)


def cell_convergence(
    config: ReferenceConfig,
    potential: SitePotential,
    radii: Sequence[float],
    *,
    predictor: Predictor | None = None,
    options: SolverOptions | None = None,
    threads: int | None = None,
) -> ConvergenceTable:
    """‖Dū_R − Dū_{Rmax}‖_{ℓ²_N} for each R in `radii`, measured on the largest domain."""
    radii = [float(r) for r in radii]
    if len(radii) < 2:
        raise InputError("cell convergence needs at least two radii", module="analysis")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InputError(f"radii must be strictly ascending, got {radii}", module="analysis")
    options = options or SolverOptions()
    models = [build_model(config, potential, predictor, R_dom=R) for R in radii]
    results = ordered_map(lambda m: minimize(m, options), models, threads)

    reference = models[-1]
    u_ref = results[-1].u
    rows = []
    for model, result in zip(models, results):
        diff = _extend(result.u, reference)
        diff = diff.with_values(diff.values - u_ref.values)
        rows.append(
            ConvergenceRow(
                R_dom=model.R_dom,
                n_free=model.n_free,
                energy=result.energy,
                iterations=result.iterations,
                grad_norm=result.grad_norm,
                difference=nn_norm(diff, config).global_value,
            )
        )
        logger.info("R_dom=%.4g: E=%.12g, ‖D(ū_R − ū_ref)‖=%.3e", model.R_dom, result.energy, rows[-1].difference)

    diffs = [row.difference for row in rows[:-1]]
    monotone = all(b <= a * (1.0 + 1e-9) + options.tol for a, b in zip(diffs, diffs[1:]))
    notes = []
    if not monotone:
        notes.append("differences are not monotonically decreasing")
    if not all(r.converged for r in results):
        notes.append("some relaxations stopped at max_iter")
    return ConvergenceTable(rows=rows, reference_radius=reference.R_dom, monotone=monotone, notes=notes)
