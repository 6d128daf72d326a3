"""Site strain potentials, evaluation on positions and locality probes."""

from __future__ import annotations

from typing import Any

from defect_harness.errors import ConfigError

from .base import BondPotential, CutoffPolicy, CutoffReport, EnvironmentPotential, SitePotential
from .eam import Density, DensityKind, EAMPotential, Embedding, EmbeddingKind
from .environment import (
    Environment,
    HomogeneousStencil,
    environment,
    equilibrium_scale,
    lattice_offsets,
    resolve_cutoff,
    second_partials,
    site_energy,
    site_gradient,
)
from .pair import PairForm, PairKind, PairPotential, pair_phi
from .probes import (
    HomogeneityProfile,
    HomogeneityReport,
    LocalityReport,
    homogeneity_check,
    homogeneity_profile,
    locality_probe,
    point_symmetry_check,
)
from .springs import SpringPotential
from .tight_binding import TightBindingPotential, grand_potential


def get_potential(kind: str, *, cutoff: dict[str, Any] | CutoffPolicy | None = None, **params: Any) -> SitePotential:
    """Build a potential from its config section."""
    if isinstance(cutoff, dict):
        cutoff = CutoffPolicy(**cutoff)
    try:
        if kind == "pair":
            form = PairForm(kind=params.pop("form", "lj_classic"), **params)
            return PairPotential(form=form, cutoff=cutoff or CutoffPolicy())
        if kind == "eam":
            embedding = Embedding(
                kind=params.pop("embedding", "minus_sqrt"),
                coefficients=tuple(params.pop("coefficients", ())),
            )
            density = Density(kind=params.pop("density", "power"), **params)
            return EAMPotential(embedding=embedding, density=density, cutoff=cutoff or CutoffPolicy())
        if kind == "tb":
            return TightBindingPotential(**params)
        if kind == "springs":
            return SpringPotential(**params)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for potential {kind}: {exc}", module="potentials") from exc
    raise ConfigError(f"Unknown potential: {kind}", module="potentials")


__all__ = [
    "BondPotential",
    "CutoffPolicy",
    "CutoffReport",
    "Density",
    "DensityKind",
    "EAMPotential",
    "Embedding",
    "EmbeddingKind",
    "Environment",
    "EnvironmentPotential",
    "HomogeneityProfile",
    "HomogeneityReport",
    "HomogeneousStencil",
    "LocalityReport",
    "PairForm",
    "PairKind",
    "PairPotential",
    "SitePotential",
    "SpringPotential",
    "TightBindingPotential",
    "environment",
    "equilibrium_scale",
    "get_potential",
    "grand_potential",
    "homogeneity_check",
    "homogeneity_profile",
    "lattice_offsets",
    "locality_probe",
    "pair_phi",
    "point_symmetry_check",
    "resolve_cutoff",
    "second_partials",
    "site_energy",
    "site_gradient",
]
