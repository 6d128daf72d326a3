"""Bravais lattices, defective reference configurations and lattice geometry."""

from .admissibility import AdmissibilityReport, admissibility_check
from .lattice import (
    BravaisLattice,
    DefectKind,
    ReferenceConfig,
    SiteSet,
    bcc,
    columnar,
    fcc,
    generate_sites,
    simple_cubic,
    square,
    triangular,
)
from .neighbors import NeighborSet, homogeneous_offsets, neighbor_table, neighbors
from .paths import LatticePath, lattice_path, path_constant

__all__ = [
    "AdmissibilityReport",
    "BravaisLattice",
    "DefectKind",
    "LatticePath",
    "NeighborSet",
    "ReferenceConfig",
    "SiteSet",
    "admissibility_check",
    "bcc",
    "columnar",
    "fcc",
    "generate_sites",
    "homogeneous_offsets",
    "lattice_path",
    "neighbor_table",
    "neighbors",
    "path_constant",
    "simple_cubic",
    "square",
    "triangular",
]
