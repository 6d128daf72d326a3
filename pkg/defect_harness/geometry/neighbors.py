from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import QhullError, Voronoi, cKDTree

from defect_harness.errors import BoundaryError
from defect_harness.geometry.lattice import BravaisLattice, ReferenceConfig, SiteSet, generate_sites

logger = logging.getLogger(__name__)

_OFFSET_CACHE: dict[tuple, np.ndarray] = {}


@dataclass(slots=True)
class NeighborSet:
    center: int
    neighbors: np.ndarray
    offsets: np.ndarray


def neighbors(config: ReferenceConfig, domain: SiteSet, ell: int, tol: float = 1e-9) -> NeighborSet:
    """Voronoi neighbours N(ℓ) of domain site `ell`.

    m is a neighbour when the Voronoi cells of ℓ and m touch. The squared-distance
    difference to ℓ and m is affine on the cell of ℓ, so it suffices to test the cell's
    vertices.
    """
    lattice = config.lattice
    P = domain.positions
    x = P[ell]
    room = domain.radius - float(np.linalg.norm(x - domain.center))
    scale = lattice.max_vector_length
    patch_r = min(room, 8.0 * scale)
    if patch_r <= scale:
        raise BoundaryError(f"site {ell} at {x.tolist()} is within one lattice vector of the domain boundary")

    tree = _tree(domain)
    idx = np.asarray(sorted(tree.query_ball_point(x, patch_r)), dtype=np.int64)
    local = int(np.searchsorted(idx, ell))
    try:
        vor = Voronoi(P[idx])
    except QhullError as exc:
        raise BoundaryError(f"Voronoi construction failed around site {ell}: {exc}") from exc

    region = vor.regions[vor.point_region[local]]
    if not region or -1 in region:
        raise BoundaryError(f"Voronoi cell of site {ell} is unbounded on the available patch")
    verts = vor.vertices[region]
    r_cell = float(np.max(np.linalg.norm(verts - x, axis=1)))
    if 2.0 * r_cell >= patch_r - tol * scale:
        raise BoundaryError(
            f"site {ell}: Voronoi cell radius {r_cell:.3g} not certified by patch radius {patch_r:.3g}"
        )

    cand = np.asarray(sorted(tree.query_ball_point(x, 2.0 * r_cell + tol * scale)), dtype=np.int64)
    cand = cand[cand != ell]
    d_ell = np.linalg.norm(verts - x, axis=1)
    gaps = np.linalg.norm(verts[None, :, :] - P[cand][:, None, :], axis=2) - d_ell[None, :]
    hit = cand[np.min(gaps, axis=1) <= tol * scale]
    return NeighborSet(center=ell, neighbors=hit, offsets=P[hit] - x)


def homogeneous_offsets(lattice: BravaisLattice) -> np.ndarray:
    """Integer offsets of N(0) on the perfect lattice A Z^d."""
    key = lattice.key()
    cached = _OFFSET_CACHE.get(key)
    if cached is not None:
        return cached
    config = ReferenceConfig.homogeneous(lattice)
    domain = generate_sites(config, 6.0 * lattice.max_vector_length)
    origin = domain.index_of((0,) * lattice.d)
    ns = neighbors(config, domain, origin)
    offsets = domain.coords[ns.neighbors]
    offsets = offsets[np.lexsort(offsets.T[::-1])]
    _OFFSET_CACHE[key] = offsets
    logger.debug("homogeneous neighbour set has %d offsets", len(offsets))
    return offsets


def neighbor_table(config: ReferenceConfig, domain: SiteSet, margin: float | None = None) -> list[NeighborSet]:
    """Neighbour sets for every domain site.

    Neighbours outside the domain keep their offset but carry index -1. Far from the core
    the homogeneous set is translated; near the core N(ℓ) is recomputed from the Voronoi
    diagram.
    """
    lattice = config.lattice
    if margin is None:
        margin = 3.0 * lattice.max_vector_length
    offsets = homogeneous_offsets(lattice)
    offset_vectors = lattice.positions(offsets)
    norms = domain.distances_from_origin()
    table: list[NeighborSet] = []
    for ell in range(len(domain)):
        far = domain.on_lattice[ell] and norms[ell] > config.R_def + margin
        if far or (config.R_def == 0.0 and len(config.core_sites) == 0):
            idx = domain.indices_of(domain.coords[ell] + offsets)
            table.append(NeighborSet(center=ell, neighbors=idx, offsets=offset_vectors.copy()))
        else:
            table.append(neighbors(config, domain, ell))
    return table


def _tree(domain: SiteSet) -> cKDTree:
    if domain._tree is None:
        domain._tree = cKDTree(domain.positions)
    return domain._tree
