from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from defect_harness.errors import ConfigError, InputError
from defect_harness.geometry.lattice import BravaisLattice
from defect_harness.potentials.base import SitePotential
from defect_harness.potentials.environment import HomogeneousStencil

logger = logging.getLogger(__name__)


@dataclass(slots=True, eq=False)
class ForceConstants:
    """h(ρ) on a finite set of in-plane lattice offsets; (Hu)(ℓ) = −2 Σ_ρ h(ρ) u(ℓ − ρ)."""

    lattice: BravaisLattice
    coords: np.ndarray
    h: np.ndarray
    source: str = ""
    tail_bound: float = 0.0
    _index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {tuple(c): k for k, c in enumerate(self.coords.tolist())}

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def d_s(self) -> int:
        return self.h.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return self.lattice.positions(self.coords)

    @property
    def support_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.offsets, axis=1)))

    def __len__(self) -> int:
        return len(self.coords)

    def __getitem__(self, coord) -> np.ndarray:
        k = self._index.get(tuple(int(c) for c in coord))
        return np.zeros((self.d_s, self.d_s)) if k is None else self.h[k]

    def symmetry_residual(self) -> float:
        """max_ρ |h(−ρ) − h(ρ)|."""
        return max(float(np.max(np.abs(self[-c] - self.h[k]))) for k, c in enumerate(self.coords))

    def row_sum_residual(self) -> float:
        """|Σ_ρ h(ρ)|, the defect of h(0) = −Σ_{ρ≠0} h(ρ)."""
        return float(np.max(np.abs(self.h.sum(axis=0))))

    def apply_periodic(self, u: np.ndarray) -> np.ndarray:
        """Hu for u on a periodic grid of shape (n₁, …, n_d, d_s)."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        axes = tuple(range(self.d))
        for c, block in zip(self.coords, self.h):
            out += np.roll(u, shift=tuple(int(x) for x in c), axis=axes) @ block.T
        return -2.0 * out

    def summary(self) -> dict:
        return {
            "source": self.source,
            "n_offsets": len(self),
            "support_radius": self.support_radius,
            "tail_bound": self.tail_bound,
            "symmetry_residual": self.symmetry_residual(),
            "row_sum_residual": self.row_sum_residual(),
        }


def _lattice_coords(lattice: BravaisLattice, offsets: np.ndarray) -> np.ndarray:
    reduced = lattice.reduced(offsets[:, : lattice.d])
    coords = np.rint(reduced)
    if np.any(np.abs(reduced - coords) > 1e-8):
        raise InputError("stencil offsets are not lattice vectors", module="homogeneous")
    return coords.astype(np.int64)


def force_constants(stencil: HomogeneousStencil, tail_bound: float = 0.0) -> ForceConstants:
    """h from the second partials V_{,ρσ}(0) of the homogeneous site potential.

    h(ρ_a − ρ_b) −= ½V_ab, h(ρ_a) += ½Σ_b V_ab, h(−ρ_b) += ½Σ_a V_ab, h(0) −= ½Σ_ab V_ab.
    Column images of a columnar lattice fold onto their in-plane offset.
    """
    lattice = stencil.lattice
    V = stencil.hessian()
    if not np.all(np.isfinite(V)):
        raise ConfigError(f"second partials of {stencil.potential.name} are not finite", module="homogeneous")
    c = _lattice_coords(lattice, stencil.offsets)
    ds = V.shape[-1]
    acc: dict[tuple[int, ...], np.ndarray] = {}

    def add(coord: np.ndarray, block: np.ndarray) -> None:
        key = tuple(int(x) for x in coord)
        if key in acc:
            acc[key] += block
        else:
            acc[key] = block.copy()

    rows = V.sum(axis=1)
    cols = V.sum(axis=0)
    for a in range(len(c)):
        add(c[a], 0.5 * rows[a])
        add(-c[a], 0.5 * cols[a])
        for b in range(len(c)):
            if np.any(V[a, b]):
                add(c[a] - c[b], -0.5 * V[a, b])
    add(np.zeros(lattice.d, dtype=np.int64), -0.5 * V.sum(axis=(0, 1)))

    keys = sorted(acc, key=lambda k: (sum(x * x for x in k), k))
    blocks = np.array([acc[k] for k in keys]).reshape(-1, ds, ds)
    keep = np.any(np.abs(blocks) > 0.0, axis=(1, 2))
    keep[0] = True
    fc = ForceConstants(
        lattice=lattice,
        coords=np.array(keys, dtype=np.int64)[keep],
        h=blocks[keep],
        source=stencil.potential.name,
        tail_bound=tail_bound,
    )
    logger.info(
        "force constants for %s: %d offsets, symmetry residual %.2e, row-sum residual %.2e",
        fc.source,
        len(fc),
        fc.symmetry_residual(),
        fc.row_sum_residual(),
    )
    return fc


def force_constants_for(potential: SitePotential, lattice: BravaisLattice, tail_bound: float = 0.0) -> ForceConstants:
    return force_constants(HomogeneousStencil.build(potential, lattice), tail_bound)


def periodic_differences(u: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """D_ρ u(ℓ) = u(ℓ+ρ) − u(ℓ) on a periodic grid, one slice per offset."""
    axes = tuple(range(coords.shape[1]))
    return np.stack([np.roll(u, shift=tuple(-int(x) for x in c), axis=axes) - u for c in coords])


def second_variation(stencil: HomogeneousStencil, u: np.ndarray, v: np.ndarray) -> float:
    """⟨Hu, v⟩ = Σ_ℓ Σ_ab D_a u(ℓ)ᵀ V_ab D_b v(ℓ) on a periodic grid."""
    V = stencil.hessian()
    c = _lattice_coords(stencil.lattice, stencil.offsets)
    Du = periodic_differences(u, c)
    Dv = periodic_differences(v, c)
    Du = Du.reshape(len(c), -1, Du.shape[-1])
    Dv = Dv.reshape(len(c), -1, Dv.shape[-1])
    return float(np.einsum("aqi,abij,bqj->", Du, V, Dv))


def convolution_form(fc: ForceConstants, u: np.ndarray, v: np.ndarray) -> float:
    """⟨Hu, v⟩ = Σ_ℓ u(ℓ)·(−2 h∗v)(ℓ) on a periodic grid."""
    return float(np.sum(u * fc.apply_periodic(v)))


def nn_energy_ratio(fc: ForceConstants, u: np.ndarray) -> float:
    """⟨Hu, u⟩ / ‖Du‖² with the nearest-neighbour stencil norm, on a periodic grid."""
    lattice = fc.lattice
    nn = lattice.nn_distance
    near = fc.coords[np.abs(np.linalg.norm(fc.offsets, axis=1) - nn) <= 1e-9 * max(1.0, nn)]
    Du = periodic_differences(u, near)
    denom = float(np.sum(Du * Du))
    if denom == 0.0:
        return math.nan
    return convolution_form(fc, u, u) / denom
