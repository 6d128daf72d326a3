from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import BravaisLattice
from defect_harness.homogeneous.force_constants import ForceConstants, force_constants_for
from defect_harness.potentials.base import SitePotential

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class StabilityReport:
    c_min: float
    k_min: np.ndarray
    grid_n: int
    stable: bool
    c_max: float

    def summary(self) -> dict:
        return {
            "c_min": self.c_min,
            "k_min": self.k_min.tolist(),
            "grid_n": self.grid_n,
            "stable": self.stable,
            "c_max": self.c_max,
        }


def reciprocal_basis(lattice: BravaisLattice) -> np.ndarray:
    """B = 2π A^{-T}; k = B t for reduced reciprocal coordinates t."""
    return 2.0 * math.pi * np.linalg.inv(lattice.A).T


def symbol_eval(source: ForceConstants | SitePotential, k: np.ndarray, lattice: BravaisLattice | None = None) -> np.ndarray:
    """Ĥ(k) = −2 Σ_ρ h(ρ) e^{ik·ρ}; one matrix for k of shape (d,), a stack for (N, d)."""
    if isinstance(source, ForceConstants):
        fc = source
    else:
        if lattice is None:
            raise InputError("symbol_eval on a potential needs the lattice", module="homogeneous")
        fc = force_constants_for(source, lattice)
    k = np.asarray(k, dtype=float)
    single = k.ndim == 1
    kk = np.atleast_2d(k)
    if kk.shape[1] != fc.d:
        raise InputError(f"wave vector has {kk.shape[1]} components, lattice has d={fc.d}", module="homogeneous")
    phase = np.exp(1j * (kk @ fc.offsets.T))
    H = -2.0 * np.einsum("nr,rij->nij", phase, fc.h)
    H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
    return H[0] if single else H


def shortest_wavevectors(lattice: BravaisLattice, t: np.ndarray) -> np.ndarray:
    """Shortest k = B(t + s) over integer shifts s ∈ {−1, 0, 1}^d."""
    B = reciprocal_basis(lattice)
    d = lattice.d
    best = t @ B.T
    best_norm = np.linalg.norm(best, axis=1)
    for s in itertools.product((-1, 0, 1), repeat=d):
        if not any(s):
            continue
        cand = (t + np.array(s, dtype=float)) @ B.T
        norm = np.linalg.norm(cand, axis=1)
        better = norm < best_norm
        best[better] = cand[better]
        best_norm[better] = norm[better]
    return best


def stability_scan(fc: ForceConstants, grid_n: int = 64, chunk: int = 65536) -> StabilityReport:
    """min over the k-grid (k ≠ 0) of λ_min(Ĥ(k))/|k|²."""
    if grid_n < 8:
        raise InputError(f"stability grid needs at least 8 points per dimension, got {grid_n}", module="homogeneous")
    d = fc.d
    axis = np.arange(grid_n) / grid_n - 0.5
    t = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    t = t[np.any(t != 0.0, axis=1)]
    c_min, c_max = math.inf, -math.inf
    k_min = np.zeros(d)
    for start in range(0, len(t), chunk):
        k = shortest_wavevectors(fc.lattice, t[start : start + chunk])
        lam = np.linalg.eigvalsh(symbol_eval(fc, k))
        ratio_min = lam[:, 0] / np.sum(k * k, axis=1)
        ratio_max = lam[:, -1] / np.sum(k * k, axis=1)
        j = int(np.argmin(ratio_min))
        if ratio_min[j] < c_min:
            c_min = float(ratio_min[j])
            k_min = k[j].copy()
        c_max = max(c_max, float(ratio_max.max()))
    stable = c_min > 0.0
    if stable:
        logger.info("stability scan: c_min %.6g at k=%s", c_min, np.array2string(k_min, precision=4))
    else:
        logger.warning("lattice unstable: c_min %.6g at k=%s", c_min, np.array2string(k_min, precision=4))
    return StabilityReport(c_min=c_min, k_min=k_min, grid_n=grid_n, stable=stable, c_max=c_max)
