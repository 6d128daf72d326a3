from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import BravaisLattice, ReferenceConfig, generate_sites
from defect_harness.potentials.base import CutoffReport, SitePotential
from defect_harness.potentials.tight_binding import TightBindingPotential
from defect_harness.stencil.weights import shell_sum_bound

logger = logging.getLogger(__name__)

_OFFSET_TOL = 1e-8


@dataclass(slots=True)
class Environment:
    """Neighbours of one site: indices, deformed vectors y(m) − y(ℓ) and reference vectors."""

    center: int
    neighbors: np.ndarray
    vec: np.ndarray
    ref: np.ndarray


def lattice_offsets(lattice: BravaisLattice, R: float) -> np.ndarray:
    """Reference vectors from an atom to every other atom within distance R, in R^{d_s}."""
    sites = generate_sites(ReferenceConfig.homogeneous(lattice), R)
    coords = sites.coords
    x = lattice.positions(coords)
    if not lattice.columnar:
        keep = np.linalg.norm(x, axis=1) > _OFFSET_TOL
        return x[keep & (np.linalg.norm(x, axis=1) <= R * (1.0 + 1e-12))]
    period = lattice.column_period
    z0 = coords @ lattice.column_shift
    n_max = int(math.ceil(R / period)) + 1
    chunks = []
    for n in range(-n_max, n_max + 1):
        off = np.column_stack([x, z0 + n * period])
        r = np.linalg.norm(off, axis=1)
        chunks.append(off[(r > _OFFSET_TOL) & (r <= R * (1.0 + 1e-12))])
    return np.vstack(chunks)


def environment(
    potential: SitePotential,
    y: np.ndarray,
    ell: int,
    reference: np.ndarray | None = None,
    period: float | None = None,
) -> Environment:
    """Neighbours of site ℓ within the potential's radius.

    Potentials with `reference_stencil` select by reference distance, the others by
    deformed distance. With `period` set, e3 images of every site take part.
    """
    y = np.asarray(y, dtype=float)
    if reference is None:
        if potential.reference_stencil:
            raise InputError(f"potential {potential.name} needs reference positions", module="potentials")
        reference = y
    reference = np.asarray(reference, dtype=float)
    if not 0 <= ell < len(y):
        raise InputError(f"site index {ell} out of range", module="potentials")

    ds = y.shape[1]
    R = potential.r_cut
    if period is None:
        shifts = np.zeros((1, ds))
    else:
        n_max = int(math.ceil(R / period)) + 2
        shifts = np.zeros((2 * n_max + 1, ds))
        shifts[:, 2] = np.arange(-n_max, n_max + 1) * period

    vec = y[None, :, :] + shifts[:, None, :] - y[ell]
    ref = reference[None, :, :] + shifts[:, None, :] - reference[ell]
    idx = np.broadcast_to(np.arange(len(y)), vec.shape[:2])
    own = np.zeros(vec.shape[:2], dtype=bool)
    own[len(shifts) // 2, ell] = True
    vec = vec.reshape(-1, ds)
    ref = ref.reshape(-1, ds)
    idx = idx.reshape(-1)
    own = own.reshape(-1)
    select = ref if potential.reference_stencil else vec
    dist = np.linalg.norm(select, axis=1)
    keep = (dist <= R) & ~own
    return Environment(center=ell, neighbors=idx[keep], vec=vec[keep], ref=ref[keep])


def site_energy(
    potential: SitePotential,
    y: np.ndarray,
    ell: int,
    reference: np.ndarray | None = None,
    period: float | None = None,
) -> float:
    env = environment(potential, y, ell, reference, period)
    return potential.local_energy(env.vec, env.ref)


def site_gradient(
    potential: SitePotential,
    y: np.ndarray,
    ell: int,
    reference: np.ndarray | None = None,
    period: float | None = None,
) -> dict[int, np.ndarray]:
    """m ↦ ∂Φ_ℓ/∂y(m) over the interaction window, ℓ itself included."""
    env = environment(potential, y, ell, reference, period)
    g = potential.local_gradient(env.vec, env.ref)
    out: dict[int, np.ndarray] = {ell: -g.sum(axis=0)}
    for m, gm in zip(env.neighbors.tolist(), g):
        out[m] = out[m] + gm if m in out else gm.copy()
    return out


def second_partials(
    potential: SitePotential,
    y: np.ndarray,
    ell: int,
    rho: np.ndarray,
    sigma: np.ndarray,
    reference: np.ndarray | None = None,
    period: float | None = None,
) -> np.ndarray:
    """V_{ℓ,ρσ}: the d_s × d_s block ∂²Φ_ℓ / ∂g_ρ ∂g_σ, ρ and σ reference offsets in R^{d_s}."""
    env = environment(potential, y, ell, reference, period)
    a = _offset_row(env.ref, rho)
    b = _offset_row(env.ref, sigma)
    return potential.local_hessian(env.vec, env.ref)[a, b]


def _offset_row(ref: np.ndarray, rho: np.ndarray) -> int:
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.size < ref.shape[1]:
        rho = np.concatenate([rho, np.zeros(ref.shape[1] - rho.size)])
    dist = np.linalg.norm(ref - rho, axis=1)
    if dist.size == 0 or dist.min() > _OFFSET_TOL:
        raise InputError(f"offset {rho.tolist()} is not in the interaction window", module="potentials")
    return int(np.argmin(dist))


@dataclass(slots=True, eq=False)
class HomogeneousStencil:
    """The homogeneous site potential V^h on the stencil of offsets within r_cut."""

    potential: SitePotential
    lattice: BravaisLattice
    offsets: np.ndarray

    @classmethod
    def build(cls, potential: SitePotential, lattice: BravaisLattice) -> HomogeneousStencil:
        return cls(potential=potential, lattice=lattice, offsets=lattice_offsets(lattice, potential.r_cut))

    def __len__(self) -> int:
        return len(self.offsets)

    def energy(self, g: np.ndarray | None = None) -> float:
        vec = self.offsets if g is None else self.offsets + g
        return self.potential.local_energy(vec, self.offsets)

    def gradient(self, g: np.ndarray | None = None) -> np.ndarray:
        vec = self.offsets if g is None else self.offsets + g
        return self.potential.local_gradient(vec, self.offsets)

    def hessian(self) -> np.ndarray:
        return self.potential.local_hessian(self.offsets, self.offsets)

    def index(self, rho: np.ndarray) -> int:
        return _offset_row(self.offsets, rho)

    def reflection(self) -> np.ndarray:
        """Permutation p with offsets[p[a]] = −offsets[a]."""
        perm = np.array([self.index(-o) for o in self.offsets], dtype=np.int64)
        return perm


def resolve_cutoff(potential: SitePotential, lattice: BravaisLattice) -> tuple[SitePotential, CutoffReport]:
    """Fix the interaction radius of `potential` on `lattice`.

    Adaptive pair/EAM radii grow by 1.25 until the envelope tail bound is below tol times
    the accumulated envelope sum; tight-binding windows double from 2 r_c until the
    homogeneous site energy moves by less than `window_tol`.
    """
    if isinstance(potential, TightBindingPotential):
        return _resolve_tb_window(potential, lattice)
    cutoff = getattr(potential, "cutoff", None)
    if cutoff is None or cutoff.mode == "hard":
        return potential, CutoffReport("hard", potential.r_cut, 0.0, math.nan, True)

    r0 = lattice.atom_spacing()
    D = lattice.d_s
    R = max(cutoff.radius, 2.0 * r0)
    while True:
        offs = np.linalg.norm(lattice_offsets(lattice, R), axis=1)
        accumulated = float(sum(potential.envelope(r) for r in offs))
        tail = shell_sum_bound(potential.envelope, R, r0, D)
        if tail <= cutoff.tol * accumulated:
            logger.info("adaptive cutoff %s: radius %.4g, tail bound %.3e", potential.name, R, tail)
            return potential.with_radius(R), CutoffReport("adaptive", R, tail, accumulated, True)
        if R >= cutoff.max_radius:
            logger.warning(
                "adaptive cutoff %s stopped at max radius %.4g with tail bound %.3e (tol %.1e)",
                potential.name,
                R,
                tail,
                cutoff.tol * accumulated,
            )
            return potential.with_radius(R), CutoffReport("adaptive", R, tail, accumulated, False)
        R = min(1.25 * R, cutoff.max_radius)


def _resolve_tb_window(potential: TightBindingPotential, lattice: BravaisLattice) -> tuple[SitePotential, CutoffReport]:
    if potential.window is not None:
        return potential, CutoffReport("hard", potential.window, 0.0, math.nan, True)
    R = 2.0 * potential.r_c
    energy = HomogeneousStencil.build(potential.with_radius(R), lattice).energy()
    while 2.0 * R <= potential.max_window:
        R2 = 2.0 * R
        energy2 = HomogeneousStencil.build(potential.with_radius(R2), lattice).energy()
        change = abs(energy2 - energy)
        R, energy = R2, energy2
        if change < potential.window_tol:
            logger.info("tight-binding window %.4g, energy change %.3e", R, change)
            return potential.with_radius(R), CutoffReport("doubling", R, change, energy, True)
    logger.warning("tight-binding window stopped at %.4g without meeting %.1e", R, potential.window_tol)
    return potential.with_radius(R), CutoffReport("doubling", R, math.nan, energy, False)


def equilibrium_scale(potential: SitePotential, lattice: BravaisLattice, bounds: tuple[float, float] = (0.7, 1.5)) -> float:
    """Dilation factor minimizing the homogeneous per-site energy."""

    def energy(s: float) -> float:
        return HomogeneousStencil.build(potential, lattice.scaled(s)).energy()

    result = minimize_scalar(energy, bounds=bounds, method="bounded", options={"xatol": 1e-10})
    if not result.success:
        raise InputError(f"equilibrium spacing search failed: {result.message}", module="potentials")
    logger.info("equilibrium scale %.12g (energy %.12g)", result.x, result.fun)
    return float(result.x)
