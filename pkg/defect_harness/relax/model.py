from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from defect_harness.errors import ConfigError, InputError
from defect_harness.geometry.lattice import ReferenceConfig, SiteSet, generate_sites
from defect_harness.potentials.base import SitePotential
from defect_harness.predictor.dislocation import (
    DislocationPredictor,
    PointDefectPredictor,
    Predictor,
    check_predictor_admissible,
)
from defect_harness.relax.bonds import BondList, build_bonds
from defect_harness.stencil.displacement import Displacement

logger = logging.getLogger(__name__)

HVP_STEP = 1e-5


@dataclass(slots=True, eq=False)
class EnergyModel:
    """E(u) = Σ_ℓ [Φ_ℓ(y0 + u) − Φ_ℓ(y0)] − f_ext·u on a clamped ball.

    Sites with |ℓ| ≤ R_dom − buffer are free; the others keep u = 0. Site energies are
    summed over every center whose interaction window can reach a free site.
    """

    config: ReferenceConfig
    potential: SitePotential
    predictor: Predictor
    R_dom: float
    buffer: float
    skin: float
    domain: SiteSet
    x: np.ndarray
    y0: np.ndarray
    free: np.ndarray
    centers: np.ndarray
    phi0: np.ndarray
    f_ext: np.ndarray | None = None
    _bonds: BondList | None = field(default=None, repr=False)
    rebuilds: int = 0

    @property
    def R_free(self) -> float:
        return self.R_dom - self.buffer

    @property
    def n_sites(self) -> int:
        return len(self.domain)

    @property
    def d_s(self) -> int:
        return self.domain.lattice.d_s

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def period(self) -> float | None:
        return self.domain.lattice.period

    def bonds_for(self, y: np.ndarray) -> BondList:
        if self._bonds is None or self._bonds.stale(y):
            self._bonds = _bonds(self.potential, self.x, y, self.centers, self.period, self.skin)
            self.rebuilds += 1
        return self._bonds

    def full(self, u: Displacement | np.ndarray | None) -> np.ndarray:
        """Per-site displacement array (N, d_s)."""
        if u is None:
            return np.zeros((self.n_sites, self.d_s))
        values = u.values if isinstance(u, Displacement) else np.asarray(u, dtype=float)
        if values.shape != (self.n_sites, self.d_s):
            raise InputError(
                f"displacement has shape {values.shape}, model needs {(self.n_sites, self.d_s)}", module="relax"
            )
        return values

    def pack(self, u: np.ndarray) -> np.ndarray:
        return self.full(u)[self.free].ravel()

    def unpack(self, z: np.ndarray) -> np.ndarray:
        u = np.zeros((self.n_sites, self.d_s))
        u[self.free] = np.asarray(z, dtype=float).reshape(-1, self.d_s)
        return u

    def displacement(self, z: np.ndarray) -> Displacement:
        return Displacement(domain=self.domain, values=self.unpack(z), clamp_radius=self.R_free)

    def min_distance(self, y: np.ndarray) -> float:
        bonds = self.bonds_for(y)
        if len(bonds) == 0:
            return math.inf
        return float(np.min(np.linalg.norm(bonds.vectors(y), axis=1)))

    def summary(self) -> dict:
        return {
            "R_dom": self.R_dom,
            "buffer": self.buffer,
            "skin": self.skin,
            "n_sites": self.n_sites,
            "n_free": self.n_free,
            "n_centers": len(self.centers),
            "neighbor_rebuilds": self.rebuilds,
        }


def _bonds(potential: SitePotential, x: np.ndarray, y: np.ndarray, centers: np.ndarray, period, skin: float) -> BondList:
    if potential.reference_stencil:
        return build_bonds(x, centers, potential.r_cut, reference=x, positions=y, period=period, static=True)
    return build_bonds(y, centers, potential.r_cut + skin, reference=x, period=period, skin=skin)


def build_model(
    config: ReferenceConfig,
    potential: SitePotential,
    predictor: Predictor | None = None,
    *,
    R_dom: float,
    buffer: float | None = None,
    skin: float | None = None,
    f_ext: np.ndarray | None = None,
    check_admissible: bool = True,
) -> EnergyModel:
    lattice = config.lattice
    if predictor is None:
        predictor = PointDefectPredictor(lattice.d_s)
    if skin is None:
        skin = 0.0 if potential.reference_stencil else 0.3 * lattice.atom_spacing()
    jump = float(np.linalg.norm(predictor.burgers)) if isinstance(predictor, DislocationPredictor) else 0.0
    if buffer is None:
        buffer = 2.0 * (potential.r_cut + skin + jump)
    if not R_dom > config.R_def + buffer:
        raise ConfigError(
            f"R_dom={R_dom} must exceed R_def + buffer = {config.R_def} + {buffer:.4g}", module="relax"
        )
    domain = generate_sites(config, R_dom)
    x = domain.reference_positions()
    y0 = x + predictor.displacement(domain.positions)
    r = np.linalg.norm(domain.positions, axis=1)
    R_free = R_dom - buffer
    free = r <= R_free + 1e-9
    centers = np.flatnonzero(r <= R_free + potential.r_cut + skin + jump + 1e-9)

    if check_admissible:
        check_predictor_admissible(predictor, domain)

    bonds = _bonds(potential, x, y0, centers, lattice.period, skin)
    phi0 = potential.site_energies(bonds.center, bonds.vectors(y0), bonds.ref, len(domain))
    ext = None
    if f_ext is not None:
        ext = np.asarray(f_ext, dtype=float).reshape(len(domain), lattice.d_s).copy()
        ext[~free] = 0.0
    model = EnergyModel(
        config=config,
        potential=potential,
        predictor=predictor,
        R_dom=float(R_dom),
        buffer=float(buffer),
        skin=float(skin),
        domain=domain,
        x=x,
        y0=y0,
        free=free,
        centers=centers,
        phi0=phi0,
        f_ext=ext,
        _bonds=bonds,
    )
    logger.info(
        "energy model: %d sites, %d free, %d centers, %d bonds (buffer %.4g, skin %.3g)",
        len(domain),
        model.n_free,
        len(centers),
        len(bonds),
        buffer,
        skin,
    )
    return model


def site_energy_changes(model: EnergyModel, u: Displacement | np.ndarray | None) -> np.ndarray:
    """Φ_ℓ(y0 + u) − Φ_ℓ(y0) per site (zero outside the summed centers)."""
    U = model.full(u)
    y = model.y0 + U
    bonds = model.bonds_for(y)
    phi = model.potential.site_energies(bonds.center, bonds.vectors(y), bonds.ref, model.n_sites)
    out = np.zeros(model.n_sites)
    out[model.centers] = phi[model.centers] - model.phi0[model.centers]
    return out


def energy_diff(model: EnergyModel, u: Displacement | np.ndarray | None) -> float:
    U = model.full(u)
    energy = float(np.sum(site_energy_changes(model, U)))
    if model.f_ext is not None:
        energy -= float(np.sum(model.f_ext * U))
    return energy


def gradient(model: EnergyModel, u: Displacement | np.ndarray | None) -> np.ndarray:
    """∂E/∂u(ℓ) for every domain site, shape (N, d_s)."""
    U = model.full(u)
    y = model.y0 + U
    bonds = model.bonds_for(y)
    weights = np.zeros(model.n_sites)
    weights[model.centers] = 1.0
    grad = model.potential.weighted_gradient(
        bonds.center, bonds.neighbor, bonds.vectors(y), bonds.ref, weights, model.n_sites
    )
    if model.f_ext is not None:
        grad = grad - model.f_ext
    return grad


def free_gradient(model: EnergyModel, u: Displacement | np.ndarray | None) -> np.ndarray:
    g = gradient(model, u)
    g[~model.free] = 0.0
    return g


def residual_force(model: EnergyModel) -> np.ndarray:
    """f(ℓ) = −∂E/∂u(ℓ) at u = 0, on all domain sites."""
    return -gradient(model, None)


def hessian_vector(
    model: EnergyModel,
    u: Displacement | np.ndarray | None,
    v: np.ndarray,
    step: float = HVP_STEP,
) -> np.ndarray:
    """Central difference of the free gradient along v."""
    U = model.full(u)
    V = np.asarray(v, dtype=float).reshape(U.shape).copy()
    V[~model.free] = 0.0
    scale = float(np.max(np.abs(V)))
    if scale == 0.0:
        return np.zeros_like(U)
    h = step / scale
    return (free_gradient(model, U + h * V) - free_gradient(model, U - h * V)) / (2.0 * h)


def stability_diagnostic(model: EnergyModel, u: Displacement | np.ndarray | None, samples: int = 8, seed: int = 0) -> float:
    """Smallest Rayleigh quotient v·Hv / v·v over random free-site directions."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(samples):
        v = np.zeros((model.n_sites, model.d_s))
        v[model.free] = rng.standard_normal((model.n_free, model.d_s))
        hv = hessian_vector(model, u, v)
        worst = min(worst, float(np.sum(v * hv) / np.sum(v * v)))
    return worst
