from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from defect_harness.errors import ConfigError
from defect_harness.potentials.base import BondPotential
from defect_harness.stencil.weights import WeightFunction


@dataclass(frozen=True, slots=True)
class SpringPotential(BondPotential):
    """Linear springs on a fixed reference stencil: V(g) = (κ/4) Σ_{|ρ| ≤ stencil_radius} |g_ρ|².

    g_ρ is the displacement difference y(ℓ+ρ) − y(ℓ) − ρ. With κ = 1 and the four nearest
    neighbours of Z² the homogeneous operator is the discrete Laplacian; κ < 0 gives
    the negative-stiffness toy.
    """

    kappa: float = 1.0
    stencil_radius: float = 1.0
    name: str = "springs"
    reference_stencil: bool = True

    def __post_init__(self) -> None:
        if not (self.stencil_radius > 0.0 and math.isfinite(self.stencil_radius)):
            raise ConfigError(f"spring stencil radius must be positive, got {self.stencil_radius}", module="potentials")
        if not math.isfinite(self.kappa):
            raise ConfigError("spring constant must be finite", module="potentials")

    @property
    def r_cut(self) -> float:
        return self.stencil_radius * (1.0 + 1e-9)

    @property
    def smoothness(self) -> int:
        return 4

    def homogeneity_exponent(self, d_s: int) -> float:
        return math.inf

    def locality_weights(self, d: int) -> tuple[WeightFunction, WeightFunction]:
        return WeightFunction.exponential(1.0, k=1, d=d), WeightFunction.exponential(1.0, k=2, d=d)

    def with_radius(self, radius: float) -> SpringPotential:
        return self

    def envelope(self, r: float) -> float:
        return 0.0 if r > self.r_cut else abs(self.kappa) * r * r

    def _in_stencil(self, ref: np.ndarray) -> np.ndarray:
        return np.linalg.norm(ref, axis=1) <= self.r_cut

    def site_energies(self, center: np.ndarray, vec: np.ndarray, ref: np.ndarray, n_sites: int) -> np.ndarray:
        g = vec - ref
        terms = np.where(self._in_stencil(ref), 0.25 * self.kappa * np.sum(g * g, axis=1), 0.0)
        return np.bincount(center, weights=terms, minlength=n_sites)

    def weighted_gradient(
        self,
        center: np.ndarray,
        neighbor: np.ndarray,
        vec: np.ndarray,
        ref: np.ndarray,
        weights: np.ndarray,
        n_sites: int,
    ) -> np.ndarray:
        mask = self._in_stencil(ref)
        c = (0.5 * self.kappa * weights[center] * mask)[:, None] * (vec - ref)
        grad = np.zeros((n_sites, vec.shape[1]))
        np.add.at(grad, neighbor, c)
        np.add.at(grad, center, -c)
        return grad

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        ref = np.atleast_2d(np.asarray(ref, dtype=float))
        m, ds = ref.shape
        hess = np.zeros((m, m, ds, ds))
        mask = self._in_stencil(ref)
        hess[np.arange(m), np.arange(m)] = (0.5 * self.kappa * mask)[:, None, None] * np.eye(ds)
        return hess
