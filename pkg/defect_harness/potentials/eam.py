from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.polynomial import Polynomial

from defect_harness.errors import ConfigError, EvaluationError
from defect_harness.potentials.base import BondPotential, CutoffPolicy, bond_lengths
from defect_harness.stencil.weights import WeightFunction


class EmbeddingKind(str, Enum):
    MINUS_SQRT = "minus_sqrt"
    POLYNOMIAL = "polynomial"


class DensityKind(str, Enum):
    POWER = "power"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True, slots=True)
class Embedding:
    kind: EmbeddingKind = EmbeddingKind.MINUS_SQRT
    coefficients: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        kind = EmbeddingKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if kind is EmbeddingKind.POLYNOMIAL and not self.coefficients:
            raise ConfigError("polynomial embedding needs coefficients", module="potentials")

    def __call__(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rho = np.asarray(rho, dtype=float)
        if self.kind is EmbeddingKind.MINUS_SQRT:
            if np.any(rho <= 0.0):
                raise EvaluationError(f"embedding density must be positive, got {float(np.min(rho))}")
            s = np.sqrt(rho)
            return -s, -0.5 / s, 0.25 / (s * rho)
        poly = Polynomial(self.coefficients)
        d1 = poly.deriv(1)
        d2 = poly.deriv(2)
        return poly(rho), d1(rho), d2(rho)


@dataclass(frozen=True, slots=True)
class Density:
    kind: DensityKind = DensityKind.POWER
    q: float = 6.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        kind = DensityKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is DensityKind.POWER and not self.q > 0.0:
            raise ConfigError(f"density exponent q must be positive, got {self.q}", module="potentials")
        if kind is DensityKind.EXPONENTIAL and not self.beta > 0.0:
            raise ConfigError(f"density rate beta must be positive, got {self.beta}", module="potentials")

    def __call__(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        if self.kind is DensityKind.POWER:
            v = (1.0 + r) ** -self.q
            return v, -self.q * v / (1.0 + r), self.q * (self.q + 1.0) * v / (1.0 + r) ** 2
        v = np.exp(-self.beta * r)
        return v, -self.beta * v, self.beta**2 * v


@dataclass(frozen=True, slots=True)
class EAMPotential(BondPotential):
    """Φ_ℓ = J(Σ_k ϱ(|y_k − y_ℓ|))."""

    embedding: Embedding = field(default_factory=Embedding)
    density: Density = field(default_factory=Density)
    cutoff: CutoffPolicy = field(default_factory=CutoffPolicy)
    name: str = "eam"
    reference_stencil: bool = False

    @property
    def r_cut(self) -> float:
        return self.cutoff.radius

    @property
    def smoothness(self) -> int:
        return 4

    @property
    def decay_power(self) -> float | None:
        return self.density.q if self.density.kind is DensityKind.POWER else None

    def homogeneity_exponent(self, d_s: int) -> float:
        q = self.decay_power
        return math.inf if q is None else q - d_s

    def locality_weights(self, d: int) -> tuple[WeightFunction, WeightFunction]:
        q = self.decay_power
        if q is None or (self.cutoff.mode == "hard" and q <= d):
            beta = self.density.beta if q is None else 1.0
            return WeightFunction.exponential(beta, k=1, d=d), WeightFunction.exponential(beta, k=2, d=d)
        return WeightFunction.algebraic(1, d, q - d), WeightFunction.algebraic(2, d, q - d)

    def with_radius(self, radius: float) -> EAMPotential:
        cutoff = replace(self.cutoff, mode="hard", radius=radius, max_radius=max(radius, self.cutoff.max_radius))
        return replace(self, cutoff=cutoff)

    def envelope(self, r: float) -> float:
        return float(self.density(r)[0])

    def rho(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        inside = r < self.r_cut
        v, d1, d2 = self.density(np.where(inside, r, self.r_cut))
        if self.cutoff.shift:
            v = v - self.density(self.r_cut)[0]
        return np.where(inside, v, 0.0), np.where(inside, d1, 0.0), np.where(inside, d2, 0.0)

    def site_energies(self, center: np.ndarray, vec: np.ndarray, ref: np.ndarray, n_sites: int) -> np.ndarray:
        r = bond_lengths(vec)
        total = np.bincount(center, weights=self.rho(r)[0], minlength=n_sites)
        out = np.zeros(n_sites)
        has = np.bincount(center, minlength=n_sites) > 0
        out[has] = self.embedding(total[has])[0]
        return out

    def weighted_gradient(
        self,
        center: np.ndarray,
        neighbor: np.ndarray,
        vec: np.ndarray,
        ref: np.ndarray,
        weights: np.ndarray,
        n_sites: int,
    ) -> np.ndarray:
        r = bond_lengths(vec, center, neighbor)
        rho, d1, _ = self.rho(r)
        total = np.bincount(center, weights=rho, minlength=n_sites)
        has = np.bincount(center, minlength=n_sites) > 0
        jp = np.zeros(n_sites)
        jp[has] = self.embedding(total[has])[1]
        c = (weights[center] * jp[center] * d1 / r)[:, None] * vec
        grad = np.zeros((n_sites, vec.shape[1]))
        np.add.at(grad, neighbor, c)
        np.add.at(grad, center, -c)
        return grad

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        vec = np.atleast_2d(np.asarray(vec, dtype=float))
        m, ds = vec.shape
        r = bond_lengths(vec)
        rho, d1, d2 = self.rho(r)
        _, jp, jpp = self.embedding(np.sum(rho))
        unit = vec / r[:, None]
        a = d1[:, None] * unit
        outer = unit[:, :, None] * unit[:, None, :]
        hess = float(jpp) * a[:, None, :, None] * a[None, :, None, :]
        diag = float(jp) * (d2[:, None, None] * outer + (d1 / r)[:, None, None] * (np.eye(ds) - outer))
        hess[np.arange(m), np.arange(m)] += diag
        return hess
