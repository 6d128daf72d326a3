from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from defect_harness.errors import ConfigError, EvaluationError
from defect_harness.potentials.base import BondPotential, CutoffPolicy, bond_lengths
from defect_harness.stencil.weights import WeightFunction


class PairKind(str, Enum):
    LJ = "lj"
    LJ_CLASSIC = "lj_classic"
    MORSE = "morse"
    HARMONIC = "harmonic"


@dataclass(frozen=True, slots=True)
class PairForm:
    """Radial pair function.

    lj:         C1 r^-p - C2 r^-q
    lj_classic: 4 eps [(sigma/r)^12 - (sigma/r)^6]
    morse:      D [e^{-2a(r-r0)} - 2 e^{-a(r-r0)}]
    harmonic:   k (r - r0)^2
    """

    kind: PairKind
    p: float = 12.0
    q: float = 6.0
    C1: float = 1.0
    C2: float = 1.0
    epsilon: float = 1.0
    sigma: float = 1.0
    D: float = 1.0
    a: float = 1.0
    r0: float = 1.0
    k: float = 1.0

    def __post_init__(self) -> None:
        kind = PairKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PairKind.LJ and not (self.p > self.q > 0.0 and self.C1 > 0.0 and self.C2 > 0.0):
            raise ConfigError(
                f"generalized LJ needs p > q > 0 and C1, C2 > 0, got p={self.p} q={self.q} C1={self.C1} C2={self.C2}",
                module="potentials",
            )
        if kind is PairKind.LJ_CLASSIC and not (self.epsilon > 0.0 and self.sigma > 0.0):
            raise ConfigError("LJ epsilon and sigma must be positive", module="potentials")
        if kind is PairKind.MORSE and not (self.D > 0.0 and self.a > 0.0):
            raise ConfigError("Morse D and a must be positive", module="potentials")

    @classmethod
    def lj(cls, p: float, q: float, C1: float, C2: float) -> PairForm:
        return cls(kind=PairKind.LJ, p=p, q=q, C1=C1, C2=C2)

    @classmethod
    def lj_classic(cls, epsilon: float = 1.0, sigma: float = 1.0) -> PairForm:
        return cls(kind=PairKind.LJ_CLASSIC, epsilon=epsilon, sigma=sigma)

    @classmethod
    def morse(cls, D: float = 1.0, a: float = 1.0, r0: float = 1.0) -> PairForm:
        return cls(kind=PairKind.MORSE, D=D, a=a, r0=r0)

    @classmethod
    def harmonic(cls, k: float = 1.0, r0: float = 1.0) -> PairForm:
        return cls(kind=PairKind.HARMONIC, k=k, r0=r0)

    @property
    def decay_power(self) -> float | None:
        """Slowest algebraic decay exponent of φ, None for exponential or confining forms."""
        if self.kind is PairKind.LJ:
            return self.q
        if self.kind is PairKind.LJ_CLASSIC:
            return 6.0
        return None

    def lj_coefficients(self) -> tuple[float, float, float, float]:
        if self.kind is PairKind.LJ_CLASSIC:
            return 12.0, 6.0, 4.0 * self.epsilon * self.sigma**12, 4.0 * self.epsilon * self.sigma**6
        return self.p, self.q, self.C1, self.C2

    def envelope(self, r: float) -> float:
        """Nonincreasing bound on |φ(r)|."""
        if self.kind in (PairKind.LJ, PairKind.LJ_CLASSIC):
            p, q, C1, C2 = self.lj_coefficients()
            return C1 * r**-p + C2 * r**-q
        if self.kind is PairKind.MORSE:
            x = max(r - self.r0, 0.0)
            return self.D * (math.exp(-2.0 * self.a * x) + 2.0 * math.exp(-self.a * x))
        return math.inf


def pair_phi(form: PairForm, r: np.ndarray | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """φ, φ' and φ'' at r > 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise EvaluationError(f"pair distance must be positive, got {float(np.min(r))}")
    if form.kind in (PairKind.LJ, PairKind.LJ_CLASSIC):
        p, q, C1, C2 = form.lj_coefficients()
        a = C1 * r**-p
        b = C2 * r**-q
        return a - b, (-p * a + q * b) / r, (p * (p + 1.0) * a - q * (q + 1.0) * b) / r**2
    if form.kind is PairKind.MORSE:
        e1 = np.exp(-form.a * (r - form.r0))
        e2 = e1 * e1
        D, a = form.D, form.a
        return D * (e2 - 2.0 * e1), D * (-2.0 * a * e2 + 2.0 * a * e1), D * (4.0 * a * a * e2 - 2.0 * a * a * e1)
    x = r - form.r0
    return form.k * x * x, 2.0 * form.k * x, np.full_like(r, 2.0 * form.k)


@dataclass(frozen=True, slots=True)
class PairPotential(BondPotential):
    """Φ_ℓ = ½ Σ_k φ(|y_k − y_ℓ|), truncated at the cutoff radius."""

    form: PairForm
    cutoff: CutoffPolicy = field(default_factory=CutoffPolicy)
    name: str = "pair"
    reference_stencil: bool = False

    @property
    def r_cut(self) -> float:
        return self.cutoff.radius

    @property
    def smoothness(self) -> int:
        return 4

    def homogeneity_exponent(self, d_s: int) -> float:
        return math.inf

    def locality_weights(self, d: int) -> tuple[WeightFunction, WeightFunction]:
        q = self.form.decay_power
        if q is None or (self.cutoff.mode == "hard" and q <= d):
            alpha = self.form.a if self.form.kind is PairKind.MORSE else 1.0
            return WeightFunction.exponential(alpha, k=1, d=d), WeightFunction.exponential(alpha, k=2, d=d)
        # w_1 ~ (1+r)^{-(q+1)}, w_2 ~ (1+r)^{-(q+2)}
        return WeightFunction.algebraic(1, d, q - d), WeightFunction.algebraic(2, d, q - d)

    def with_radius(self, radius: float) -> PairPotential:
        cutoff = replace(self.cutoff, mode="hard", radius=radius, max_radius=max(radius, self.cutoff.max_radius))
        return replace(self, cutoff=cutoff)

    def envelope(self, r: float) -> float:
        return self.form.envelope(r)

    def phi(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        inside = r < self.r_cut
        v, d1, d2 = pair_phi(self.form, np.where(inside, r, self.r_cut))
        if self.cutoff.shift:
            v = v - pair_phi(self.form, self.r_cut)[0]
        return np.where(inside, v, 0.0), np.where(inside, d1, 0.0), np.where(inside, d2, 0.0)

    def site_energies(self, center: np.ndarray, vec: np.ndarray, ref: np.ndarray, n_sites: int) -> np.ndarray:
        r = bond_lengths(vec)
        return np.bincount(center, weights=0.5 * self.phi(r)[0], minlength=n_sites)

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
        d1 = self.phi(r)[1]
        c = (0.5 * weights[center] * d1 / r)[:, None] * vec
        grad = np.zeros((n_sites, vec.shape[1]))
        np.add.at(grad, neighbor, c)
        np.add.at(grad, center, -c)
        return grad

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        vec = np.atleast_2d(np.asarray(vec, dtype=float))
        m, ds = vec.shape
        r = bond_lengths(vec)
        _, d1, d2 = self.phi(r)
        unit = vec / r[:, None]
        outer = unit[:, :, None] * unit[:, None, :]
        blocks = 0.5 * (d2[:, None, None] * outer + (d1 / r)[:, None, None] * (np.eye(ds) - outer))
        hess = np.zeros((m, m, ds, ds))
        hess[np.arange(m), np.arange(m)] = blocks
        return hess
