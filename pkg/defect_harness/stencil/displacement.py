from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import SiteSet


@dataclass(slots=True, eq=False)
class Displacement:
    """Compact displacement on a site set; constant (`clamp_value`) beyond `clamp_radius`.

    The default clamp radius leaves two lattice vectors of clamped sites inside the
    domain, so every site whose stencil sees a nonzero difference is a domain site.
    """

    domain: SiteSet
    values: np.ndarray
    clamp_radius: float | None = None
    clamp_value: np.ndarray | None = None

    def __post_init__(self) -> None:
        d_s = self.domain.lattice.d_s
        values = np.array(self.values, dtype=float).reshape(len(self.domain), d_s)
        if not np.all(np.isfinite(values)):
            raise InputError("displacement values must be finite", module="stencil")
        if self.clamp_radius is None:
            self.clamp_radius = self.domain.radius - 2.0 * self.domain.lattice.max_vector_length
        if self.clamp_radius > self.domain.radius:
            raise InputError(
                f"clamp radius {self.clamp_radius} exceeds domain radius {self.domain.radius}", module="stencil"
            )
        clamp = np.zeros(d_s) if self.clamp_value is None else np.asarray(self.clamp_value, dtype=float)
        values[~self.free_mask()] = clamp
        self.values = values
        self.clamp_value = clamp

    @classmethod
    def zeros(cls, domain: SiteSet, clamp_radius: float | None = None) -> Displacement:
        return cls(domain=domain, values=np.zeros((len(domain), domain.lattice.d_s)), clamp_radius=clamp_radius)

    @classmethod
    def from_function(
        cls,
        domain: SiteSet,
        fn: Callable[[np.ndarray], np.ndarray],
        clamp_radius: float | None = None,
    ) -> Displacement:
        return cls(domain=domain, values=fn(domain.positions), clamp_radius=clamp_radius)

    def with_values(self, values: np.ndarray) -> Displacement:
        return Displacement(
            domain=self.domain,
            values=values,
            clamp_radius=self.clamp_radius,
            clamp_value=self.clamp_value,
        )

    def free_mask(self) -> np.ndarray:
        r = np.linalg.norm(self.domain.positions - self.domain.center, axis=1)
        return r <= self.clamp_radius + 1e-9

    def value_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.domain.lattice.d)
        idx = self.domain.locate(points)
        out = np.tile(self.clamp_value, (len(points), 1))
        inside = idx >= 0
        out[inside] = self.values[idx[inside]]
        missing = ~inside & (np.linalg.norm(points - self.domain.center, axis=1) <= self.clamp_radius + 1e-9)
        if np.any(missing):
            bad = points[np.argmax(missing)]
            raise InputError(f"point {bad.tolist()} is inside the clamp radius but not a site", module="stencil")
        return out


def finite_difference(u: Displacement, ell: Sequence[float], rho: Sequence[float]) -> np.ndarray:
    """D_ρ u(ℓ) = u(ℓ+ρ) - u(ℓ)."""
    ell = np.asarray(ell, dtype=float)
    vals = u.value_at(np.vstack([ell, ell + np.asarray(rho, dtype=float)]))
    return vals[1] - vals[0]
