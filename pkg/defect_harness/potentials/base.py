from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from defect_harness.errors import ConfigError, EvaluationError, InputError
from defect_harness.stencil.weights import WeightFunction

# Pair distances below this are collisions.
COLLISION_DISTANCE = 1e-8


@dataclass(frozen=True, slots=True)
class CutoffPolicy:
    """How far a potential's sums run.

    `hard` uses `radius` as is. `adaptive` starts from `radius` and grows it by 1.25
    until the envelope tail bound drops below `tol` times the accumulated homogeneous
    sum, stopping at `max_radius`. In both modes the truncated functions are shifted to
    vanish at the radius when `shift` is set.
    """

    mode: str = "hard"
    radius: float = 3.0
    tol: float = 1e-10
    max_radius: float = 40.0
    shift: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("hard", "adaptive"):
            raise ConfigError(f"Unknown cutoff mode: {self.mode}", module="potentials")
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ConfigError(f"cutoff radius must be positive, got {self.radius}", module="potentials")
        if self.max_radius < self.radius:
            raise ConfigError(
                f"cutoff max_radius {self.max_radius} is below the radius {self.radius}", module="potentials"
            )


@dataclass(slots=True)
class CutoffReport:
    mode: str
    radius: float
    tail_bound: float
    accumulated: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "radius": self.radius,
            "tail_bound": self.tail_bound,
            "accumulated": self.accumulated,
            "converged": self.converged,
        }


@runtime_checkable
class SitePotential(Protocol):
    """Site energy Φ_ℓ as a function of the neighbour vectors y(m) − y(ℓ).

    Bond arrays describe many sites at once: bond b joins `center[b]` to a neighbour with
    deformed vector `vec[b]` and reference vector `ref[b]`. `ref` only matters for
    potentials that act on displacement differences (springs) or pick their window in
    the reference (tight binding, `reference_stencil`).
    """

    name: str
    reference_stencil: bool

    @property
    def r_cut(self) -> float: ...

    @property
    def smoothness(self) -> int: ...

    def homogeneity_exponent(self, d_s: int) -> float: ...

    def locality_weights(self, d: int) -> tuple[WeightFunction, WeightFunction]: ...

    def with_radius(self, radius: float) -> SitePotential: ...

    def envelope(self, r: float) -> float: ...

    def local_energy(self, vec: np.ndarray, ref: np.ndarray) -> float: ...

    def local_gradient(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray: ...

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray: ...

    def site_energies(self, center: np.ndarray, vec: np.ndarray, ref: np.ndarray, n_sites: int) -> np.ndarray: ...

    def weighted_gradient(
        self,
        center: np.ndarray,
        neighbor: np.ndarray,
        vec: np.ndarray,
        ref: np.ndarray,
        weights: np.ndarray,
        n_sites: int,
    ) -> np.ndarray: ...


def bond_lengths(vec: np.ndarray, center: np.ndarray | None = None, neighbor: np.ndarray | None = None) -> np.ndarray:
    r = np.linalg.norm(vec, axis=1)
    if r.size and r.min() <= COLLISION_DISTANCE:
        b = int(np.argmin(r))
        pair = None if center is None or neighbor is None else (int(center[b]), int(neighbor[b]))
        raise EvaluationError(f"collision: bond {b} has length {r[b]:.3e}", pair=pair)
    return r


class BondPotential:
    """Potentials whose site energy is assembled from per-bond terms.

    Subclasses implement the bond-array methods; the single-site `local_*` methods
    follow by treating the environment as bonds from one center.
    """

    def local_energy(self, vec: np.ndarray, ref: np.ndarray) -> float:
        vec, ref = as_environment(vec, ref)
        return float(self.site_energies(np.zeros(len(vec), dtype=np.int64), vec, ref, 1)[0])

    def local_gradient(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        vec, ref = as_environment(vec, ref)
        m = len(vec)
        weights = np.zeros(m + 1)
        weights[0] = 1.0
        grad = self.weighted_gradient(
            np.zeros(m, dtype=np.int64), np.arange(1, m + 1), vec, ref, weights, m + 1
        )
        return grad[1:]

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        return fd_hessian(self.local_gradient, vec, ref)


class EnvironmentPotential:
    """Potentials evaluated one environment at a time; bond-array methods loop over centers."""

    def site_energies(self, center: np.ndarray, vec: np.ndarray, ref: np.ndarray, n_sites: int) -> np.ndarray:
        out = np.zeros(n_sites)
        for c, rows in _group(center):
            out[c] = self.local_energy(vec[rows], ref[rows])
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
        grad = np.zeros((n_sites, vec.shape[1]))
        for c, rows in _group(center):
            if weights[c] == 0.0:
                continue
            g = weights[c] * self.local_gradient(vec[rows], ref[rows])
            np.add.at(grad, neighbor[rows], g)
            grad[c] -= g.sum(axis=0)
        return grad

    def local_hessian(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        return fd_hessian(self.local_gradient, vec, ref)


def fd_hessian(gradient, vec: np.ndarray, ref: np.ndarray, h: float | None = None) -> np.ndarray:
    """Second partials (M, M, d_s, d_s) by central differences of a local gradient."""
    vec, ref = as_environment(vec, ref)
    m, ds = vec.shape
    if h is None:
        h = 1e-5 * float(np.min(np.linalg.norm(ref, axis=1))) if m else 1e-5
    hess = np.zeros((m, m, ds, ds))
    for b in range(m):
        for beta in range(ds):
            plus = vec.copy()
            minus = vec.copy()
            plus[b, beta] += h
            minus[b, beta] -= h
            hess[:, b, :, beta] = (gradient(plus, ref) - gradient(minus, ref)) / (2.0 * h)
    return 0.5 * (hess + hess.transpose(1, 0, 3, 2))


def as_environment(vec: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vec = np.atleast_2d(np.asarray(vec, dtype=float))
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if vec.shape != ref.shape:
        raise InputError(f"environment shapes differ: {vec.shape} vs {ref.shape}", module="potentials")
    return vec, ref


def _group(center: np.ndarray):
    order = np.argsort(center, kind="stable")
    sorted_c = center[order]
    cuts = np.flatnonzero(np.diff(sorted_c)) + 1
    for rows in np.split(order, cuts):
        if len(rows):
            yield int(center[rows[0]]), rows
