from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from defect_harness.errors import ConfigError, EigenError, EvaluationError
from defect_harness.potentials.base import COLLISION_DISTANCE, EnvironmentPotential, as_environment
from defect_harness.stencil.weights import WeightFunction

_FD_CHUNK = 64


def grand_potential(eps: np.ndarray, mu: float, kT: float) -> np.ndarray:
    """f(ε) = 2 k_BT log(1 − f_FD(ε)), evaluated as −2 k_BT log(1 + e^{−(ε−μ)/k_BT})."""
    return -2.0 * kT * np.logaddexp(0.0, -(np.asarray(eps, dtype=float) - mu) / kT)


@dataclass(frozen=True, slots=True)
class TightBindingPotential(EnvironmentPotential):
    """Two-centre orthogonal tight binding, one orbital per site.

    h_hop(r) = −t0 e^{−β(r−1)} f_c(r), h_ons = eps0 + kappa Σ e^{−β_ons r} f_c(r), with
    f_c(r) = (1 − (r/r_c)²)⁴ on r < r_c. Φ_ℓ = Σ_s f(ε_s) |ψ_s(ℓ)|² on the reference ball of
    radius `window` around ℓ.
    """

    t0: float = 1.0
    beta: float = 1.0
    r_c: float = 2.5
    eps0: float = 0.0
    kappa: float = 0.0
    beta_ons: float = 1.0
    mu: float = 0.0
    kT: float = 0.1
    window: float | None = None
    max_window: float = 16.0
    window_tol: float = 1e-8
    fd_step: float = 1e-5
    name: str = "tb"
    reference_stencil: bool = True

    def __post_init__(self) -> None:
        if not self.kT > 0.0:
            raise ConfigError(f"tight-binding temperature must be positive, got {self.kT}", module="potentials")
        if not self.r_c > 0.0:
            raise ConfigError(f"hopping cutoff r_c must be positive, got {self.r_c}", module="potentials")
        if self.window is not None and not self.window > 0.0:
            raise ConfigError(f"tight-binding window must be positive, got {self.window}", module="potentials")

    @property
    def r_cut(self) -> float:
        return 2.0 * self.r_c if self.window is None else self.window

    @property
    def smoothness(self) -> int:
        return 3

    def homogeneity_exponent(self, d_s: int) -> float:
        return math.inf

    def locality_weights(self, d: int) -> tuple[WeightFunction, WeightFunction]:
        return WeightFunction.exponential(self.beta, k=1, d=d), WeightFunction.exponential(self.beta, k=2, d=d)

    def with_radius(self, radius: float) -> TightBindingPotential:
        return replace(self, window=radius)

    def envelope(self, r: float) -> float:
        return abs(self.t0) * math.exp(-self.beta * (r - 1.0)) if r < self.r_c else 0.0

    def cutoff_function(self, r: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(r, dtype=float) / self.r_c, 0.0, 1.0)
        return (1.0 - x * x) ** 4

    def hopping(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return -self.t0 * np.exp(-self.beta * (r - 1.0)) * self.cutoff_function(r)

    def hamiltonian(self, nodes: np.ndarray) -> np.ndarray:
        """Hamiltonians for a batch of node sets (B, n, d_s); node 0 is the center."""
        nodes = np.asarray(nodes, dtype=float)
        n = nodes.shape[1]
        diff = nodes[:, :, None, :] - nodes[:, None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        off = ~np.eye(n, dtype=bool)
        r_off = np.where(off, r, np.inf)
        if n > 1 and r_off.min() <= COLLISION_DISTANCE:
            raise EvaluationError(f"collision in tight-binding window: distance {r_off.min():.3e}")
        fc = np.where(off, self.cutoff_function(np.where(off, r, 0.0)), 0.0)
        hop = np.where(off, -self.t0 * np.exp(-self.beta * (r - 1.0)) * fc, 0.0)
        dens = np.sum(np.where(off, np.exp(-self.beta_ons * r) * fc, 0.0), axis=2)
        idx = np.arange(n)
        hop[:, idx, idx] = self.eps0 + self.kappa * dens
        return hop

    def energies(self, nodes: np.ndarray) -> np.ndarray:
        h = self.hamiltonian(nodes)
        try:
            eps, psi = np.linalg.eigh(h)
        except np.linalg.LinAlgError as exc:
            raise EigenError(f"tight-binding eigensolve failed: {exc}") from exc
        return np.sum(grand_potential(eps, self.mu, self.kT) * psi[:, 0, :] ** 2, axis=1)

    def local_energy(self, vec: np.ndarray, ref: np.ndarray) -> float:
        vec, ref = as_environment(vec, ref)
        nodes = np.vstack([np.zeros((1, vec.shape[1])), vec])
        return float(self.energies(nodes[None])[0])

    def local_gradient(self, vec: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """Richardson-extrapolated central differences, step fd_step × nearest reference distance."""
        vec, ref = as_environment(vec, ref)
        m, ds = vec.shape
        if m == 0:
            return np.zeros((0, ds))
        h = self.fd_step * float(np.min(np.linalg.norm(ref, axis=1)))
        base = np.vstack([np.zeros((1, ds)), vec])
        # rows: (component, sign * step) for steps +h, -h, +h/2, -h/2
        steps = np.array([h, -h, 0.5 * h, -0.5 * h])
        jobs = [(b, beta) for b in range(m) for beta in range(ds)]
        values = np.zeros((len(jobs), 4))
        flat = [(k, s) for k in range(len(jobs)) for s in range(4)]
        for start in range(0, len(flat), _FD_CHUNK):
            chunk = flat[start : start + _FD_CHUNK]
            batch = np.repeat(base[None], len(chunk), axis=0)
            for row, (k, s) in enumerate(chunk):
                b, beta = jobs[k]
                batch[row, b + 1, beta] += steps[s]
            e = self.energies(batch)
            for row, (k, s) in enumerate(chunk):
                values[k, s] = e[row]
        d_h = (values[:, 0] - values[:, 1]) / (2.0 * h)
        d_half = (values[:, 2] - values[:, 3]) / h
        return ((4.0 * d_half - d_h) / 3.0).reshape(m, ds)
