from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from defect_harness.analysis.decay import DecayFit, decay_fit
from defect_harness.errors import BranchError, ConfigError, EvaluationError, InputError, NewtonError, PredictorError
from defect_harness.geometry.admissibility import AdmissibilityReport, admissibility_check
from defect_harness.geometry.lattice import BravaisLattice, ReferenceConfig, SiteSet, generate_sites
from defect_harness.potentials.base import SitePotential
from defect_harness.potentials.environment import HomogeneousStencil
from defect_harness.predictor.cle import (
    TWO_PI,
    CLEKind,
    CLESolution,
    antiplane_cle,
    branch_arg,
    cle_eval,
    cle_from_potential,
    on_branch_cut,
)

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12


@runtime_checkable
class Predictor(Protocol):
    d_s: int

    def displacement(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, slots=True)
class PointDefectPredictor:
    """u0 ≡ 0."""

    d_s: int

    def displacement(self, points: np.ndarray) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(points)), self.d_s))

    def summary(self) -> dict:
        return {"kind": "point_defect"}


@dataclass(frozen=True, slots=True)
class CutFunction:
    """η(t): 0 below `onset`, 1 above 1, quintic smoothstep in between."""

    onset: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.onset < 1.0:
            raise ConfigError(f"eta onset must lie in [0, 1), got {self.onset}", module="predictor")

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        width = 1.0 - self.onset
        s = np.clip((np.asarray(t, dtype=float) - self.onset) / width, 0.0, 1.0)
        value = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
        slope = 30.0 * s * s * (1.0 - s) ** 2 / width
        return value, slope


@dataclass(frozen=True, slots=True, eq=False)
class DislocationPredictor:
    """u0(ℓ) = u_lin(ξ⁻¹(ℓ)) + u^c(ℓ) for a straight dislocation along e3.

    ξ(x) = x − b₁₂ η(|x − x̂|/r̂) arg(x − x̂)/2π moves the in-plane jump of u_lin off Γ
    near the core. `correction` is an optional per-site table keyed by integer lattice
    coordinates.
    """

    lattice: BravaisLattice
    burgers: np.ndarray
    core: np.ndarray
    r_hat: float
    cle: CLESolution
    eta: CutFunction = field(default_factory=CutFunction)
    correction: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    @property
    def d_s(self) -> int:
        return self.lattice.d_s

    @property
    def b12(self) -> np.ndarray:
        return self.burgers[:2]

    @property
    def has_slip(self) -> bool:
        return bool(np.any(self.b12 != 0.0))

    def summary(self) -> dict:
        return {
            "kind": "dislocation",
            "burgers": self.burgers.tolist(),
            "core": self.core.tolist(),
            "r_hat": self.r_hat,
            "eta": {"family": "quintic_smoothstep", "onset": self.eta.onset},
            "cle": self.cle.summary(),
            "correction_sites": len(self.correction),
        }

    def shift(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """h(x) = η(|x−x̂|/r̂)·arg(x−x̂)/2π and its gradient."""
        dx = np.atleast_2d(np.asarray(x, dtype=float))[:, :2] - self.core
        r = np.linalg.norm(dx, axis=1)
        theta = branch_arg(dx)
        eta, deta = self.eta(r / self.r_hat)
        h = eta * theta / TWO_PI
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r[:, None] > 0.0, dx / r[:, None], 0.0)
            dtheta = np.where(r[:, None] > 0.0, np.column_stack([-dx[:, 1], dx[:, 0]]) / (r * r)[:, None], 0.0)
        grad = (deta * theta / (TWO_PI * self.r_hat))[:, None] * radial + (eta / TWO_PI)[:, None] * dtheta
        return h, grad

    def xi(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))[:, :2]
        if not self.has_slip:
            return x.copy()
        _check_off_cut(x, self.core)
        h, _ = self.shift(x)
        return x - h[:, None] * self.b12

    def xi_jacobian(self, x: np.ndarray) -> np.ndarray:
        """det Dξ = 1 − b₁₂·∇h."""
        _, grad = self.shift(x)
        return 1.0 - grad @ self.b12

    def xi_inverse(self, z: np.ndarray) -> np.ndarray:
        """Damped Newton solve of ξ(x) = z, vectorized over points."""
        z = np.atleast_2d(np.asarray(z, dtype=float))[:, :2]
        if not self.has_slip:
            return z.copy()
        _check_off_cut(z, self.core)
        h, _ = self.shift(z)
        x = z + h[:, None] * self.b12
        res = self.xi(x) - z
        err = np.linalg.norm(res, axis=1)
        tol = NEWTON_TOL * np.maximum(1.0, np.linalg.norm(z, axis=1))
        iters = 0
        while np.any(err > tol):
            if iters >= NEWTON_MAX_ITER:
                k = int(np.argmax(err - tol))
                raise NewtonError(
                    f"xi inverse did not converge in {NEWTON_MAX_ITER} iterations (residual {err[k]:.3e})",
                    point=tuple(z[k].tolist()),
                )
            active = err > tol
            _, grad = self.shift(x[active])
            det = 1.0 - grad @ self.b12
            r = res[active]
            # Sherman-Morrison solve of (I − b₁₂ ⊗ ∇h) dx = r
            step = r + self.b12[None, :] * ((grad * r).sum(axis=1) / det)[:, None]
            lam = np.ones(len(step))
            trial = x[active] - step
            trial_err = np.linalg.norm(self.xi(trial) - z[active], axis=1)
            for _ in range(30):
                worse = trial_err >= err[active]
                if not np.any(worse):
                    break
                lam[worse] *= 0.5
                trial[worse] = x[active][worse] - lam[worse, None] * step[worse]
                trial_err[worse] = np.linalg.norm(self.xi(trial[worse]) - z[active][worse], axis=1)
            x[active] = trial
            res[active] = self.xi(trial) - z[active]
            err[active] = np.linalg.norm(res[active], axis=1)
            iters += 1
        if iters:
            logger.debug("xi inverse converged in %d iterations for %d points", iters, len(z))
        return x

    def correction_values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
        out = np.zeros((len(points), self.d_s))
        if not self.correction:
            return out
        reduced = self.lattice.reduced(points)
        rounded = np.rint(reduced).astype(np.int64)
        on = np.all(np.abs(reduced - rounded) < 1e-8, axis=1)
        for k in np.flatnonzero(on):
            value = self.correction.get(tuple(rounded[k].tolist()))
            if value is not None:
                out[k] = value
        return out

    def displacement(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
        return cle_eval(self.cle, self.xi_inverse(points)) + self.correction_values(points)

    def check_bijective(self, n_radii: int = 24, n_angles: int = 96) -> float:
        """Smallest det Dξ on a polar probe grid across the η transition."""
        if not self.has_slip:
            return 1.0
        radii = self.r_hat * np.linspace(max(self.eta.onset, 1e-3) * 0.98, 1.02, n_radii)
        angles = (np.arange(n_angles) + 0.5) * TWO_PI / n_angles
        rr, aa = np.meshgrid(radii, angles, indexing="ij")
        probes = self.core + np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
        worst = float(self.xi_jacobian(probes).min())
        if worst <= 0.0:
            raise PredictorError(
                f"xi is not bijective (min det {worst:.3e}); increase r_hat above {self.r_hat}", module="predictor"
            )
        return worst


def _check_off_cut(x: np.ndarray, core: np.ndarray) -> None:
    cut = on_branch_cut(x, core)
    if np.any(cut):
        raise BranchError(f"point {x[np.argmax(cut)].tolist()} lies on the branch cut from core {core.tolist()}")


def default_core(lattice: BravaisLattice) -> np.ndarray:
    """Cell centroid shifted by a quarter of the minimal cell width along (1, 1)."""
    return lattice.A[:2, :2] @ np.array([0.5, 0.5]) + 0.25 * lattice.min_cell_width * np.ones(2)


def check_cut_avoids_lattice(lattice: BravaisLattice, core: np.ndarray, radius: float) -> float:
    """Smallest |ℓ₂ − x̂₂| over sites with ℓ₁ ≥ x̂₁ in B_radius(x̂); BranchError when zero."""
    sites = generate_sites(ReferenceConfig.homogeneous(lattice), radius, center=core)
    x = sites.positions
    ahead = x[:, 0] >= core[0] - 1e-12
    gap = float(np.min(np.abs(x[ahead, 1] - core[1]))) if np.any(ahead) else math.inf
    if gap <= 1e-9 * lattice.nn_distance:
        raise BranchError(f"branch cut from core {core.tolist()} passes through lattice sites; move the core off the rows")
    return gap


def build_dislocation(
    lattice: BravaisLattice,
    burgers: Sequence[float],
    *,
    core: Sequence[float] | None = None,
    r_hat: float | None = None,
    cle: str = "antiplane",
    potential: SitePotential | None = None,
    eta_onset: float = 0.5,
    correction: dict[tuple[int, ...], Sequence[float]] | None = None,
) -> DislocationPredictor:
    """Validate the geometry and assemble a DislocationPredictor."""
    b = np.asarray(burgers, dtype=float)
    if lattice.d != 2:
        raise ConfigError(f"dislocations need an in-plane lattice (d = 2), got d={lattice.d}", module="predictor")
    if b.shape != (lattice.d_s,):
        raise ConfigError(f"Burgers vector must have {lattice.d_s} components, got {b.tolist()}", module="predictor")
    if lattice.d_s == 3 and b[1] != 0.0:
        raise ConfigError("Burgers vector must have the form (b1, 0, b3)", module="predictor")
    b12 = b[:2]
    reduced = lattice.reduced(b12[None])[0]
    if np.any(np.abs(reduced - np.rint(reduced)) > 1e-8):
        raise ConfigError(f"in-plane Burgers component {b12.tolist()} is not a lattice vector", module="predictor")
    if lattice.columnar:
        offset = float(np.rint(reduced) @ lattice.column_shift)
        frac = (b[2] - offset) / lattice.column_period
        if abs(frac - round(frac)) > 1e-8:
            raise ConfigError(
                f"b3={b[2]} is not a column translation (period {lattice.column_period})", module="predictor"
            )

    x_hat = default_core(lattice) if core is None else np.asarray(core, dtype=float)
    if x_hat.shape != (2,):
        raise ConfigError(f"core must be an in-plane point, got {x_hat.tolist()}", module="predictor")
    norm12 = float(np.linalg.norm(b12))
    if r_hat is None:
        r_hat = max(8.0 * norm12, 2.0 * lattice.max_vector_length)
    if not r_hat > 0.0:
        raise ConfigError(f"r_hat must be positive, got {r_hat}", module="predictor")
    check_cut_avoids_lattice(lattice, x_hat, max(4.0 * r_hat, 8.0 * lattice.max_vector_length))

    if cle == CLEKind.ANTIPLANE.value:
        if norm12 > 0.0:
            raise ConfigError("the anti-plane CLE needs b1 = 0; use cle = 'stroh' for edge components", module="predictor")
        solution = antiplane_cle(b, x_hat)
    elif cle == CLEKind.STROH.value:
        if potential is None:
            raise ConfigError("cle = 'stroh' needs a potential", module="predictor")
        solution = cle_from_potential(HomogeneousStencil.build(potential, lattice), b, x_hat)
    else:
        raise ConfigError(f"Unknown CLE kind: {cle}", module="predictor")

    table = {tuple(int(c) for c in k): np.asarray(v, dtype=float).reshape(lattice.d_s) for k, v in (correction or {}).items()}
    predictor = DislocationPredictor(
        lattice=lattice,
        burgers=b,
        core=x_hat,
        r_hat=float(r_hat),
        cle=solution,
        eta=CutFunction(eta_onset),
        correction=table,
    )
    predictor.check_bijective()
    return predictor


def predictor_eval(pred: Predictor, ell: np.ndarray) -> np.ndarray:
    """u0 at one site (shape (d,)) or many (shape (N, d))."""
    ell = np.asarray(ell, dtype=float)
    values = pred.displacement(np.atleast_2d(ell))
    return values[0] if ell.ndim == 1 else values


def predictor_configuration(pred: Predictor, domain: SiteSet) -> np.ndarray:
    """Deformed positions y0 = x + u0 on `domain`."""
    return domain.reference_positions() + pred.displacement(domain.positions)


def check_predictor_admissible(
    pred: Predictor,
    domain: SiteSet,
    *,
    pair_cutoff: float | None = None,
    m_min: float = 0.0,
) -> AdmissibilityReport:
    """Admissibility of y0 on `domain`; a collision asks for a core correction table."""
    y0 = predictor_configuration(pred, domain)
    report = admissibility_check(y0, domain, pair_cutoff=pair_cutoff)
    if report.m_hat <= m_min:
        raise EvaluationError(
            f"predictor configuration is not admissible (m_hat={report.m_hat:.3e} at pair {report.worst_pair}); "
            "supply a core correction table (predictor.correction)",
            pair=report.worst_pair,
            module="predictor",
        )
    return report


def predictor_differences(
    pred: Predictor,
    points: np.ndarray,
    rho: np.ndarray,
    order: int = 1,
) -> np.ndarray:
    """|D_ρ^j u0| at `points`: j-th forward differences along the in-plane vector ρ."""
    points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    rho = np.asarray(rho, dtype=float)[:2]
    stack = np.stack([pred.displacement(points + j * rho) for j in range(order + 1)])
    coeff = np.array([(-1) ** (order - j) * math.comb(order, j) for j in range(order + 1)], dtype=float)
    return np.linalg.norm(np.tensordot(coeff, stack, axes=1), axis=1)


def predictor_decay_fit(
    pred: Predictor,
    rmin: float = 8.0,
    rmax: float = 64.0,
    *,
    rho: np.ndarray | None = None,
    order: int = 1,
    ratio: float = 1.25,
) -> DecayFit:
    """Power-law fit of |D_ρ^j u0(ℓ)| over left half-plane sites ℓ₁ < x̂₁."""
    if order not in (1, 2):
        raise InputError(f"difference order must be 1 or 2, got {order}", module="predictor")
    if not isinstance(pred, DislocationPredictor):
        raise InputError("predictor decay fits need a dislocation predictor", module="predictor")
    lattice = pred.lattice
    rho = lattice.A[:2, 0] if rho is None else np.asarray(rho, dtype=float)
    sites = generate_sites(ReferenceConfig.homogeneous(lattice), rmax * 1.01, center=pred.core)
    x = sites.positions
    reach = order * max(rho[0], 0.0)
    left = x[:, 0] + reach < pred.core[0]
    x = x[left]
    values = predictor_differences(pred, x, rho, order)
    radii = np.linalg.norm(x - pred.core, axis=1)
    fit = decay_fit(values, radii, rmin, rmax, "power", ratio=ratio)
    logger.info("predictor decay (order %d): exponent %.4f ± %.4f", order, fit.exponent, fit.half_width)
    return fit
