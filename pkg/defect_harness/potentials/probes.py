from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from defect_harness.analysis.decay import DecayFit, decay_fit
from defect_harness.errors import InputError
from defect_harness.geometry.lattice import BravaisLattice, ReferenceConfig, generate_sites
from defect_harness.potentials.base import SitePotential
from defect_harness.potentials.environment import HomogeneousStencil, environment
from defect_harness.potentials.pair import PairPotential

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class LocalityReport:
    order: int
    radii: np.ndarray
    values: np.ndarray
    fit: DecayFit | None
    dominated: bool
    zero_beyond_cutoff: bool
    flags: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "order": self.order,
            "fit": None if self.fit is None else self.fit.summary(),
            "dominated": self.dominated,
            "zero_beyond_cutoff": self.zero_beyond_cutoff,
            "flags": list(self.flags),
        }


@dataclass(slots=True)
class HomogeneityReport:
    discrepancy: float
    scaled_discrepancy: float
    bound_scale: float
    matched: int


@dataclass(slots=True)
class HomogeneityProfile:
    """Per-site homogeneity discrepancy against the distance to the nearest differing site."""

    radii: np.ndarray
    discrepancy: np.ndarray
    scaled: np.ndarray
    matched: np.ndarray

    def summary(self) -> dict:
        empty = len(self.radii) == 0
        return {
            "sites": int(len(self.radii)),
            "max_discrepancy": 0.0 if empty else float(self.discrepancy.max()),
            "max_scaled": 0.0 if empty else float(self.scaled.max()),
        }


def locality_probe(
    potential: SitePotential,
    lattice: BravaisLattice,
    orders: tuple[int, ...] = (1, 2),
    *,
    rmin: float | None = None,
    rmax: float | None = None,
    model: str | None = None,
) -> list[LocalityReport]:
    """Decay of |V_{,ρ}| (order 1) and max_σ |V_{,ρσ}| (order 2) on the homogeneous lattice."""
    stencil = HomogeneousStencil.build(potential, lattice)
    radii = np.linalg.norm(stencil.offsets, axis=1)
    if model is None:
        model = "power" if isinstance(potential, PairPotential) and potential.form.decay_power else "exponential"
    lo = 2.0 * lattice.atom_spacing() if rmin is None else rmin
    hi = potential.r_cut if rmax is None else rmax
    weights = potential.locality_weights(lattice.d_s)
    reports = []
    for order in orders:
        if order == 1:
            values = np.linalg.norm(stencil.gradient(), axis=1)
        elif order == 2:
            blocks = np.linalg.norm(stencil.hessian(), axis=(2, 3))
            values = blocks.max(axis=1)
        else:
            raise InputError(f"locality order must be 1 or 2, got {order}", module="potentials")
        reports.append(_locality_report(order, radii, values, weights[order - 1], lo, hi, model, potential))
    return reports


def _locality_report(order, radii, values, weight, lo, hi, model, potential) -> LocalityReport:
    flags: list[str] = []
    beyond = radii >= potential.r_cut * (1.0 - 1e-12)
    zero_beyond = bool(np.all(values[beyond] == 0.0)) if np.any(beyond) else True

    ratio = values / weight(radii)
    outer = radii >= 0.5 * (lo + hi)
    inner_max = float(ratio[~outer].max()) if np.any(~outer) else 0.0
    outer_max = float(ratio[outer].max()) if np.any(outer) else 0.0
    dominated = bool(np.all(np.isfinite(ratio))) and outer_max <= inner_max * (1.0 + 1e-9)

    fit = None
    n_shells = int(math.floor(math.log(hi / lo) / math.log(1.25))) if hi > lo else 0
    if n_shells < 3:
        flags.append(f"insufficient range: {n_shells} shells between {lo:.3g} and {hi:.3g}")
    else:
        try:
            fit = decay_fit(values, radii, lo, hi, model, min_shells=3)
        except InputError as exc:
            flags.append(str(exc))
    for f in flags:
        logger.warning("locality probe order %d: %s", order, f)
    return LocalityReport(
        order=order,
        radii=radii,
        values=values,
        fit=fit,
        dominated=dominated,
        zero_beyond_cutoff=zero_beyond,
        flags=flags,
    )


def point_symmetry_check(
    potential: SitePotential,
    lattice: BravaisLattice,
    samples: int = 20,
    amplitude: float = 0.05,
    seed: int = 0,
    g: np.ndarray | None = None,
) -> float:
    """max |V^h((−g_{−ρ})_ρ) − V^h(g)| over random stencils (or the single `g`)."""
    stencil = HomogeneousStencil.build(potential, lattice)
    perm = stencil.reflection()
    if g is not None:
        draws = [np.asarray(g, dtype=float)]
    else:
        rng = np.random.default_rng(seed)
        scale = amplitude * lattice.atom_spacing()
        draws = [scale * rng.uniform(-1.0, 1.0, size=stencil.offsets.shape) for _ in range(samples)]
    worst = 0.0
    for gs in draws:
        reflected = -gs[perm]
        worst = max(worst, abs(stencil.energy(reflected) - stencil.energy(gs)))
    return worst


def homogeneity_check(
    potential: SitePotential,
    y_defect: np.ndarray,
    x_defect: np.ndarray,
    ell1: int,
    y_hom: np.ndarray,
    x_hom: np.ndarray,
    ell2: int,
    r: float,
    *,
    d: int | None = None,
    period: float | None = None,
    tol: float = 1e-9,
) -> HomogeneityReport:
    """Largest first-partial mismatch between two configurations that agree on B_r.

    The configurations must agree around ℓ₁ and ℓ₂ within reference radius r: the same
    reference offsets, with equal deformed vectors. Partials are compared for every
    offset present in both interaction windows.
    """
    env1 = environment(potential, y_defect, ell1, x_defect, period)
    env2 = environment(potential, y_hom, ell2, x_hom, period)
    _check_matching(x_defect, y_defect, ell1, x_hom, y_hom, ell2, r, tol, period)

    g1 = potential.local_gradient(env1.vec, env1.ref)
    g2 = potential.local_gradient(env2.vec, env2.ref)
    keys2 = {_key(o): k for k, o in enumerate(env2.ref)}
    weight = potential.locality_weights(d or x_defect.shape[1])[0]
    worst = 0.0
    scaled = 0.0
    matched = 0
    for k, o in enumerate(env1.ref):
        j = keys2.get(_key(o))
        if j is None:
            continue
        matched += 1
        diff = float(np.linalg.norm(g1[k] - g2[j]))
        worst = max(worst, diff)
        scaled = max(scaled, diff / float(weight(np.linalg.norm(o))))
    s = potential.homogeneity_exponent(x_defect.shape[1])
    bound = 0.0 if math.isinf(s) else (1.0 + r) ** (-s)
    return HomogeneityReport(discrepancy=worst, scaled_discrepancy=scaled, bound_scale=bound, matched=matched)


def homogeneity_profile(potential: SitePotential, config: ReferenceConfig, R: float) -> HomogeneityProfile:
    """`homogeneity_check` for every site of B_R whose interaction window lies inside B_R.

    Each site is compared with the same lattice site of the defect-free lattice, on the
    largest ball that avoids every site where the two configurations differ.
    """
    lattice = config.lattice
    defect = generate_sites(config, R)
    hom = generate_sites(ReferenceConfig.homogeneous(lattice), R)
    differ = _differing_points(defect.positions, hom.positions, 1e-8 * max(1.0, lattice.nn_distance))
    if not len(differ):
        raise InputError("configuration does not differ from the homogeneous lattice", module="potentials")

    x_def, x_hom = defect.reference_positions(), hom.reference_positions()
    interior = defect.on_lattice & (np.linalg.norm(defect.positions, axis=1) + potential.r_cut <= R)
    sites = np.flatnonzero(interior)
    dist, _ = cKDTree(differ).query(defect.positions[sites])
    rows = []
    for ell1, d in zip(sites.tolist(), dist.tolist()):
        ell2 = hom.index_of(defect.coords[ell1])
        if ell2 is None:
            continue
        report = homogeneity_check(
            potential, x_def, x_def, ell1, x_hom, x_hom, ell2, d * (1.0 - 1e-9), d=lattice.d, period=lattice.period
        )
        rows.append((d, report.discrepancy, report.scaled_discrepancy, report.matched))
    logger.debug("homogeneity profile: %d sites, %d differing points", len(rows), len(differ))
    table = np.array(rows, dtype=float).reshape(-1, 4)
    return HomogeneityProfile(
        radii=table[:, 0],
        discrepancy=table[:, 1],
        scaled=table[:, 2],
        matched=table[:, 3].astype(np.int64),
    )


def _differing_points(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Points of `a` with no partner in `b` and points of `b` with no partner in `a`."""
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return np.vstack([a[da > tol], b[db > tol]])


def _check_matching(x1, y1, ell1, x2, y2, ell2, r, tol, period) -> None:
    def window(x, y, ell):
        rel = x - x[ell]
        near = np.linalg.norm(rel[:, : x.shape[1] if period is None else 2], axis=1) <= r
        return {_key(o): y[k] - y[ell] for k, o in zip(np.flatnonzero(near), rel[near])}

    w1 = window(np.asarray(x1, float), np.asarray(y1, float), ell1)
    w2 = window(np.asarray(x2, float), np.asarray(y2, float), ell2)
    if w1.keys() != w2.keys():
        raise InputError(f"configurations differ in their reference sites within r={r}", module="potentials")
    for k, v in w1.items():
        if np.linalg.norm(v - w2[k]) > tol:
            raise InputError(f"deformed configurations differ at offset {list(k)} within r={r}", module="potentials")


def _key(o: np.ndarray) -> tuple[float, ...]:
    return tuple(np.round(np.asarray(o, dtype=float), 7) + 0.0)
