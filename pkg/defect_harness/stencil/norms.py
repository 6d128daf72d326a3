from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import ReferenceConfig, SiteSet, generate_sites
from defect_harness.geometry.neighbors import NeighborSet, neighbor_table
from defect_harness.stencil.displacement import Displacement
from defect_harness.stencil.weights import WeightFunction, shell_sum_bound

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class NormResult:
    per_site: np.ndarray
    global_value: float


@dataclass(slots=True)
class WeightedNormResult:
    sites: SiteSet
    per_site: np.ndarray
    per_site_tail: np.ndarray
    global_value: float
    global_tail: float
    tail_radius: float


@dataclass(slots=True)
class NormEquivalenceReport:
    k: int
    upper_ratios: np.ndarray
    lower_ratios: np.ndarray | None
    max_upper: float
    max_lower: float | None
    derived_upper: float | None
    derived_lower: float | None
    c0: float
    bounded: bool
    notes: list[str] = field(default_factory=list)


def nn_norm(u: Displacement, config: ReferenceConfig, table: list[NeighborSet] | None = None) -> NormResult:
    """Per-site |Du(ℓ)|_N and the global ‖Du‖_{ℓ²_N} over the domain."""
    if table is None:
        table = neighbor_table(config, u.domain)
    per_site = np.zeros(len(u.domain))
    for ell, ns in enumerate(table):
        nb = u.values[np.maximum(ns.neighbors, 0)]
        nb[ns.neighbors < 0] = u.clamp_value
        per_site[ell] = math.sqrt(float(np.sum((nb - u.values[ell]) ** 2)))
    return NormResult(per_site=per_site, global_value=math.sqrt(float(np.sum(per_site**2))))


def weighted_norm(
    u: Displacement,
    w: WeightFunction,
    k: int,
    config: ReferenceConfig,
    *,
    tail_radius: float | None = None,
    tol: float = 1e-10,
    max_radius: float | None = None,
) -> WeightedNormResult:
    """Weighted stencil norms |Du(ℓ)|_{w,k} with certified tails.

    The ρ-sum is exact up to `tail_radius`; beyond it each site carries an analytic bound.
    Without an explicit radius it grows until the global bound is below `tol` times the
    value, or `max_radius` is reached.
    """
    if k < 1:
        raise InputError(f"stencil norm order must be >= 1, got {k}", module="stencil")
    w.norm()
    lattice = config.lattice
    scale = lattice.max_vector_length
    if tail_radius is not None:
        return _weighted_norm_at(u, w, k, config, tail_radius)
    if max_radius is None:
        max_radius = 40.0 * scale
    T = 4.0 * scale
    while True:
        result = _weighted_norm_at(u, w, k, config, T)
        if result.global_tail <= tol * max(result.global_value, 1e-300) or T >= max_radius:
            if result.global_tail > tol * result.global_value:
                logger.warning(
                    "weighted norm tail bound %.3e not below tolerance at max radius %.1f", result.global_tail, T
                )
            return result
        T = min(1.5 * T, max_radius)


def _weighted_norm_at(u: Displacement, w: WeightFunction, k: int, config: ReferenceConfig, T: float) -> WeightedNormResult:
    lattice = config.lattice
    D = lattice.d
    r0 = lattice.nn_distance
    c = u.clamp_value
    free = u.free_mask()
    x_sup = u.domain.positions[free]
    u_sup = u.values[free]
    R_sup = float(np.max(np.linalg.norm(x_sup, axis=1))) if len(x_sup) else 0.0

    sites = generate_sites(config, R_sup + T)
    x = sites.positions
    idx = u.domain.locate(x)
    in_sup = np.zeros(len(x), dtype=bool)
    in_sup[idx >= 0] = free[idx[idx >= 0]]
    u_here = np.tile(c, (len(x), 1))
    u_here[idx >= 0] = u.values[idx[idx >= 0]]

    dist = np.linalg.norm(x[:, None, :] - x_sup[None, :, :], axis=2)
    near = (dist > 1e-12) & (dist <= T + 1e-12)
    wts = np.where(near, w(dist), 0.0)
    diff = np.linalg.norm(u_sup[None, :, :] - u_here[:, None, :], axis=2) ** k
    S = np.sum(wts * diff, axis=1)

    jump = np.linalg.norm(c - u_here, axis=1) ** k
    spread = np.linalg.norm(u_sup - c, axis=1).max() if len(u_sup) else 0.0
    M = np.maximum(np.max(np.linalg.norm(u_sup[None, :, :] - u_here[:, None, :], axis=2), axis=1), spread)
    for i in np.flatnonzero(in_sup):
        S[i] += jump[i] * (_lattice_weight_sum(config, w, x[i], T) - float(np.sum(wts[i])))
    shell = w.tail_sum_bound(T, r0, D)
    reaches = np.max(np.where(dist > T, 1.0, 0.0), axis=1) > 0 if len(x_sup) else np.zeros(len(x), dtype=bool)
    tail = np.where(in_sup | reaches, M**k * shell, 0.0)

    n_sup = len(x_sup)
    if k == 1:
        outer = shell_sum_bound(lambda r: float(w(r - R_sup)) ** 2, R_sup + T, r0, D) * (n_sup * spread) ** 2
        value = math.sqrt(float(np.sum(S**2)))
        upper = math.sqrt(float(np.sum((S + tail) ** 2)) + outer)
    else:
        outer = w.tail_sum_bound(R_sup + T, r0, D, shift=R_sup) * n_sup * spread**k
        value = float(np.sum(S)) ** (1.0 / k)
        upper = (float(np.sum(S + tail)) + outer) ** (1.0 / k)
    return WeightedNormResult(
        sites=sites,
        per_site=S ** (1.0 / k),
        per_site_tail=(S + tail) ** (1.0 / k) - S ** (1.0 / k),
        global_value=value,
        global_tail=upper - value,
        tail_radius=T,
    )


def _lattice_weight_sum(config: ReferenceConfig, w: WeightFunction, center: np.ndarray, T: float) -> float:
    ball = generate_sites(config, T, center=center)
    r = np.linalg.norm(ball.positions - center, axis=1)
    return float(np.sum(w(r[r > 1e-12])))


def norm_equivalence_report(
    sample: Sequence[Displacement],
    w: WeightFunction,
    k: int,
    config: ReferenceConfig,
    *,
    tail_radius: float | None = None,
) -> NormEquivalenceReport:
    """Empirical ratios between the weighted and nearest-neighbour norms over `sample`.

    Two-sided for k in {1, 2}; one-sided (weighted over nearest-neighbour) for k > 2.
    """
    if not sample:
        raise InputError("norm equivalence needs a nonempty sample", module="stencil")
    table = neighbor_table(config, sample[0].domain)
    offsets = np.concatenate([np.linalg.norm(ns.offsets, axis=1) for ns in table])
    c0 = float(np.min(w(offsets)))

    upper, lower = [], []
    for u in sample:
        nn = nn_norm(u, config, table).global_value
        wn = weighted_norm(u, w, k, config, tail_radius=tail_radius).global_value
        if nn == 0.0:
            continue
        upper.append(wn / nn)
        if k <= 2:
            lower.append(nn / wn)
    upper_arr = np.asarray(upper)
    lower_arr = np.asarray(lower) if k <= 2 else None

    homogeneous = config.R_def == 0.0 and len(config.core_sites) == 0
    derived_upper = brute_force_upper_constant(config, w, k) if homogeneous else None
    derived_lower = c0 ** (1.0 / k) if k <= 2 else None
    notes: list[str] = []
    bounded = bool(np.all(np.isfinite(upper_arr)))
    if derived_upper is not None and upper_arr.size and upper_arr.max() > derived_upper * (1 + 1e-9):
        bounded = False
        notes.append(f"upper ratio {upper_arr.max():.6g} exceeds derived constant {derived_upper:.6g}")
    if derived_lower is not None and lower_arr is not None and lower_arr.size:
        if 1.0 / lower_arr.max() < derived_lower * (1 - 1e-9):
            bounded = False
            notes.append(f"lower ratio {1.0 / lower_arr.max():.6g} below c0^(1/k) = {derived_lower:.6g}")
    return NormEquivalenceReport(
        k=k,
        upper_ratios=upper_arr,
        lower_ratios=lower_arr,
        max_upper=float(upper_arr.max()) if upper_arr.size else 0.0,
        max_lower=float(lower_arr.max()) if lower_arr is not None and lower_arr.size else None,
        derived_upper=derived_upper,
        derived_lower=derived_lower,
        c0=c0,
        bounded=bounded,
        notes=notes,
    )


def brute_force_upper_constant(config: ReferenceConfig, w: WeightFunction, k: int, radius: float | None = None) -> float:
    """Path constant Σ_ρ w(|ρ|) N_ρ (k = 1) or (Σ_ρ w(|ρ|) N_ρ^k)^{1/k} (k ≥ 2).

    N_ρ is the number of ±A e_i steps from 0 to ρ; valid on the perfect lattice.
    """
    lattice = config.lattice
    if radius is None:
        radius = 30.0 * lattice.max_vector_length
    ball = generate_sites(ReferenceConfig.homogeneous(lattice), radius)
    r = ball.distances_from_origin()
    keep = r > 1e-12
    steps = np.sum(np.abs(ball.coords[keep]), axis=1).astype(float)
    power = 1 if k == 1 else k
    total = float(np.sum(w(r[keep]) * steps**power))
    growth = float(np.max(np.sum(np.abs(np.linalg.inv(lattice.A)), axis=1))) * math.sqrt(lattice.d)
    total += growth**power * w.tail_sum_bound(radius, lattice.nn_distance, lattice.d, power=power)
    return total if k == 1 else total ** (1.0 / k)
