from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import SiteSet


@dataclass(slots=True)
class AdmissibilityReport:
    m_hat: float
    lambda_hat: float
    admissible: bool
    worst_pair: tuple[int, int] | None
    n_pairs: int


def admissibility_check(
    y: np.ndarray,
    domain: SiteSet,
    *,
    pair_cutoff: float | None = None,
    probes_per_vector: int = 4,
    collision_tol: float = 1e-12,
) -> AdmissibilityReport:
    """Estimate (m, λ) for deformed positions `y` on `domain`.

    m_hat is the smallest stretch |y(ℓ)−y(m)|/|x(ℓ)−x(m)| over pairs within `pair_cutoff`
    in the reference plus all core pairs. λ_hat is the largest distance from an interior
    probe point to the nearest deformed site.
    """
    lattice = domain.lattice
    y = np.asarray(y, dtype=float)
    x = domain.reference_positions()
    if len(x) < 2:
        raise InputError("admissibility check needs at least two sites", module="lattice")
    if pair_cutoff is None:
        pair_cutoff = 3.0 * lattice.max_vector_length

    i, j, shift = _reference_pairs(domain, x, pair_cutoff)
    ref = np.linalg.norm(x[j] - x[i] + shift, axis=1)
    cur = np.linalg.norm(y[j] - y[i] + shift, axis=1)
    ratios = cur / ref
    k = int(np.argmin(ratios))
    m_hat = float(ratios[k])
    worst = (int(i[k]), int(j[k]))
    if cur[k] <= collision_tol:
        m_hat = 0.0

    lambda_hat = _covering_radius(y, domain, probes_per_vector)
    return AdmissibilityReport(
        m_hat=m_hat,
        lambda_hat=lambda_hat,
        admissible=m_hat > 0.0,
        worst_pair=worst,
        n_pairs=len(ratios),
    )


def _reference_pairs(domain: SiteSet, x: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = domain.lattice.d
    d_s = x.shape[1]
    period = domain.lattice.period
    plane = x[:, :d]
    pairs = cKDTree(plane).query_pairs(cutoff, output_type="ndarray").reshape(-1, 2)
    core = np.flatnonzero(domain.is_core)
    if len(core) > 1:
        ci, cj = np.triu_indices(len(core), k=1)
        pairs = np.vstack([pairs, np.column_stack([core[ci], core[cj]])])
        pairs = np.unique(pairs, axis=0)
    i, j = pairs[:, 0], pairs[:, 1]
    if period is None:
        return i, j, np.zeros((len(i), d_s))

    n_max = int(math.ceil(cutoff / period)) + 1
    chunks_i, chunks_j, chunks_s = [], [], []
    for n in range(-n_max, n_max + 1):
        shift = np.zeros((len(i), d_s))
        shift[:, 2] = n * period
        ref = np.linalg.norm(x[j] - x[i] + shift, axis=1)
        keep = (ref <= cutoff) & (ref > 0.0)
        chunks_i.append(i[keep])
        chunks_j.append(j[keep])
        chunks_s.append(shift[keep])
    return np.concatenate(chunks_i), np.concatenate(chunks_j), np.vstack(chunks_s)


def _covering_radius(y: np.ndarray, domain: SiteSet, q: int) -> float:
    lattice = domain.lattice
    d = lattice.d
    inner = domain.radius - 2.0 * lattice.max_vector_length
    if inner <= 0.0:
        return math.inf
    base = domain.coords[domain.on_lattice]
    base = base[np.linalg.norm(lattice.positions(base) - domain.center, axis=1) <= inner]
    frac = np.stack(np.meshgrid(*([np.arange(q) / q] * d), indexing="ij"), axis=-1).reshape(-1, d)
    probes = (base[:, None, :] + frac[None, :, :]).reshape(-1, d) @ lattice.A.T
    probes = probes[np.linalg.norm(probes - domain.center, axis=1) <= inner]
    plane = y[:, :d]
    hull = Delaunay(plane)
    probes = probes[hull.find_simplex(probes) >= 0]
    if len(probes) == 0:
        return math.inf

    if lattice.period is None:
        dist, _ = cKDTree(y).query(probes)
        return float(dist.max())
    period = lattice.period
    images = np.vstack([y + np.array([0.0, 0.0, n * period]) for n in (-2, -1, 0, 1, 2)])
    tree = cKDTree(images)
    best = 0.0
    for z in np.arange(q) / q * period:
        dist, _ = tree.query(np.column_stack([probes, np.full(len(probes), z)]))
        best = max(best, float(dist.max()))
    return best
