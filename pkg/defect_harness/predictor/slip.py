"""Slip operators S, S*, S0 and the slip-corrected strains built from them.

Sites below the cut line (ℓ₂ < x̂₂) are relabelled by the in-plane Burgers vector b₁₂.
Inside Ω_Γ = {x₁ > x̂₁ + r̂ + b₁} the strain of the predictor is measured through S0,
which removes the jump of u0 across Γ; elsewhere plain differences are used.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from defect_harness.errors import InputError
from defect_harness.predictor.dislocation import DislocationPredictor
from defect_harness.stencil.displacement import Displacement

Field = Callable[[np.ndarray], np.ndarray]

SLIPS = ("S", "S0", "S*")


def below_cut(pred: DislocationPredictor, points: np.ndarray) -> np.ndarray:
    return np.atleast_2d(points)[:, 1] < pred.core[1]


def in_omega_gamma(pred: DislocationPredictor, points: np.ndarray) -> np.ndarray:
    return np.atleast_2d(points)[:, 0] > pred.core[0] + pred.r_hat + pred.b12[0]


def _as_field(u: Displacement | Field) -> Field:
    return u.value_at if isinstance(u, Displacement) else u


def slip_values(pred: DislocationPredictor, which: str, u: Displacement | Field, points: np.ndarray) -> np.ndarray:
    """(S u)(x), (S* u)(x) or (S0 u)(x) at in-plane points."""
    if which not in SLIPS:
        raise InputError(f"Unknown slip operator: {which}", module="predictor")
    fn = _as_field(u)
    points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    below = below_cut(pred, points)
    source = points.copy()
    if which == "S*":
        source[below] += pred.b12
    else:
        source[below] -= pred.b12
    out = np.asarray(fn(source), dtype=float).copy()
    if which == "S0":
        out[below] -= pred.burgers
    return out


def slip_apply(pred: DislocationPredictor, which: str, u: Displacement | Field, domain=None) -> Displacement:
    """Apply a slip operator on the sites of `domain` (default: the domain of `u`)."""
    if domain is None:
        if not isinstance(u, Displacement):
            raise InputError("slip_apply on a plain field needs a domain", module="predictor")
        domain = u.domain
    values = slip_values(pred, which, u, domain.positions)
    clamp = u.clamp_radius if isinstance(u, Displacement) else None
    return Displacement(domain=domain, values=values, clamp_radius=clamp)


def _anchor(pred: DislocationPredictor, ell: np.ndarray) -> np.ndarray:
    """ℓ' with (S* f)(ℓ) = f(ℓ'): ℓ above the cut, ℓ + b₁₂ below."""
    anchor = ell.copy()
    anchor[below_cut(pred, ell)] += pred.b12
    return anchor


def elastic_strain(pred: DislocationPredictor, ell: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """e_ρ(ℓ) for each row of `ell`: S* D_ρ S0 u0 in Ω_Γ, D_ρ u0 elsewhere."""
    ell = np.atleast_2d(np.asarray(ell, dtype=float))[:, :2]
    rho = np.asarray(rho, dtype=float)[:2]
    u0 = pred.displacement
    out = u0(ell + rho) - u0(ell)
    omega = in_omega_gamma(pred, ell)
    if np.any(omega):
        a = _anchor(pred, ell[omega])
        out[omega] = slip_values(pred, "S0", u0, a + rho) - slip_values(pred, "S0", u0, a)
    return out


def permuted_difference(pred: DislocationPredictor, u: Displacement | Field, ell: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D̃_ρ u(ℓ): S* D_ρ S u in Ω_Γ, D_ρ u elsewhere."""
    ell = np.atleast_2d(np.asarray(ell, dtype=float))[:, :2]
    rho = np.asarray(rho, dtype=float)[:2]
    fn = _as_field(u)
    out = fn(ell + rho) - fn(ell)
    omega = in_omega_gamma(pred, ell)
    if np.any(omega):
        a = _anchor(pred, ell[omega])
        out[omega] = slip_values(pred, "S", fn, a + rho) - slip_values(pred, "S", fn, a)
    return out


def slip_stencil(
    pred: DislocationPredictor,
    ell: np.ndarray,
    offsets: np.ndarray,
    u: Displacement | Field | None = None,
) -> np.ndarray:
    """Deformed stencil vectors ρ + e_ρ(ℓ) + D̃_ρu(ℓ) for every reference offset of one site."""
    ell = np.asarray(ell, dtype=float).reshape(1, -1)[:, :2]
    offsets = np.asarray(offsets, dtype=float)
    vec = offsets.copy()
    for a, rho in enumerate(offsets):
        vec[a] += elastic_strain(pred, ell, rho[:2])[0]
        if u is not None:
            vec[a] += permuted_difference(pred, u, ell, rho[:2])[0]
    return vec


def rectangular_loop(pred: DislocationPredictor, half_width: int, center: np.ndarray | None = None) -> np.ndarray:
    """Counter-clockwise loop of lattice sites on the boundary of a box in lattice coordinates."""
    if half_width < 1:
        raise InputError(f"loop half width must be at least 1, got {half_width}", module="predictor")
    lattice = pred.lattice
    c = pred.core if center is None else np.asarray(center, dtype=float)
    base = np.floor(lattice.reduced(c[None])[0]).astype(np.int64)
    n = half_width
    lo, hi = base - (n - 1), base + n
    path = (
        [(i, lo[1]) for i in range(lo[0], hi[0])]
        + [(hi[0], j) for j in range(lo[1], hi[1])]
        + [(i, hi[1]) for i in range(hi[0], lo[0], -1)]
        + [(lo[0], j) for j in range(hi[1], lo[1], -1)]
    )
    coords = np.array(path, dtype=np.int64)
    if np.linalg.det(lattice.A[:2, :2]) < 0.0:
        coords = coords[::-1]
    return lattice.positions(coords)


def burgers_circuit(pred: DislocationPredictor, loop: np.ndarray) -> np.ndarray:
    """Σ_k e_{ρ_k}(ℓ_k) along a closed loop, ρ_k = ℓ_{k+1} − ℓ_k."""
    loop = np.atleast_2d(np.asarray(loop, dtype=float))[:, :2]
    total = np.zeros(pred.d_s)
    steps = np.roll(loop, -1, axis=0) - loop
    for ell, rho in zip(loop, steps):
        total += elastic_strain(pred, ell[None], rho)[0]
    return total
