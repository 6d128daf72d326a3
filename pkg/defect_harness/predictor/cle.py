from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from defect_harness.errors import BranchError, InputError, PredictorError
from defect_harness.potentials.environment import HomogeneousStencil

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_ROOT_TOL = 1e-7
_BLOCK_TOL = 1e-10


class CLEKind(str, Enum):
    ANTIPLANE = "antiplane"
    STROH = "stroh"


@dataclass(frozen=True, slots=True)
class CLESolution:
    """Linear elastic field of a straight dislocation with its core at `core`.

    u_i(x) = Re Σ_n B_{i,n} log(dx₁ + p_n dx₂), dx = x − core, where the logarithm has
    its cut on Γ = {dx₂ = 0, dx₁ ≥ 0} and arg ∈ [0, 2π). With `edge` set the in-plane
    components come from the isotropic closed form (b₁, ν) instead of Stroh roots.
    """

    burgers: np.ndarray
    core: np.ndarray
    roots: np.ndarray
    coefficients: np.ndarray
    kind: CLEKind = CLEKind.ANTIPLANE
    edge: tuple[float, float] | None = None

    @property
    def d_s(self) -> int:
        return len(self.burgers)

    def summary(self) -> dict:
        return {
            "kind": self.kind.value,
            "roots": [[float(p.real), float(p.imag)] for p in self.roots],
            "isotropic_edge": None if self.edge is None else {"b1": self.edge[0], "nu": self.edge[1]},
        }


def branch_log(z: np.ndarray) -> np.ndarray:
    """log|z| + i·arg z with arg ∈ [0, 2π)."""
    z = np.asarray(z, dtype=complex)
    return np.log(np.abs(z)) + 1j * np.mod(np.angle(z), TWO_PI)


def branch_arg(dx: np.ndarray) -> np.ndarray:
    dx = np.atleast_2d(np.asarray(dx, dtype=float))
    return np.mod(np.arctan2(dx[:, 1], dx[:, 0]), TWO_PI)


def on_branch_cut(x: np.ndarray, core: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Points of Γ (the core included) within `tol`."""
    dx = np.atleast_2d(np.asarray(x, dtype=float))[:, :2] - core
    return (np.abs(dx[:, 1]) <= tol) & (dx[:, 0] >= -tol)


def antiplane_cle(burgers: np.ndarray, core: np.ndarray) -> CLESolution:
    """Closed-form screw field u = (0, 0, b₃·arg(x − x̂)/2π)."""
    b = np.asarray(burgers, dtype=float)
    coeff = np.zeros((len(b), 1), dtype=complex)
    coeff[-1, 0] = b[-1] / (TWO_PI * 1j)
    return CLESolution(burgers=b, core=np.asarray(core, dtype=float), roots=np.array([1j]), coefficients=coeff)


def elastic_tensor(stencil: HomogeneousStencil) -> np.ndarray:
    """C_{iαjβ} = Σ_{ρσ} [V_{,ρσ}]_{ij} ρ_α σ_β / |cell|, α, β over the two in-plane directions."""
    H = stencil.hessian()
    P = stencil.offsets[:, :2]
    volume = stencil.lattice.cell_volume
    if stencil.lattice.columnar:
        volume *= stencil.lattice.column_period
    C = np.einsum("abij,ax,by->ixjy", H, P, P) / volume
    return 0.5 * (C + C.transpose(2, 3, 0, 1))


def cle_from_potential(stencil: HomogeneousStencil, burgers: np.ndarray, core: np.ndarray) -> CLESolution:
    """Anisotropic CLE from the homogeneous second partials.

    The anti-plane block is solved on its own when it decouples from the in-plane one;
    the in-plane block is only solved when b₁₂ ≠ 0.
    """
    b = np.asarray(burgers, dtype=float)
    core = np.asarray(core, dtype=float)
    C = elastic_tensor(stencil)
    ds = C.shape[0]
    if len(b) != ds:
        raise InputError(f"Burgers vector has {len(b)} components, lattice has d_s={ds}", module="predictor")
    scale = float(np.max(np.abs(C)))
    if scale == 0.0:
        raise PredictorError("elastic tensor vanishes; no CLE solution", module="predictor")

    if ds == 3 and np.max(np.abs(C[2, :, :2, :])) <= _BLOCK_TOL * scale:
        roots: list[complex] = []
        cols: list[np.ndarray] = []
        edge = None
        if np.any(b[:2] != 0.0):
            p2, B2, edge = _in_plane(C[:2, :, :2, :], b[:2], scale)
            for n in range(len(p2)):
                col = np.zeros(3, dtype=complex)
                col[:2] = B2[:, n]
                roots.append(p2[n])
                cols.append(col)
        if b[2] != 0.0:
            p3 = _antiplane_root(C[2, :, 2, :])
            col = np.zeros(3, dtype=complex)
            col[2] = b[2] / (TWO_PI * 1j)
            roots.append(p3)
            cols.append(col)
        coeff = np.column_stack(cols) if cols else np.zeros((3, 0), dtype=complex)
        solution = CLESolution(b, core, np.array(roots, dtype=complex), coeff, CLEKind.STROH, edge)
    elif ds == 2:
        p, B, edge = _in_plane(C, b, scale)
        solution = CLESolution(b, core, p, B, CLEKind.STROH, edge)
    else:
        p, B = _stroh_block(C, b)
        solution = CLESolution(b, core, p, B, CLEKind.STROH)
    logger.info("CLE roots %s", np.array2string(solution.roots, precision=6))
    return solution


def _antiplane_root(c: np.ndarray) -> complex:
    """Im > 0 root of C₃₂₃₂ p² + (C₃₁₃₂ + C₃₂₃₁) p + C₃₁₃₁ = 0."""
    q, t = c[0, 0], c[1, 1]
    r = 0.5 * (c[0, 1] + c[1, 0])
    disc = q * t - r * r
    if not (t > 0.0 and disc > 0.0):
        raise PredictorError(f"anti-plane block is not elliptic (C3131={q:.4g}, C3232={t:.4g})", module="predictor")
    return complex(-r / t, math.sqrt(disc) / t)


def _in_plane(C: np.ndarray, b: np.ndarray, scale: float):
    try:
        p, B = _stroh_block(C, b)
        return p, B, None
    except PredictorError:
        nu = _isotropic_poisson(C, scale)
        if nu is None or b[1] != 0.0:
            raise
        logger.info("degenerate in-plane roots on an isotropic block; isotropic edge field with nu=%.6g", nu)
        return np.zeros(0, dtype=complex), np.zeros((2, 0), dtype=complex), (float(b[0]), nu)


def _isotropic_poisson(C: np.ndarray, scale: float) -> float | None:
    c11, c22, c12, c66 = C[0, 0, 0, 0], C[1, 1, 1, 1], C[0, 0, 1, 1], C[0, 1, 0, 1]
    tol = 1e-8 * scale
    coupling = max(abs(C[0, 0, 0, 1]), abs(C[1, 1, 0, 1]), abs(C[0, 0, 1, 0]), abs(C[1, 1, 1, 0]))
    if abs(c11 - c22) > tol or abs(c11 - c12 - 2.0 * c66) > tol or coupling > tol:
        return None
    return float(c12 / (2.0 * (c12 + c66)))


def _stroh_block(C: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sextic (or quartic) eigenproblem for a k × 2 × k × 2 block; B_{·,n} = A_n (L_n·b)/(πi)."""
    k = C.shape[0]
    mm, nn = C[:, 0, :, 0], C[:, 1, :, 1]
    mn, nm = C[:, 0, :, 1], C[:, 1, :, 0]
    try:
        nninv = np.linalg.inv(nn)
    except np.linalg.LinAlgError as exc:
        raise PredictorError(f"singular (nn) block: {exc}", module="predictor") from exc
    mn_nninv = mn @ nninv
    N = np.zeros((2 * k, 2 * k))
    N[:k, :k] = -nninv @ nm
    N[:k, k:] = -nninv
    N[k:, :k] = -(mn_nninv @ nm - mm)
    N[k:, k:] = -mn_nninv
    p, vec = np.linalg.eig(N)
    upper = np.flatnonzero(p.imag > _ROOT_TOL * max(1.0, float(np.max(np.abs(p)))))
    if len(upper) != k:
        raise PredictorError(f"expected {k} roots with Im p > 0, found {len(upper)}: {p}", module="predictor")
    p = p[upper]
    A = vec[:k, upper]
    L = vec[k:, upper]
    if k > 1:
        gaps = np.abs(p[:, None] - p[None, :])[np.triu_indices(k, 1)]
        if gaps.min() < _ROOT_TOL * max(1.0, float(np.max(np.abs(p)))):
            raise PredictorError(
                f"degenerate Stroh roots {p}; use the anti-plane path (predictor.cle = 'antiplane')",
                module="predictor",
            )
    norm = 2.0 * np.sum(A * L, axis=0)
    if np.min(np.abs(norm)) < 1e-12:
        raise PredictorError("Stroh eigenvectors cannot be normalized (2 A·L = 0)", module="predictor")
    A = A / np.sqrt(norm)
    L = L / np.sqrt(norm)
    B = A * (L.T @ b)[None, :] / (math.pi * 1j)
    jump = 2.0 * np.real(A @ (L.T @ b))
    if np.linalg.norm(jump - b) > 1e-8 * max(1.0, float(np.linalg.norm(b))):
        raise PredictorError(f"Stroh field jump {jump} does not reproduce b={b}", module="predictor")
    return p, B


def cle_eval(cle: CLESolution, x: np.ndarray) -> np.ndarray:
    """u_lin at one point (shape (2,)) or many (shape (N, 2))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)[:, :2]
    cut = on_branch_cut(pts, cle.core)
    if np.any(cut):
        bad = pts[np.argmax(cut)]
        raise BranchError(f"point {bad.tolist()} lies on the branch cut from core {cle.core.tolist()}")
    dx = pts - cle.core
    u = np.zeros((len(pts), cle.d_s))
    if len(cle.roots):
        z = dx[:, :1] + cle.roots[None, :] * dx[:, 1:2]
        u += np.real(branch_log(z) @ cle.coefficients.T)
    if cle.edge is not None:
        u[:, :2] += _isotropic_edge(dx, *cle.edge)
    return u[0] if single else u


def _isotropic_edge(dx: np.ndarray, b1: float, nu: float) -> np.ndarray:
    x, y = dx[:, 0], dx[:, 1]
    r2 = x * x + y * y
    theta = branch_arg(dx)
    u1 = b1 / TWO_PI * (theta + x * y / (2.0 * (1.0 - nu) * r2))
    u2 = -b1 / TWO_PI * ((1.0 - 2.0 * nu) / (4.0 * (1.0 - nu)) * np.log(r2) + (x * x - y * y) / (4.0 * (1.0 - nu) * r2))
    return np.column_stack([u1, u2])
