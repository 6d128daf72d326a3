from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from defect_harness.analysis.decay import DecayFit, decay_fit
from defect_harness.errors import InputError, QuadratureError
from defect_harness.geometry.lattice import ReferenceConfig, generate_sites
from defect_harness.homogeneous.force_constants import ForceConstants
from defect_harness.homogeneous.symbol import reciprocal_basis, symbol_eval

logger = logging.getLogger(__name__)

_CHUNK = 1 << 18


@dataclass(slots=True, eq=False)
class GreenTable:
    """Γ(ℓ) on the window |ℓ| ≤ R_G, with H Γ = δ·Id."""

    fc: ForceConstants
    coords: np.ndarray
    values: np.ndarray
    radius: float
    kgrid: int
    constant: np.ndarray
    correction: float
    _index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {tuple(c): k for k, c in enumerate(self.coords.tolist())}

    @property
    def positions(self) -> np.ndarray:
        return self.fc.lattice.positions(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    def index(self, coord) -> int | None:
        return self._index.get(tuple(int(c) for c in coord))

    def __getitem__(self, coord) -> np.ndarray:
        k = self.index(coord)
        if k is None:
            raise InputError(f"lattice offset {list(coord)} is outside the Green window", module="homogeneous")
        return self.values[k]

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Row indices for many coordinates, -1 outside the window."""
        return np.array([self._index.get(tuple(c), -1) for c in np.asarray(coords).tolist()], dtype=np.int64)

    def apply_operator(self, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """(HΓ)(ℓ) for window sites with |ℓ| ≤ radius whose stencil stays in the window."""
        pos = self.positions
        keep = np.linalg.norm(pos, axis=1) <= radius
        out = []
        rows = []
        for k in np.flatnonzero(keep):
            idx = self.lookup(self.coords[k] - self.fc.coords)
            if np.any(idx < 0):
                continue
            out.append(-2.0 * np.einsum("rij,rjk->ik", self.fc.h, self.values[idx]))
            rows.append(k)
        return np.array(rows, dtype=np.int64), np.array(out)

    def residual(self, radius: float | None = None) -> float:
        """sup |HΓ(ℓ) − δ(ℓ)Id| over |ℓ| ≤ radius (default R_G/2)."""
        rows, values = self.apply_operator(0.5 * self.radius if radius is None else radius)
        target = np.zeros_like(values)
        origin = np.all(self.coords[rows] == 0, axis=1)
        target[origin] = np.eye(values.shape[-1])
        return float(np.max(np.abs(values - target)))

    def convolve(self, f_coords: np.ndarray, f_values: np.ndarray, at: np.ndarray) -> np.ndarray:
        """(Γ∗f)(ℓ) = Σ_m Γ(ℓ − m) f(m) for compact f, at lattice coordinates `at`."""
        f_coords = np.asarray(f_coords, dtype=np.int64)
        f_values = np.asarray(f_values, dtype=float)
        at = np.atleast_2d(np.asarray(at, dtype=np.int64))
        out = np.zeros((len(at), f_values.shape[1]))
        for n, ell in enumerate(at):
            idx = self.lookup(ell - f_coords)
            if np.any(idx < 0):
                raise InputError(f"Γ∗f at {ell.tolist()} needs offsets outside the Green window", module="homogeneous")
            out[n] = np.einsum("mij,mj->i", self.values[idx], f_values)
        return out

    def summary(self) -> dict:
        return {
            "radius": self.radius,
            "kgrid": self.kgrid,
            "constant": self.constant.tolist(),
            "richardson_correction": self.correction,
            "n_sites": len(self),
        }


@dataclass(slots=True)
class LogGrowthFit:
    slope: float
    intercept: float
    residual_rms: float
    r2: float


def _inverse_symbol(fc: ForceConstants, n: int) -> np.ndarray:
    """Ĥ(k)^{-1} on the midpoint grid t = (j + ½)/n − ½, shape (n,)*d + (d_s, d_s)."""
    d, ds = fc.d, fc.d_s
    axis = (np.arange(n) + 0.5) / n - 0.5
    t = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    B = reciprocal_basis(fc.lattice)
    out = np.empty((len(t), ds, ds))
    for start in range(0, len(t), _CHUNK):
        H = symbol_eval(fc, t[start : start + _CHUNK] @ B.T)
        if np.max(np.abs(H.imag)) > 1e-10 * max(1.0, float(np.max(np.abs(H.real)))):
            raise QuadratureError("symbol is not real; force constants lack the h(−ρ) = h(ρ) symmetry")
        try:
            out[start : start + _CHUNK] = np.linalg.inv(H.real)
        except np.linalg.LinAlgError as exc:
            raise QuadratureError(f"symbol is singular on the k-grid (n={n}): {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise QuadratureError(f"symbol inverse is not finite on the k-grid (n={n}); is the lattice stable?")
    return out.reshape((n,) * d + (ds, ds))


def _grid_green(fc: ForceConstants, coords: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """G(m) = |BZ|^{-1} ∫ Ĥ^{-1} e^{ik·m} by the midpoint sum; returns (G at coords, G(0))."""
    hinv = _inverse_symbol(fc, n)
    d, ds = fc.d, fc.d_s
    phase = np.prod(np.exp(1j * math.pi * coords / n) * np.where(coords % 2 == 0, 1.0, -1.0), axis=1)
    idx = tuple((coords % n).T)
    origin = (0,) * d
    G = np.empty((len(coords), ds, ds))
    G0 = np.empty((ds, ds))
    for i in range(ds):
        for j in range(ds):
            inv = np.fft.ifftn(hinv[..., i, j])
            G[:, i, j] = np.real(inv[idx] * phase)
            G0[i, j] = np.real(inv[origin])
    return G, G0


def _default_grid(coords: np.ndarray) -> int:
    extent = int(np.max(np.abs(coords))) if len(coords) else 1
    return int(2 ** math.ceil(math.log2(max(64, 8 * extent))))


def green_function(
    fc: ForceConstants,
    radius: float,
    kgrid: int | None = None,
    *,
    tol: float = 1e-4,
    max_grid: int | None = None,
) -> GreenTable:
    """Γ(ℓ) = c + ∫_BZ Ĥ(k)^{-1}(e^{ik·ℓ} − 1) dk on the window |ℓ| ≤ radius.

    Midpoint sums on grids n and 2n are Richardson-combined; the grid doubles until the
    Richardson correction on the inner half window, relative to the largest |Γ(ℓ) − Γ(0)|
    there, is below `tol`. In d = 2 the constant makes Γ vanish on average
    over the outermost window shell; in d = 3 it is the limit c = ∫Ĥ^{-1}, so Γ → 0.
    """
    lattice = fc.lattice
    if radius < 4.0 * lattice.max_vector_length:
        raise InputError(f"Green window radius {radius} is too small", module="homogeneous")
    coords = generate_sites(ReferenceConfig.homogeneous(lattice), radius).coords
    d = fc.d
    if max_grid is None:
        max_grid = 2048 if d == 2 else 128
    n = kgrid or min(_default_grid(coords), max_grid // 2)
    inner = np.linalg.norm(lattice.positions(coords), axis=1) <= 0.5 * radius
    if radius < 32.0 * lattice.nn_distance:
        logger.warning("Green window radius %.4g is below 32 lattice spacings; decay fits will be short", radius)

    G_n, G0_n = _grid_green(fc, coords, n)
    while True:
        G_2n, G0_2n = _grid_green(fc, coords, 2 * n)
        diff_n = G_n - G0_n
        diff_2n = G_2n - G0_2n
        scale = max(float(np.max(np.abs(diff_2n[inner]))), 1e-300)
        correction = float(np.max(np.abs(diff_2n[inner] - diff_n[inner]))) / (3.0 * scale)
        logger.info("Green quadrature n=%d→%d: Richardson correction %.3e", n, 2 * n, correction)
        if correction <= tol:
            break
        if 4 * n > max_grid:
            raise QuadratureError(
                f"Green quadrature did not converge: correction {correction:.3e} > {tol:.1e} at grid {2 * n}"
            )
        n *= 2
        G_n, G0_n = G_2n, G0_2n

    values = (4.0 * diff_2n - diff_n) / 3.0
    if d == 2:
        r = np.linalg.norm(lattice.positions(coords), axis=1)
        shell = r >= radius - lattice.max_vector_length
        constant = -values[shell].mean(axis=0)
    else:
        constant = (4.0 * G0_2n - G0_n) / 3.0
    values = values + constant
    values = 0.5 * (values + np.swapaxes(values, 1, 2))
    return GreenTable(
        fc=fc,
        coords=coords,
        values=values,
        radius=float(radius),
        kgrid=2 * n,
        constant=constant,
        correction=correction,
    )


def green_differences(table: GreenTable, rho: np.ndarray | None = None, order: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(|D_ρ^j Γ(ℓ)|, |ℓ|) over window sites whose stencil stays in the window; order 0 gives |Γ|."""
    if order not in (0, 1, 2):
        raise InputError(f"difference order must be 0, 1 or 2, got {order}", module="homogeneous")
    step = np.zeros(table.fc.d, dtype=np.int64)
    step[0] = 1
    if rho is not None:
        step = np.asarray(rho, dtype=np.int64)
    cols = [table.lookup(table.coords + j * step) for j in range(order + 1)]
    ok = np.all(np.stack(cols) >= 0, axis=0)
    coeff = [(-1) ** (order - j) * math.comb(order, j) for j in range(order + 1)]
    diff = sum(c * table.values[idx[ok]] for c, idx in zip(coeff, cols))
    values = np.linalg.norm(diff, axis=(1, 2))
    radii = np.linalg.norm(table.positions[ok], axis=1)
    return values, radii


def green_decay_fit(
    table: GreenTable,
    rmin: float = 8.0,
    rmax: float | None = None,
    *,
    order: int = 1,
    rho: np.ndarray | None = None,
) -> DecayFit:
    """Power-law fit of |D_ρ^j Γ| (order j ≥ 1) or of |Γ| itself (order 0, d ≥ 3)."""
    if order == 0 and table.fc.d == 2:
        raise InputError("|Γ| grows logarithmically in d = 2; use green_log_growth", module="homogeneous")
    values, radii = green_differences(table, rho, order)
    hi = table.radius - (order + 1) * table.fc.lattice.max_vector_length if rmax is None else rmax
    fit = decay_fit(values, radii, rmin, hi, "power")
    logger.info("Green decay (order %d): exponent %.4f ± %.4f", order, fit.exponent, fit.half_width)
    return fit


def green_log_growth(table: GreenTable, rmin: float = 2.0) -> LogGrowthFit:
    """Fit tr Γ(ℓ)/d_s against log(2 + |ℓ|) (the d = 2 growth law)."""
    r = np.linalg.norm(table.positions, axis=1)
    keep = r >= rmin
    x = np.log(2.0 + r[keep])
    y = np.trace(table.values[keep], axis1=1, axis2=2) / table.fc.d_s
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return LogGrowthFit(
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        r2=r2,
    )
