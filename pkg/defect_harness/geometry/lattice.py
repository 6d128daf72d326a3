from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from defect_harness.errors import InputError

# Relative tolerance for ball membership and site coincidence.
_TOL = 1e-9
_NO_COORD = np.iinfo(np.int64).min


def _in_ball(norms: np.ndarray, radius: float) -> np.ndarray:
    return norms <= radius + _TOL * max(1.0, radius)


@dataclass(slots=True, eq=False)
class BravaisLattice:
    """Bravais lattice A Z^d living in R^{d_s}.

    When d < d_s (dislocation geometries, d = 2 and d_s = 3) each in-plane site carries a
    column of atoms along e3 with spacing `column_period`. `column_shift[i]` is the e3
    offset of the column reached by the lattice vector A e_i.
    """

    A: np.ndarray
    d_s: int
    column_period: float = 1.0
    column_shift: np.ndarray | None = None

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"lattice matrix must be square, got shape {A.shape}", module="lattice")
        d = A.shape[0]
        if d not in (2, 3):
            raise InputError(f"lattice dimension must be 2 or 3, got {d}", module="lattice")
        if not np.all(np.isfinite(A)) or abs(np.linalg.det(A)) < 1e-12:
            raise InputError("lattice matrix must be finite and nonsingular", module="lattice")
        if self.d_s not in (2, 3) or self.d_s < d:
            raise InputError(f"physical dimension d_s={self.d_s} incompatible with d={d}", module="lattice")
        if self.d_s > d and d != 2:
            raise InputError("columnar lattices require d = 2, d_s = 3", module="lattice")
        if not (self.column_period > 0.0 and math.isfinite(self.column_period)):
            raise InputError(f"column_period must be positive, got {self.column_period}", module="lattice")
        shift = np.zeros(d) if self.column_shift is None else np.asarray(self.column_shift, dtype=float)
        if shift.shape != (d,):
            raise InputError(f"column_shift must have {d} entries", module="lattice")
        self.A = A
        self.column_shift = shift

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def columnar(self) -> bool:
        return self.d < self.d_s

    @property
    def period(self) -> float | None:
        """Image period along e3 for columnar lattices, else None."""
        return self.column_period if self.columnar else None

    @property
    def max_vector_length(self) -> float:
        return float(np.max(np.linalg.norm(self.A, axis=0)))

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.A)))

    @property
    def nn_distance(self) -> float:
        """Shortest nonzero in-plane lattice vector."""
        coords = _box(self.d, 2)
        coords = coords[np.any(coords != 0, axis=1)]
        return float(np.min(np.linalg.norm(coords @ self.A.T, axis=1)))

    @property
    def min_cell_width(self) -> float:
        return self.cell_volume / self.max_vector_length ** (self.d - 1)

    def atom_spacing(self) -> float:
        """Smallest distance between two atoms, column images included."""
        if not self.columnar:
            return self.nn_distance
        coords = _box(self.d, 2)
        x = self.reference_positions(coords)
        best = self.column_period
        for n in (-2, -1, 0, 1, 2):
            shifted = x + np.array([0.0, 0.0, n * self.column_period])
            norms = np.linalg.norm(shifted, axis=1)
            norms = norms[norms > _TOL]
            best = min(best, float(norms.min()))
        return best

    def positions(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.A.T

    def reduced(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.A, np.asarray(points, dtype=float).T).T

    def reference_positions(self, coords: np.ndarray) -> np.ndarray:
        """Positions in R^{d_s}; column offsets are reduced modulo the period."""
        coords = np.atleast_2d(np.asarray(coords))
        x = self.positions(coords)
        if not self.columnar:
            return x
        z = np.mod(coords @ self.column_shift, self.column_period)
        return np.column_stack([x, z])

    def scaled(self, factor: float) -> BravaisLattice:
        return BravaisLattice(
            A=self.A * factor,
            d_s=self.d_s,
            column_period=self.column_period * factor,
            column_shift=self.column_shift * factor,
        )

    def key(self) -> tuple:
        return (
            tuple(np.round(self.A, 12).ravel()),
            self.d_s,
            round(self.column_period, 12),
            tuple(np.round(self.column_shift, 12)),
        )


def square(a: float = 1.0) -> BravaisLattice:
    return BravaisLattice(A=a * np.eye(2), d_s=2)


def triangular(a: float = 1.0) -> BravaisLattice:
    return BravaisLattice(A=a * np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]), d_s=2)


def simple_cubic(a: float = 1.0) -> BravaisLattice:
    return BravaisLattice(A=a * np.eye(3), d_s=3)


def bcc(a: float = 1.0) -> BravaisLattice:
    return BravaisLattice(A=0.5 * a * np.array([[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]]), d_s=3)


def fcc(a: float = 1.0) -> BravaisLattice:
    return BravaisLattice(A=0.5 * a * np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]), d_s=3)


def columnar(A2: np.ndarray, period: float = 1.0, shift: Sequence[float] | None = None) -> BravaisLattice:
    return BravaisLattice(A=np.asarray(A2, dtype=float), d_s=3, column_period=period, column_shift=shift)


class DefectKind(str, Enum):
    NONE = "none"
    VACANCY = "vacancy"
    INTERSTITIAL = "interstitial"
    SUBSTITUTION = "substitution"
    DISLOCATION = "dislocation"


@dataclass(slots=True, eq=False)
class ReferenceConfig:
    """Defective lattice: the Bravais tail outside B_{R_def} plus an explicit core list."""

    lattice: BravaisLattice
    core_sites: np.ndarray
    R_def: float = 0.0
    defect_kind: DefectKind = DefectKind.NONE

    def __post_init__(self) -> None:
        core = np.asarray(self.core_sites, dtype=float).reshape(-1, self.lattice.d)
        if not np.all(np.isfinite(core)):
            raise InputError("core sites must be finite", module="lattice")
        if not (self.R_def >= 0.0 and math.isfinite(self.R_def)):
            raise InputError(f"R_def must be finite and nonnegative, got {self.R_def}", module="lattice")
        outside = ~_in_ball(np.linalg.norm(core, axis=1), self.R_def)
        if np.any(outside):
            bad = core[np.argmax(outside)]
            raise InputError(f"core site {bad.tolist()} lies outside B_R_def (R_def={self.R_def})", module="lattice")
        if len(core) > 1:
            pairs = cKDTree(core).query_pairs(_TOL * max(1.0, self.lattice.nn_distance))
            if pairs:
                i, j = sorted(pairs)[0]
                raise InputError(f"core sites {i} and {j} coincide", module="lattice")
        self.core_sites = core
        self.defect_kind = DefectKind(self.defect_kind)

    @classmethod
    def homogeneous(cls, lattice: BravaisLattice, R_def: float = 0.0) -> ReferenceConfig:
        core = _lattice_ball(lattice, R_def) if R_def > 0.0 else np.zeros((0, lattice.d))
        return cls(lattice=lattice, core_sites=core, R_def=R_def)

    @classmethod
    def with_vacancies(
        cls,
        lattice: BravaisLattice,
        vacancies: Iterable[Sequence[int]],
        R_def: float | None = None,
    ) -> ReferenceConfig:
        removed = np.asarray(list(vacancies), dtype=np.int64).reshape(-1, lattice.d)
        if R_def is None:
            R_def = float(np.max(np.linalg.norm(lattice.positions(removed), axis=1))) + 0.5 * lattice.nn_distance
        coords = _lattice_ball_coords(lattice, R_def)
        drop = {tuple(v) for v in removed.tolist()}
        missing = drop - {tuple(c) for c in coords.tolist()}
        if missing:
            raise InputError(f"vacancies {sorted(missing)} lie outside B_R_def", module="lattice")
        keep = [c for c in coords.tolist() if tuple(c) not in drop]
        core = lattice.positions(np.asarray(keep, dtype=np.int64).reshape(-1, lattice.d))
        return cls(lattice=lattice, core_sites=core, R_def=R_def, defect_kind=DefectKind.VACANCY)

    @classmethod
    def with_interstitials(
        cls,
        lattice: BravaisLattice,
        positions: Iterable[Sequence[float]],
        R_def: float,
    ) -> ReferenceConfig:
        extra = np.asarray(list(positions), dtype=float).reshape(-1, lattice.d)
        core = np.vstack([_lattice_ball(lattice, R_def), extra])
        return cls(lattice=lattice, core_sites=core, R_def=R_def, defect_kind=DefectKind.INTERSTITIAL)

    @classmethod
    def with_substitutions(
        cls,
        lattice: BravaisLattice,
        positions: Iterable[Sequence[float]],
        R_def: float,
    ) -> ReferenceConfig:
        """Replace every lattice site in B_R_def by the explicit list `positions`."""
        core = np.asarray(list(positions), dtype=float).reshape(-1, lattice.d)
        if not len(core):
            raise InputError("a substitution core needs at least one position", module="lattice")
        return cls(lattice=lattice, core_sites=core, R_def=R_def, defect_kind=DefectKind.SUBSTITUTION)


@dataclass(slots=True, eq=False)
class SiteSet:
    """Finite site list Λ ∩ B_R(center) with deterministic indices."""

    lattice: BravaisLattice
    positions: np.ndarray
    coords: np.ndarray
    on_lattice: np.ndarray
    is_core: np.ndarray
    radius: float
    center: np.ndarray
    _index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False)
    _tree: cKDTree | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.positions)

    def index_of(self, coord: Sequence[int]) -> int | None:
        if not self._index:
            self._index = {
                tuple(c): i for i, c in enumerate(self.coords.tolist()) if self.on_lattice[i]
            }
        return self._index.get(tuple(int(c) for c in coord))

    def indices_of(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized `index_of`; -1 where the coordinate is not in the set."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.lattice.d)
        out = np.full(len(coords), -1, dtype=np.int64)
        for k, c in enumerate(coords.tolist()):
            idx = self.index_of(c)
            if idx is not None:
                out[k] = idx
        return out

    def locate(self, points: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        """Index of the site at each point, or -1."""
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        points = np.asarray(points, dtype=float).reshape(-1, self.lattice.d)
        dist, idx = self._tree.query(points)
        return np.where(dist <= tol * max(1.0, self.lattice.nn_distance), idx, -1).astype(np.int64)

    def reference_positions(self) -> np.ndarray:
        """Reference positions in R^{d_s}."""
        if not self.lattice.columnar:
            return self.positions.copy()
        x = np.zeros((len(self), 3))
        x[:, :2] = self.positions
        lat = self.on_lattice
        if np.any(lat):
            x[lat] = self.lattice.reference_positions(self.coords[lat])
        return x

    def distances_from_origin(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)


def generate_sites(config: ReferenceConfig, R: float, center: Sequence[float] | None = None) -> SiteSet:
    """All sites of Λ in the closed ball B_R(center).

    Lattice sites outside the core ball come first in lexicographic order of their
    integer coordinates; core sites follow in input order.
    """
    if not (math.isfinite(R) and R > 0.0):
        raise InputError(f"site radius must be positive and finite, got {R}", module="lattice")
    lattice = config.lattice
    c = np.zeros(lattice.d) if center is None else np.asarray(center, dtype=float)

    coords = _lattice_ball_coords(lattice, R, c)
    x = lattice.positions(coords)
    if config.R_def > 0.0:
        tail = ~_in_ball(np.linalg.norm(x, axis=1), config.R_def)
    else:
        tail = np.ones(len(x), dtype=bool)
    coords, x = coords[tail], x[tail]

    core = config.core_sites
    core_in = _in_ball(np.linalg.norm(core - c, axis=1), R)
    core = core[core_in]
    core_coords = np.full((len(core), lattice.d), _NO_COORD, dtype=np.int64)
    core_on_lattice = np.zeros(len(core), dtype=bool)
    if len(core):
        reduced = lattice.reduced(core)
        rounded = np.rint(reduced)
        hit = np.all(np.abs(reduced - rounded) < 1e-8, axis=1)
        core_coords[hit] = rounded[hit].astype(np.int64)
        core_on_lattice = hit

    return SiteSet(
        lattice=lattice,
        positions=np.vstack([x, core]) if len(core) else x,
        coords=np.vstack([coords, core_coords]) if len(core) else coords,
        on_lattice=np.concatenate([np.ones(len(x), dtype=bool), core_on_lattice]),
        is_core=np.concatenate([np.zeros(len(x), dtype=bool), np.ones(len(core), dtype=bool)]),
        radius=float(R),
        center=c,
    )


def _box(d: int, n: int) -> np.ndarray:
    axes = [np.arange(-n, n + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def _lattice_ball_coords(lattice: BravaisLattice, R: float, center: np.ndarray | None = None) -> np.ndarray:
    c = np.zeros(lattice.d) if center is None else center
    if R < 0:
        return np.zeros((0, lattice.d), dtype=np.int64)
    inv = np.linalg.inv(lattice.A)
    mid = inv @ c
    half = np.linalg.norm(inv, axis=1) * R + 1.0
    axes = [np.arange(math.floor(mid[i] - half[i]), math.ceil(mid[i] + half[i]) + 1) for i in range(lattice.d)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lattice.d).astype(np.int64)
    keep = _in_ball(np.linalg.norm(lattice.positions(coords) - c, axis=1), R)
    coords = coords[keep]
    order = np.lexsort(coords.T[::-1])
    return coords[order]


def _lattice_ball(lattice: BravaisLattice, R: float) -> np.ndarray:
    return lattice.positions(_lattice_ball_coords(lattice, R))
