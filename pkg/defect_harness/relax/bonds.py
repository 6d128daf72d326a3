from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from defect_harness.errors import InputError

logger = logging.getLogger(__name__)


@dataclass(slots=True, eq=False)
class BondList:
    """Directed bonds (center → neighbor + image shift) for a set of centers.

    `built_at` holds the positions the list was built from; the list stays valid while
    no site has moved by more than skin/2 since then.
    """

    center: np.ndarray
    neighbor: np.ndarray
    shift: np.ndarray
    ref: np.ndarray
    radius: float
    skin: float
    built_at: np.ndarray
    static: bool = False

    def __len__(self) -> int:
        return len(self.center)

    def vectors(self, y: np.ndarray) -> np.ndarray:
        return y[self.neighbor] + self.shift - y[self.center]

    def stale(self, y: np.ndarray) -> bool:
        if self.static:
            return False
        moved = np.max(np.sum((y - self.built_at) ** 2, axis=1)) if len(y) else 0.0
        return bool(moved > (0.5 * self.skin) ** 2)


def _images(period: float | None, radius: float, ds: int) -> np.ndarray:
    if period is None:
        return np.zeros((1, ds))
    n_max = int(math.ceil(radius / period)) + 2
    shifts = np.zeros((2 * n_max + 1, ds))
    shifts[:, 2] = np.arange(-n_max, n_max + 1) * period
    return shifts


def build_bonds(
    select: np.ndarray,
    centers: np.ndarray,
    radius: float,
    *,
    reference: np.ndarray,
    positions: np.ndarray | None = None,
    period: float | None = None,
    skin: float = 0.0,
    static: bool = False,
) -> BondList:
    """All (ℓ, m, shift) with |select(m) + shift − select(ℓ)| ≤ radius for ℓ in `centers`.

    `select` is the configuration distances are measured in (deformed positions, or the
    reference for reference-stencil potentials). Column images along e3 take part when
    `period` is set; the pair (ℓ, ℓ, 0) is excluded.
    """
    select = np.asarray(select, dtype=float)
    centers = np.asarray(centers, dtype=np.int64)
    if radius <= 0.0:
        raise InputError(f"bond radius must be positive, got {radius}", module="relax")
    ds = select.shape[1]
    plane = select[:, :2] if period is not None else select
    tree = cKDTree(plane)
    hits = tree.query_ball_point(plane[centers], radius)
    counts = np.array([len(h) for h in hits], dtype=np.int64)
    ci = np.repeat(centers, counts)
    cj = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]) if len(hits) else np.zeros(0, dtype=np.int64)

    chunks_i, chunks_j, chunks_s = [], [], []
    for s in _images(period, radius, ds):
        vec = select[cj] + s - select[ci]
        keep = np.linalg.norm(vec, axis=1) <= radius
        if not np.any(s):
            keep &= ci != cj
        chunks_i.append(ci[keep])
        chunks_j.append(cj[keep])
        chunks_s.append(np.broadcast_to(s, (int(keep.sum()), ds)))
    center = np.concatenate(chunks_i)
    neighbor = np.concatenate(chunks_j)
    shift = np.vstack(chunks_s) if chunks_s else np.zeros((0, ds))
    order = np.lexsort((neighbor, center))
    center, neighbor, shift = center[order], neighbor[order], np.ascontiguousarray(shift[order])
    ref = reference[neighbor] + shift - reference[center]
    built = select if positions is None else positions
    logger.debug("built %d bonds for %d centers (radius %.4g, skin %.3g)", len(center), len(centers), radius, skin)
    return BondList(
        center=center,
        neighbor=neighbor,
        shift=shift,
        ref=ref,
        radius=float(radius),
        skin=float(skin),
        built_at=np.array(built, dtype=float),
        static=static,
    )
