from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from defect_harness.errors import InputError
from defect_harness.geometry.lattice import ReferenceConfig, SiteSet, generate_sites
from defect_harness.geometry.neighbors import neighbors


@dataclass(slots=True)
class LatticePath:
    sites: np.ndarray
    length: int
    ratio: float


def lattice_path(config: ReferenceConfig, ell: Sequence[float], m: Sequence[float]) -> LatticePath:
    """Shortest path of neighbour steps from ℓ to m.

    Lattice sites step along ±A e_i; core sites that are not lattice points use their
    Voronoi neighbours. When both endpoints lie outside B_{R_def} the core ball is avoided
    if a path around it exists.
    """
    lattice = config.lattice
    start = np.asarray(ell, dtype=float)
    goal = np.asarray(m, dtype=float)
    dist = float(np.linalg.norm(goal - start))
    scale = lattice.max_vector_length
    R = 0.5 * dist + config.R_def + 4.0 * scale
    domain = generate_sites(config, R, center=0.5 * (start + goal))

    s, t = domain.locate(np.vstack([start, goal]))
    if s < 0 or t < 0:
        raise InputError(f"path endpoints {start.tolist()}, {goal.tolist()} are not sites", module="lattice")
    if s == t:
        return LatticePath(sites=domain.positions[[s]], length=0, ratio=0.0)

    graph = _step_graph(config, domain)
    norms = domain.distances_from_origin()
    outside = norms > config.R_def + 1e-9
    path = None
    if config.R_def > 0.0 and outside[s] and outside[t]:
        path = _bfs(graph, s, t, allowed=outside)
    if path is None:
        path = _bfs(graph, s, t, allowed=np.ones(len(domain), dtype=bool))
    if path is None:
        raise InputError(f"no neighbour path between {start.tolist()} and {goal.tolist()}", module="lattice")
    length = len(path) - 1
    return LatticePath(sites=domain.positions[path], length=length, ratio=length / dist)


def path_constant(
    config: ReferenceConfig,
    samples: int = 500,
    radius: float = 12.0,
    seed: int = 0,
) -> float:
    """Largest observed path length / distance over random site pairs in B_radius."""
    rng = np.random.default_rng(seed)
    domain = generate_sites(config, radius)
    worst = 0.0
    for _ in range(samples):
        i, j = rng.choice(len(domain), size=2, replace=False)
        path = lattice_path(config, domain.positions[i], domain.positions[j])
        worst = max(worst, path.ratio)
    return worst


def _step_graph(config: ReferenceConfig, domain: SiteSet) -> list[list[int]]:
    d = config.lattice.d
    steps = np.vstack([np.eye(d, dtype=np.int64), -np.eye(d, dtype=np.int64)])
    graph: list[list[int]] = [[] for _ in range(len(domain))]
    for i in range(len(domain)):
        if domain.on_lattice[i]:
            for j in domain.indices_of(domain.coords[i] + steps):
                if j >= 0:
                    graph[i].append(int(j))
    for i in np.flatnonzero(~domain.on_lattice):
        for j in neighbors(config, domain, int(i)).neighbors:
            j = int(j)
            if j not in graph[i]:
                graph[i].append(j)
            if i not in graph[j]:
                graph[j].append(int(i))
    return graph


def _bfs(graph: list[list[int]], s: int, t: int, allowed: np.ndarray) -> list[int] | None:
    parent = {s: -1}
    queue = deque([s])
    while queue:
        i = queue.popleft()
        if i == t:
            path = [t]
            while parent[path[-1]] != -1:
                path.append(parent[path[-1]])
            return path[::-1]
        for j in graph[i]:
            if j not in parent and allowed[j]:
                parent[j] = i
                queue.append(j)
    return None
