from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import line_search

from defect_harness.errors import ConfigError, EvaluationError, StagnationError
from defect_harness.relax.model import EnergyModel, energy_diff, free_gradient
from defect_harness.stencil.displacement import Displacement

logger = logging.getLogger(__name__)

METHODS = ("lbfgs", "cg")


@dataclass(slots=True, frozen=True)
class SolverOptions:
    method: str = "lbfgs"
    tol: float = 1e-8
    max_iter: int = 2000
    memory: int = 10
    armijo: float = 1e-4
    max_halvings: int = 40
    guard: float = 0.1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"Unknown solver method: {self.method}", module="relax")
        if not self.tol > 0.0:
            raise ConfigError(f"solver tol must be positive, got {self.tol}", module="relax")
        if self.max_iter < 0 or self.memory < 1 or self.max_halvings < 1:
            raise ConfigError("solver max_iter, memory and max_halvings must be positive", module="relax")
        if not 0.0 < self.armijo < 0.5:
            raise ConfigError(f"Armijo constant must lie in (0, 0.5), got {self.armijo}", module="relax")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "memory": self.memory,
            "armijo": self.armijo,
            "max_halvings": self.max_halvings,
            "guard": self.guard,
        }


@dataclass(slots=True)
class RelaxResult:
    u: Displacement
    energy: float
    grad_norm: float
    grad_sup: float
    iterations: int
    converged: bool
    reason: str
    trace: list[dict] = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([row["energy"] for row in self.trace])

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "grad_sup": self.grad_sup,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
        }


class _Objective:
    """E and ∇E on the packed free-site vector, with admissibility checks."""

    def __init__(self, model: EnergyModel, guard: float) -> None:
        self.model = model
        self.min_distance = guard * model.domain.lattice.atom_spacing()
        self.evaluations = 0
        # rounding level of the site-energy sum
        self.noise = 64.0 * np.finfo(float).eps * (1.0 + float(np.sum(np.abs(model.phi0[model.centers]))))

    def value(self, z: np.ndarray) -> float:
        self.evaluations += 1
        u = self.model.unpack(z)
        if self.model.min_distance(self.model.y0 + u) < self.min_distance:
            return math.inf
        try:
            energy = energy_diff(self.model, u)
        except EvaluationError:
            return math.inf
        return energy if math.isfinite(energy) else math.inf

    def grad(self, z: np.ndarray) -> np.ndarray:
        return free_gradient(self.model, self.model.unpack(z))[self.model.free].ravel()


def _line_search(
    obj: _Objective,
    z: np.ndarray,
    energy: float,
    g: np.ndarray,
    p: np.ndarray,
    t0: float,
    options: SolverOptions,
    iteration: int,
) -> tuple[float, float]:
    slope = float(g @ p)
    t = t0
    for _ in range(options.max_halvings):
        trial = obj.value(z + t * p)
        if trial <= energy + options.armijo * t * slope + obj.noise:
            return t, trial
        t *= 0.5
    raise StagnationError(
        f"line search failed after {options.max_halvings} halvings at iteration {iteration}",
        diagnostics={
            "iteration": iteration,
            "energy": energy,
            "grad_norm": float(np.linalg.norm(g)),
            "directional_derivative": slope,
            "last_step": t,
        },
    )


def _wolfe_step(
    obj: _Objective,
    z: np.ndarray,
    energy: float,
    energy_prev: float,
    g: np.ndarray,
    p: np.ndarray,
    t_guess: float,
    options: SolverOptions,
    iteration: int,
) -> tuple[float, float]:
    """Strong Wolfe step (c2 = 0.4); backtracking from `t_guess` when the bracketing search fails."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t, _, _, trial, _, _ = line_search(
                obj.value,
                obj.grad,
                z,
                p,
                gfk=g,
                old_fval=energy,
                old_old_fval=energy_prev,
                c1=options.armijo,
                c2=0.4,
            )
    except EvaluationError:
        t = None
    if t is not None and trial is not None and math.isfinite(trial) and trial <= energy:
        return float(t), float(trial)
    logger.debug("wolfe search failed at iteration %d, backtracking from t=%.3e", iteration, t_guess)
    return _line_search(obj, z, energy, g, p, t_guess, options, iteration)


def _cg_direction(g: np.ndarray, g_prev: np.ndarray, p_prev: np.ndarray, first: bool) -> np.ndarray:
    """Polak-Ribière+ direction with Powell's restart on loss of gradient orthogonality."""
    gg = float(g @ g)
    if first or abs(float(g @ g_prev)) >= 0.1 * gg:
        return -g
    beta = max(0.0, float(g @ (g - g_prev)) / float(g_prev @ g_prev))
    p = -g + beta * p_prev
    return p if float(g @ p) < 0.0 else -g


def _lbfgs_direction(g: np.ndarray, memory: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    if memory:
        s, y, _ = memory[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def minimize(
    model: EnergyModel,
    options: SolverOptions | None = None,
    u_start: Displacement | np.ndarray | None = None,
    callback: Callable[[dict], None] | None = None,
) -> RelaxResult:
    """Relax the free sites of `model` from `u_start` (default 0) by LBFGS or CG.

    Every accepted step satisfies the Armijo condition, so the energy trace is monotone.
    Trial steps that bring two atoms closer than guard·(atom spacing) are rejected.
    """
    options = options or SolverOptions()
    obj = _Objective(model, options.guard)
    z = model.pack(model.full(u_start))
    energy = obj.value(z)
    if not math.isfinite(energy):
        raise EvaluationError("starting configuration is not admissible", module="relax")
    g = obj.grad(z)
    memory: deque = deque(maxlen=options.memory)
    p_prev = np.zeros_like(z)
    g_prev = g
    step = 1.0
    # seeds the first Wolfe trial step at about 1/|g|
    energy_prev = energy + 0.5 * float(np.linalg.norm(g))
    trace = [{"iteration": 0, "energy": energy, "grad_norm": float(np.linalg.norm(g)), "step": 0.0}]
    logger.info("relax start: %d free sites, E=%.10g, |g|=%.3e (%s)", model.n_free, energy, trace[0]["grad_norm"], options.method)

    iteration = 0
    reason = "max_iter"
    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= options.tol:
            reason = "converged"
            break
        if iteration >= options.max_iter:
            break
        iteration += 1

        if options.method == "lbfgs":
            p = _lbfgs_direction(g, memory)
            if float(g @ p) >= 0.0:
                memory.clear()
                p = -g
            t0 = 1.0 if memory else min(1.0, 1.0 / max(gnorm, 1e-300))
            step, energy_new = _line_search(obj, z, energy, g, p, t0, options, iteration)
        else:
            first = iteration == 1
            p = _cg_direction(g, g_prev, p_prev, first)
            if first:
                t0 = min(1.0, 1.0 / max(gnorm, 1e-300))
            else:
                t0 = step * float(g_prev @ p_prev) / float(g @ p)
            step, energy_new = _wolfe_step(obj, z, energy, energy_prev, g, p, t0, options, iteration)
        energy_prev, energy = energy, energy_new
        z_new = z + step * p
        g_new = obj.grad(z_new)
        s, y = z_new - z, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            memory.append((s, y, 1.0 / sy))
        g_prev, p_prev = g, p
        z, g = z_new, g_new

        row = {"iteration": iteration, "energy": energy, "grad_norm": float(np.linalg.norm(g)), "step": step}
        trace.append(row)
        logger.debug("iter %d: E=%.12g |g|=%.3e t=%.3e", iteration, energy, row["grad_norm"], step)
        if callback is not None:
            callback(row)

    converged = reason == "converged"
    if converged:
        logger.info("relax converged in %d iterations: E=%.12g |g|=%.3e", iteration, energy, gnorm)
    else:
        logger.warning("relax stopped at max_iter=%d: E=%.12g |g|=%.3e > tol %.1e", iteration, energy, gnorm, options.tol)
    return RelaxResult(
        u=model.displacement(z),
        energy=energy,
        grad_norm=gnorm,
        grad_sup=float(np.max(np.abs(g))) if len(g) else 0.0,
        iterations=iteration,
        converged=converged,
        reason=reason,
        trace=trace,
    )
