from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate, special

from defect_harness.errors import ConfigError


class WeightKind(str, Enum):
    ALGEBRAIC = "algebraic"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True, slots=True)
class WeightFunction:
    """Monotone stencil weight: (1+r)^{-(k+d+eps)} or e^{-alpha r}."""

    kind: WeightKind
    k: int = 1
    d: int = 2
    eps: float = 1.0
    alpha: float = 1.0
    log_flag: bool = False

    def __post_init__(self) -> None:
        kind = WeightKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.k < 1:
            raise ConfigError(f"weight order k must be >= 1, got {self.k}", module="stencil")
        if self.d not in (1, 2, 3):
            raise ConfigError(f"weight dimension must be 1, 2 or 3, got {self.d}", module="stencil")
        if kind is WeightKind.ALGEBRAIC and not self.eps > 0.0:
            raise ConfigError(
                f"algebraic weight with eps={self.eps} is not summable against r^(k+d-1)", module="stencil"
            )
        if kind is WeightKind.EXPONENTIAL and not self.alpha > 0.0:
            raise ConfigError(f"exponential weight needs alpha > 0, got {self.alpha}", module="stencil")

    @classmethod
    def algebraic(cls, k: int, d: int, eps: float, log_flag: bool = False) -> WeightFunction:
        return cls(kind=WeightKind.ALGEBRAIC, k=k, d=d, eps=eps, log_flag=log_flag)

    @classmethod
    def exponential(cls, alpha: float, k: int = 1, d: int = 2, log_flag: bool = False) -> WeightFunction:
        return cls(kind=WeightKind.EXPONENTIAL, k=k, d=d, alpha=alpha, log_flag=log_flag)

    @property
    def exponent(self) -> float:
        return self.k + self.d + self.eps

    def __call__(self, r: np.ndarray | float) -> np.ndarray:
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        if self.kind is WeightKind.ALGEBRAIC:
            return (1.0 + r) ** (-self.exponent)
        return np.exp(-self.alpha * r)

    def norm(self) -> float:
        """‖w‖_{L_{k,d}} = sup w + ∫ r^{k+d-1} w(r) dr, in closed form."""
        n = self.k + self.d
        if self.kind is WeightKind.ALGEBRAIC:
            return 1.0 + float(special.beta(n, self.eps))
        return 1.0 + float(special.gamma(n)) / self.alpha**n

    def norm_log(self) -> float:
        n = self.k + self.d
        value, _ = integrate.quad(
            lambda r: r ** (n - 1) * math.log1p(r) ** 2 * float(self(r)), 0.0, math.inf, limit=200
        )
        return 1.0 + value

    def tail_sum_bound(self, T: float, r0: float, D: int, *, shift: float = 0.0, power: float = 0.0) -> float:
        """Bound on Σ_{|ρ|>T} w(|ρ|-shift) |ρ|^power over a point set with spacing ≥ r0 in R^D."""
        return shell_sum_bound(lambda r: float(self(r - shift)), T, r0, D, power=power)


def shell_sum_bound(g: Callable[[float], float], T: float, r0: float, D: int, *, power: float = 0.0) -> float:
    """Σ_{|ρ|>T} g(|ρ|)|ρ|^power for nonincreasing g and points at least r0 apart.

    Each ball B_{r0/2}(ρ) lies in {|x| > T - r0/2} and g(|ρ|) ≤ g(|x| - r0/2) on it.
    """
    h = 0.5 * r0
    lower = max(T - h, 0.0)
    ball = _ball_volume(D, h)
    sphere = _sphere_area(D)

    def integrand(r: float) -> float:
        return g(max(r - h, 0.0)) * (r + h) ** power * r ** (D - 1)

    value, _ = integrate.quad(integrand, lower, math.inf, limit=200)
    return sphere * value / ball


def _ball_volume(D: int, h: float) -> float:
    return math.pi ** (D / 2.0) / math.gamma(D / 2.0 + 1.0) * h**D


def _sphere_area(D: int) -> float:
    return 2.0 * math.pi ** (D / 2.0) / math.gamma(D / 2.0)
