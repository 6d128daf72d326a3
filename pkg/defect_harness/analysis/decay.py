from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from defect_harness.errors import InputError

logger = logging.getLogger(__name__)

MODELS = ("power", "power_log", "exponential")


@dataclass(slots=True)
class DecayFit:
    """Shell envelope regression.

    power:       log v ~ exponent · log(1 + r)
    power_log:   log(v / log(2 + r)) ~ exponent · log(1 + r)
    exponential: log v ~ exponent · r   (rate = −exponent)
    """

    model: str
    edges: np.ndarray
    radii: np.ndarray
    envelope: np.ndarray
    mean: np.ndarray
    counts: np.ndarray
    exponent: float
    intercept: float
    residual_rms: float
    r2: float
    half_width: float
    warnings: list[str] = field(default_factory=list)

    @property
    def n_shells(self) -> int:
        return len(self.radii)

    @property
    def rate(self) -> float:
        return -self.exponent

    def summary(self) -> dict:
        return {
            "model": self.model,
            "exponent": self.exponent,
            "half_width": self.half_width,
            "r2": self.r2,
            "residual_rms": self.residual_rms,
            "n_shells": self.n_shells,
            "warnings": list(self.warnings),
        }


@dataclass(slots=True)
class ShellStats:
    edges: np.ndarray
    radii: np.ndarray
    envelope: np.ndarray
    mean: np.ndarray
    counts: np.ndarray


def shell_envelope(
    values: np.ndarray,
    radii: np.ndarray,
    rmin: float,
    rmax: float,
    ratio: float = 1.25,
) -> ShellStats:
    """Max and mean of `values` over multiplicative shells [rmin·ratio^k, rmin·ratio^{k+1})."""
    values = np.abs(np.asarray(values, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if values.shape != radii.shape:
        raise InputError(f"field has {values.size} values but {radii.size} radii", module="analysis")
    if not (0.0 < rmin < rmax) or ratio <= 1.0:
        raise InputError(f"bad shell range rmin={rmin} rmax={rmax} ratio={ratio}", module="analysis")
    n = max(1, int(math.floor(math.log(rmax / rmin) / math.log(ratio) + 1e-9)))
    edges = rmin * ratio ** np.arange(n + 1)
    edges[-1] = max(edges[-1], rmax)
    shell = np.searchsorted(edges, radii, side="right") - 1
    inside = (radii >= rmin) & (radii <= edges[-1]) & (shell >= 0)
    shell = np.minimum(shell, n - 1)

    r_out = np.zeros(n)
    env = np.zeros(n)
    mean = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    for k in range(n):
        members = np.flatnonzero(inside & (shell == k))
        if members.size == 0:
            raise InputError(f"empty shell [{edges[k]:.6g}, {edges[k + 1]:.6g})", module="analysis")
        j = members[int(np.argmax(values[members]))]
        r_out[k] = radii[j]
        env[k] = values[j]
        mean[k] = float(np.mean(values[members]))
        counts[k] = members.size
    return ShellStats(edges=edges, radii=r_out, envelope=env, mean=mean, counts=counts)


def decay_fit(
    values: np.ndarray,
    radii: np.ndarray,
    rmin: float,
    rmax: float,
    model: str = "power",
    *,
    ratio: float = 1.25,
    min_shells: int = 6,
) -> DecayFit:
    """Least-squares decay model fitted to the per-shell maximum of |values|."""
    if model not in MODELS:
        raise InputError(f"Unknown decay model: {model}", module="analysis")
    shells = shell_envelope(values, radii, rmin, rmax, ratio)
    warnings: list[str] = []
    usable = shells.envelope > 0.0
    if not np.all(usable):
        warnings.append(f"{int(np.sum(~usable))} shells with zero envelope dropped")
    if np.sum(usable) < 2:
        raise InputError("decay fit needs at least two shells with a nonzero envelope", module="analysis")
    if np.sum(usable) < min_shells:
        warnings.append(f"only {int(np.sum(usable))} shells (< {min_shells})")

    r = shells.radii[usable]
    v = shells.envelope[usable]
    if model == "exponential":
        x = r
        y = np.log(v)
    else:
        x = np.log1p(r)
        y = np.log(v / np.log(2.0 + r)) if model == "power_log" else np.log(v)

    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    n = len(x)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    if n > 2:
        se = math.sqrt(ss_res / (n - 2) / float(np.sum((x - x.mean()) ** 2)))
        half_width = float(stats.t.ppf(0.975, n - 2)) * se
    else:
        half_width = math.inf
    for w in warnings:
        logger.warning("decay fit (%s): %s", model, w)
    return DecayFit(
        model=model,
        edges=shells.edges,
        radii=shells.radii,
        envelope=shells.envelope,
        mean=shells.mean,
        counts=shells.counts,
        exponent=float(slope),
        intercept=float(intercept),
        residual_rms=math.sqrt(ss_res / n),
        r2=r2,
        half_width=half_width,
        warnings=warnings,
    )


def decay_fit_models(
    values: np.ndarray,
    radii: np.ndarray,
    rmin: float,
    rmax: float,
    models: Sequence[str] = ("power", "power_log"),
    **kwargs,
) -> dict[str, DecayFit]:
    return {m: decay_fit(values, radii, rmin, rmax, m, **kwargs) for m in models}
