from __future__ import annotations

import copy
import logging
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from jsonschema import Draft202012Validator

from defect_harness.errors import ConfigError
from defect_harness.geometry.lattice import BravaisLattice, DefectKind, ReferenceConfig
from defect_harness.geometry import lattice as lattices
from defect_harness.potentials import get_potential
from defect_harness.potentials.base import SitePotential
from defect_harness.potentials.eam import EAMPotential
from defect_harness.potentials.environment import equilibrium_scale, resolve_cutoff
from defect_harness.potentials.pair import PairPotential
from defect_harness.potentials.springs import SpringPotential
from defect_harness.potentials.tight_binding import TightBindingPotential
from defect_harness.predictor.dislocation import PointDefectPredictor, Predictor, build_dislocation
from defect_harness.relax.minimize import SolverOptions

logger = logging.getLogger(__name__)

LATTICE_KINDS = ("square", "triangular", "simple_cubic", "bcc", "fcc", "columnar", "custom")
DEFECT_KINDS = ("none", "vacancy", "interstitial", "substitution", "dislocation")
POTENTIAL_KINDS = ("pair", "eam", "tb", "springs")

# Decay exponents of pair / EAM interactions needed for the decay theory to apply.
MIN_DECAY_POWER = {
    ("pair", "point"): 3.0,
    ("pair", "dislocation"): 5.0,
    ("eam", "point"): 4.5,
    ("eam", "dislocation"): 5.0,
}

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_VECTOR = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 3}
_INT_VECTOR = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 3}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["lattice", "potential", "solver"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(LATTICE_KINDS)},
                "scale": {"oneOf": [_POSITIVE, {"const": "equilibrium"}]},
                "A": {"type": "array", "items": _VECTOR, "minItems": 2, "maxItems": 3},
                "d_s": {"type": "integer", "minimum": 2, "maximum": 3},
                "column_period": _POSITIVE,
                "column_shift": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
            },
        },
        "defect": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(DEFECT_KINDS)},
                "vacancies": {"type": "array", "items": _INT_VECTOR},
                "interstitials": {"type": "array", "items": _VECTOR},
                "core_sites": {"type": "array", "items": _VECTOR},
                "R_def": {"type": "number", "minimum": 0},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(POTENTIAL_KINDS)},
                "params": {"type": "object"},
                "cutoff": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "mode": {"enum": ["hard", "adaptive"]},
                        "radius": _POSITIVE,
                        "tol": _POSITIVE,
                        "max_radius": _POSITIVE,
                        "shift": {"type": "boolean"},
                    },
                },
            },
        },
        "predictor": {
            "type": "object",
            "additionalProperties": False,
            "required": ["burgers"],
            "properties": {
                "burgers": {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3},
                "core": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                "r_hat": _POSITIVE,
                "cle": {"enum": ["antiplane", "stroh"]},
                "eta_onset": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "correction": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["site", "value"],
                        "properties": {"site": _INT_VECTOR, "value": _VECTOR},
                    },
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["R_dom"],
            "properties": {
                "R_dom": _POSITIVE,
                "buffer": _POSITIVE,
                "skin": {"type": "number", "minimum": 0},
                "method": {"enum": ["lbfgs", "cg"]},
                "tol": _POSITIVE,
                "max_iter": {"type": "integer", "minimum": 0},
                "memory": {"type": "integer", "minimum": 1},
                "armijo": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "max_halvings": {"type": "integer", "minimum": 1},
                "guard": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rmin": _POSITIVE,
                "rmax": _POSITIVE,
                "decay_model": {"enum": ["power", "power_log", "exponential"]},
                "fit_field": {"enum": ["corrector", "residual", "predictor", "green"]},
                "order": {"type": "integer", "minimum": 0, "maximum": 2},
                "expected_exponent": _NUMBER,
                "exponent_tolerance": _POSITIVE,
                "radii": {"type": "array", "items": _POSITIVE, "minItems": 2},
                "grid_n": {"type": "integer", "minimum": 8},
                "green_radius": _POSITIVE,
                "green_tol": _POSITIVE,
                "green_kgrid": {"type": "integer", "minimum": 8},
                "green_max_grid": {"type": "integer", "minimum": 16},
                "probe_samples": {"type": "integer", "minimum": 1},
                "rayleigh_samples": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string", "minLength": 1},
                "event_every": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass(slots=True)
class LatticeSpec:
    kind: str
    scale: float | str = 1.0
    A: list[list[float]] | None = None
    d_s: int | None = None
    column_period: float = 1.0
    column_shift: list[float] | None = None


@dataclass(slots=True)
class DefectSpec:
    kind: str = "none"
    vacancies: list[list[int]] = field(default_factory=list)
    interstitials: list[list[float]] = field(default_factory=list)
    core_sites: list[list[float]] = field(default_factory=list)
    R_def: float | None = None


@dataclass(slots=True)
class PotentialSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    cutoff: dict[str, Any] = field(default_factory=dict)


@dataclass(slots=True)
class PredictorSpec:
    burgers: list[float]
    core: list[float] | None = None
    r_hat: float | None = None
    cle: str = "antiplane"
    eta_onset: float = 0.5
    correction: list[dict] = field(default_factory=list)


@dataclass(slots=True)
class SolverSpec:
    R_dom: float
    buffer: float | None = None
    skin: float | None = None
    method: str = "lbfgs"
    tol: float = 1e-8
    max_iter: int = 2000
    memory: int = 10
    armijo: float = 1e-4
    max_halvings: int = 40
    guard: float = 0.1

    def options(self) -> SolverOptions:
        return SolverOptions(
            method=self.method,
            tol=self.tol,
            max_iter=self.max_iter,
            memory=self.memory,
            armijo=self.armijo,
            max_halvings=self.max_halvings,
            guard=self.guard,
        )


@dataclass(slots=True)
class AnalysisSpec:
    rmin: float = 4.0
    rmax: float | None = None
    decay_model: str = "power"
    fit_field: str = "corrector"
    order: int = 1
    expected_exponent: float | None = None
    exponent_tolerance: float = 0.3
    radii: list[float] = field(default_factory=list)
    grid_n: int = 64
    green_radius: float = 32.0
    green_tol: float = 1e-4
    green_kgrid: int | None = None
    green_max_grid: int | None = None
    probe_samples: int = 20
    rayleigh_samples: int = 0


@dataclass(slots=True)
class OutputSpec:
    dir: Path = Path("runs/out")
    event_every: int = 10


@dataclass(slots=True)
class RunConfig:
    lattice: LatticeSpec
    potential: PotentialSpec
    solver: SolverSpec
    defect: DefectSpec = field(default_factory=DefectSpec)
    predictor: PredictorSpec | None = None
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def is_dislocation(self) -> bool:
        return self.defect.kind == "dislocation"


def parse_override(text: str) -> tuple[list[str], Any]:
    """`a.b.c=value` → (["a", "b", "c"], value); values are TOML literals or bare strings."""
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return key.split("."), parsed


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    out = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {text!r}: {part} is not a table")
            node = child
        node[path[-1]] = value
    return out


def validate_raw(raw: dict) -> None:
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        messages = [f"{'.'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("; ".join(messages))


def config_from_dict(raw: dict, overrides: Sequence[str] = ()) -> RunConfig:
    raw = apply_overrides(raw, overrides)
    validate_raw(raw)
    predictor = raw.get("predictor")
    output = dict(raw.get("output", {}))
    if "dir" in output:
        output["dir"] = Path(output["dir"])
    cfg = RunConfig(
        lattice=LatticeSpec(**raw["lattice"]),
        potential=PotentialSpec(**raw["potential"]),
        solver=SolverSpec(**raw["solver"]),
        defect=DefectSpec(**raw.get("defect", {})),
        predictor=PredictorSpec(**predictor) if predictor is not None else None,
        analysis=AnalysisSpec(**raw.get("analysis", {})),
        output=OutputSpec(**output),
        seed=int(raw.get("seed", 0)),
        raw=raw,
    )
    cross_check(cfg)
    return cfg


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> RunConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = tomllib.loads(config_path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    return config_from_dict(raw, overrides)


def cross_check(cfg: RunConfig) -> None:
    """Checks that need more than one config section."""
    kind = cfg.lattice.kind
    if kind in ("custom", "columnar") and cfg.lattice.A is None:
        raise ConfigError(f"lattice.A: required for lattice kind {kind}")
    if kind == "custom" and cfg.lattice.d_s is None:
        raise ConfigError("lattice.d_s: required for lattice kind custom")
    if cfg.is_dislocation:
        if cfg.predictor is None:
            raise ConfigError("predictor: required for dislocation geometries")
        if kind not in ("columnar", "custom", "square", "triangular"):
            raise ConfigError(f"lattice.kind: {kind} is not an in-plane lattice; dislocations need d = 2")
        if cfg.potential.kind in ("tb", "springs"):
            raise ConfigError(f"potential.kind: {cfg.potential.kind} is not supported for dislocation geometries")
    elif cfg.predictor is not None:
        raise ConfigError("predictor: only meaningful for defect.kind = 'dislocation'")
    if cfg.defect.kind == "vacancy" and not cfg.defect.vacancies:
        raise ConfigError("defect.vacancies: a vacancy defect needs at least one site")
    if cfg.defect.kind == "interstitial" and not cfg.defect.interstitials:
        raise ConfigError("defect.interstitials: an interstitial defect needs at least one position")
    if cfg.defect.kind == "interstitial" and cfg.defect.R_def is None:
        raise ConfigError("defect.R_def: required for interstitial defects")
    if cfg.defect.kind == "substitution":
        if not cfg.defect.core_sites:
            raise ConfigError("defect.core_sites: a substitution defect needs an explicit core position list")
        if cfg.defect.R_def is None:
            raise ConfigError("defect.R_def: required for substitution defects")
    elif cfg.defect.core_sites:
        raise ConfigError("defect.core_sites: only meaningful for defect.kind = 'substitution'")
    if cfg.potential.kind in ("pair", "eam"):
        power = _decay_power(cfg.potential)
        regime = "dislocation" if cfg.is_dislocation else "point"
        threshold = MIN_DECAY_POWER[(cfg.potential.kind, regime)]
        if power is not None and cfg.defect.kind != "none" and not power > threshold:
            raise ConfigError(
                f"potential.params.q: decay power {power} must exceed {threshold} for {regime} defects"
            )
    if cfg.solver.buffer is not None and cfg.defect.R_def is not None:
        if not cfg.solver.R_dom > cfg.defect.R_def + cfg.solver.buffer:
            raise ConfigError(
                f"solver.R_dom: {cfg.solver.R_dom} must exceed R_def + buffer = {cfg.defect.R_def + cfg.solver.buffer}"
            )
    radii = cfg.analysis.radii
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError(f"analysis.radii: must be strictly ascending, got {radii}")


def _decay_power(spec: PotentialSpec) -> float | None:
    params = spec.params
    if spec.kind == "pair":
        form = params.get("form", "lj_classic")
        if form == "lj":
            return float(params.get("q", 6.0))
        return 6.0 if form == "lj_classic" else None
    if params.get("density", "power") == "power":
        return float(params.get("q", 6.0))
    return None


def build_lattice(spec: LatticeSpec, scale: float = 1.0) -> BravaisLattice:
    kind = spec.kind
    if kind == "columnar":
        lattice = lattices.columnar(np.asarray(spec.A, dtype=float), spec.column_period, spec.column_shift)
    elif kind == "custom":
        A = np.asarray(spec.A, dtype=float)
        if spec.d_s == 3 and A.shape == (2, 2):
            lattice = lattices.columnar(A, spec.column_period, spec.column_shift)
        else:
            lattice = BravaisLattice(A=A, d_s=int(spec.d_s))
    else:
        lattice = getattr(lattices, kind)()
    return lattice if scale == 1.0 else lattice.scaled(scale)


def build_reference(cfg: RunConfig, lattice: BravaisLattice, scale: float = 1.0) -> ReferenceConfig:
    """Vacancy sites are lattice coordinates; interstitial and substitution positions scale with the lattice."""
    defect = cfg.defect
    if defect.kind == "vacancy":
        return ReferenceConfig.with_vacancies(lattice, defect.vacancies, defect.R_def)
    if defect.kind == "interstitial":
        positions = np.asarray(defect.interstitials, dtype=float) * scale
        return ReferenceConfig.with_interstitials(lattice, positions, float(defect.R_def))
    if defect.kind == "substitution":
        positions = np.asarray(defect.core_sites, dtype=float) * scale
        return ReferenceConfig.with_substitutions(lattice, positions, float(defect.R_def))
    config = ReferenceConfig.homogeneous(lattice, defect.R_def or 0.0)
    if defect.kind == "dislocation":
        config.defect_kind = DefectKind.DISLOCATION
    return config


@dataclass(slots=True)
class ResolvedSetup:
    """Objects built from a RunConfig plus the adaptive decisions taken on the way."""

    lattice: BravaisLattice
    reference: ReferenceConfig
    potential: SitePotential
    scale: float
    decisions: dict = field(default_factory=dict)


def build_potential(spec: PotentialSpec) -> SitePotential:
    params = dict(spec.params)
    return get_potential(spec.kind, cutoff=dict(spec.cutoff) if spec.cutoff else None, **params)


def resolve(cfg: RunConfig) -> ResolvedSetup:
    potential = build_potential(cfg.potential)
    lattice = build_lattice(cfg.lattice)
    scale = 1.0
    if cfg.lattice.scale == "equilibrium":
        if not isinstance(potential, (PairPotential, EAMPotential)):
            raise ConfigError("lattice.scale: 'equilibrium' needs a pair or EAM potential")
        scale = equilibrium_scale(potential, lattice)
    elif cfg.lattice.scale != 1.0:
        scale = float(cfg.lattice.scale)
    if scale != 1.0:
        lattice = lattice.scaled(scale)
    if isinstance(potential, TightBindingPotential) and lattice.columnar:
        raise ConfigError("potential.kind: tight binding needs d = d_s")
    if isinstance(potential, SpringPotential) and cfg.is_dislocation:
        raise ConfigError("potential.kind: springs are not supported for dislocation geometries")
    potential, report = resolve_cutoff(potential, lattice)
    reference = build_reference(cfg, lattice, scale)
    decisions = {"lattice_scale": scale, "cutoff": report.to_dict(), "r_cut": potential.r_cut}
    logger.info("resolved setup: scale %.12g, r_cut %.6g", scale, potential.r_cut)
    return ResolvedSetup(lattice=lattice, reference=reference, potential=potential, scale=scale, decisions=decisions)


def build_predictor(cfg: RunConfig, setup: ResolvedSetup) -> Predictor:
    """Dislocation predictor for dislocation configs, else the zero point-defect predictor.

    Burgers vector and core position are in units of the unscaled lattice.
    """
    if not cfg.is_dislocation:
        return PointDefectPredictor(setup.lattice.d_s)
    spec = cfg.predictor
    correction = {tuple(item["site"]): item["value"] for item in spec.correction}
    predictor = build_dislocation(
        setup.lattice,
        np.asarray(spec.burgers, dtype=float) * setup.scale,
        core=None if spec.core is None else np.asarray(spec.core, dtype=float) * setup.scale,
        r_hat=spec.r_hat,
        cle=spec.cle,
        potential=setup.potential,
        eta_onset=spec.eta_onset,
        correction=correction,
    )
    return predictor
