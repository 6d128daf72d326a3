from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import pytest

from defect_harness.config import (
    apply_overrides,
    build_predictor,
    config_from_dict,
    load_config,
    parse_override,
    resolve,
)
from defect_harness.errors import ConfigError
from defect_harness.geometry import DefectKind
from defect_harness.potentials import SpringPotential
from defect_harness.predictor import DislocationPredictor, PointDefectPredictor

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "lattice": {"kind": "square"},
    "potential": {"kind": "springs", "params": {"kappa": 1.0}},
    "solver": {"R_dom": 12.0},
}


def _raw(**sections) -> dict:
    raw = copy.deepcopy(BASE)
    raw.update(sections)
    return raw


def test_minimal_config_uses_defaults() -> None:
    cfg = config_from_dict(_raw())

    assert cfg.defect.kind == "none"
    assert cfg.solver.options().method == "lbfgs"
    assert cfg.analysis.rmin == 4.0
    assert cfg.output.dir == Path("runs/out")
    assert not cfg.is_dislocation


def test_negative_domain_radius_is_rejected() -> None:
    with pytest.raises(ConfigError, match="solver.R_dom"):
        config_from_dict(_raw(solver={"R_dom": -1.0}))


def test_schema_errors_are_joined() -> None:
    raw = _raw(lattice={"kind": "hexagonal"}, solver={"R_dom": 5.0, "method": "newton"})

    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    assert "lattice.kind" in str(exc.value)
    assert "solver.method" in str(exc.value)
    assert exc.value.exit_code == 2


def test_unknown_keys_are_rejected() -> None:
    with pytest.raises(ConfigError, match="Additional properties"):
        config_from_dict(_raw(solver={"R_dom": 5.0, "tolerance": 1e-6}))


def test_parse_override_reads_toml_literals() -> None:
    assert parse_override("solver.R_dom=24") == (["solver", "R_dom"], 24)
    assert parse_override("analysis.radii=[8.0, 16.0]") == (["analysis", "radii"], [8.0, 16.0])
    assert parse_override("output.dir=runs/x") == (["output", "dir"], "runs/x")
    with pytest.raises(ConfigError, match="key=value"):
        parse_override("solver.R_dom")


def test_overrides_do_not_touch_the_input() -> None:
    raw = _raw()
    out = apply_overrides(raw, ["solver.tol=1e-10", "defect.kind=\"vacancy\""])

    assert out["solver"]["tol"] == 1e-10
    assert out["defect"]["kind"] == "vacancy"
    assert "defect" not in raw
    with pytest.raises(ConfigError, match="not a table"):
        apply_overrides(raw, ["solver.R_dom.x=1"])


def test_config_from_dict_applies_overrides() -> None:
    cfg = config_from_dict(_raw(), ["solver.R_dom=20", "solver.method=cg"])

    assert cfg.solver.R_dom == 20
    assert cfg.solver.method == "cg"


@pytest.mark.parametrize(
    ("sections", "message"),
    [
        ({"defect": {"kind": "dislocation"}}, "predictor: required"),
        ({"predictor": {"burgers": [0.0, 0.0, 1.0]}}, "only meaningful"),
        ({"defect": {"kind": "vacancy"}}, "at least one site"),
        ({"defect": {"kind": "interstitial", "interstitials": [[0.5, 0.5]]}}, "R_def"),
        ({"lattice": {"kind": "columnar"}}, "lattice.A"),
        ({"analysis": {"radii": [16.0, 8.0]}}, "ascending"),
        ({"defect": {"kind": "substitution", "R_def": 1.0}}, "core position list"),
        ({"defect": {"kind": "substitution", "core_sites": [[0.1, 0.0]]}}, "R_def"),
        ({"defect": {"kind": "vacancy", "vacancies": [[0, 0]], "core_sites": [[0.0, 0.0]]}}, "core_sites: only meaningful"),
    ],
)
def test_cross_section_checks(sections, message) -> None:
    with pytest.raises(ConfigError, match=message):
        config_from_dict(_raw(**sections))


def test_slow_pair_decay_is_rejected_for_point_defects() -> None:
    raw = _raw(
        potential={"kind": "pair", "params": {"form": "lj", "p": 6.0, "q": 2.5}},
        defect={"kind": "vacancy", "vacancies": [[0, 0]]},
    )

    with pytest.raises(ConfigError, match="decay power"):
        config_from_dict(raw)


def test_missing_file_is_a_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_malformed_toml_is_a_config_error(tmp_path: Path) -> None:
    path = tmp_path / "bad.toml"
    path.write_text("[solver\nR_dom = 3\n", encoding="utf-8")

    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(path)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_load(name: str) -> None:
    cfg = load_config(CONFIGS / name)

    assert cfg.solver.R_dom > 0


def test_resolve_springs_setup() -> None:
    setup = resolve(config_from_dict(_raw()))

    assert isinstance(setup.potential, SpringPotential)
    assert setup.scale == 1.0
    assert setup.decisions["r_cut"] == setup.potential.r_cut
    assert isinstance(build_predictor(config_from_dict(_raw()), setup), PointDefectPredictor)


def test_resolve_screw_setup_scales_the_burgers_vector() -> None:
    cfg = load_config(CONFIGS / "screw_lj_columnar.toml", ["solver.R_dom=16"])
    setup = resolve(cfg)
    predictor = build_predictor(cfg, setup)

    assert 1.0 < setup.scale < 2.0 ** (1.0 / 6.0)
    assert isinstance(predictor, DislocationPredictor)
    np.testing.assert_allclose(predictor.burgers, [0.0, 0.0, setup.scale])


def test_equilibrium_scale_needs_a_pair_or_eam_potential() -> None:
    cfg = config_from_dict(_raw(lattice={"kind": "square", "scale": "equilibrium"}))

    with pytest.raises(ConfigError, match="equilibrium"):
        resolve(cfg)


def test_analysis_section_accepts_the_fit_field_and_radii() -> None:
    cfg = config_from_dict(_raw(analysis={"fit_field": "residual", "radii": [8.0, 16.0]}))

    assert cfg.analysis.fit_field == "residual"
    assert cfg.analysis.radii == [8.0, 16.0]
    assert config_from_dict(_raw()).analysis.radii == []
    with pytest.raises(ConfigError, match="analysis.fit_field"):
        config_from_dict(_raw(analysis={"fit_field": "strain"}))


def test_resolve_substitution_core() -> None:
    raw = _raw(defect={"kind": "substitution", "core_sites": [[0.1, 0.0]], "R_def": 0.5})
    setup = resolve(config_from_dict(raw))

    assert setup.reference.defect_kind is DefectKind.SUBSTITUTION
    np.testing.assert_allclose(setup.reference.core_sites, [[0.1, 0.0]])
