from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from defect_harness.cli import COMMANDS, build_parser, main
from defect_harness.logging.events import read_jsonl
from defect_harness.reporting.manifest import load_manifest
from defect_harness.reporting.tables import read_table

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(command: str, config: str, out: Path, *overrides: str) -> int:
    argv = [command, "--config", str(CONFIGS / config), "--out", str(out)]
    for item in overrides:
        argv.extend(["--set", item])
    return main(argv)


def test_parser_knows_every_command() -> None:
    parser = build_parser()
    for command in COMMANDS:
        args = parser.parse_args([command, "--config", "x.toml", "--set", "a=1", "--set", "b=2"])
        assert args.command == command
        assert args.set == ["a=1", "b=2"]
        assert args.threads == 1


def test_stability_run_writes_outputs(tmp_path: Path) -> None:
    assert _run("stability", "springs_square.toml", tmp_path) == 0

    for name in ("report.md", "manifest.json", "events.jsonl", "force_constants.tsv"):
        assert (tmp_path / name).exists()
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest["status"] == "ok"
    assert manifest["result"]["stability"]["stable"] is True
    assert "force_constants.tsv" in manifest["artifacts"]
    events = read_jsonl(tmp_path / "events.jsonl")
    assert events[0]["event"] == "run_started"
    assert events[-1]["event"] == "run_finished"
    assert "status: PASS" in (tmp_path / "report.md").read_text(encoding="utf-8")


def test_unstable_lattice_is_reported_not_raised(tmp_path: Path) -> None:
    assert _run("stability", "negative_stiffness.toml", tmp_path) == 0

    report = (tmp_path / "report.md").read_text(encoding="utf-8")
    assert "| lattice_stability | fail |" in report
    assert "host lattice is unstable" in report


def test_tables_are_deterministic(tmp_path: Path) -> None:
    first, second = tmp_path / "a", tmp_path / "b"
    assert _run("stability", "springs_square.toml", first) == 0
    assert _run("stability", "springs_square.toml", second) == 0

    name = "force_constants.tsv"
    assert (first / name).read_bytes() == (second / name).read_bytes()


def test_relax_at_a_critical_point(tmp_path: Path) -> None:
    assert _run("relax", "springs_square.toml", tmp_path, "solver.R_dom=8") == 0

    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest["result"]["relax"]["iterations"] == 0
    assert manifest["result"]["relax"]["converged"] is True
    assert (tmp_path / "ubar.tsv").exists()
    assert (tmp_path / "trace.tsv").exists()
    assert any("corrector decay fit skipped" in note for note in manifest["result"]["notes"])


def test_unconverged_relaxation_exits_with_numeric_code(tmp_path: Path) -> None:
    code = _run("relax", "vacancy_lj_triangular.toml", tmp_path, "solver.R_dom=10", "solver.max_iter=1")

    assert code == 3
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest["status"] == "failed"
    assert manifest["result"]["error"] == "NumericError"
    assert read_jsonl(tmp_path / "events.jsonl")[-1]["event"] == "run_failed"


def test_bad_override_exits_with_config_code(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert _run("stability", "springs_square.toml", tmp_path, "solver.R_dom=-1") == 2

    assert "solver.R_dom" in capsys.readouterr().err


def test_missing_config_exits_with_config_code(tmp_path: Path) -> None:
    assert main(["stability", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2


def test_predictor_command_needs_a_dislocation(tmp_path: Path) -> None:
    assert _run("predictor", "springs_square.toml", tmp_path) == 2

    assert load_manifest(tmp_path / "manifest.json")["status"] == "failed"


def test_predictor_command_checks_the_burgers_circuit(tmp_path: Path) -> None:
    assert _run("predictor", "screw_lj_columnar.toml", tmp_path, "solver.R_dom=16") == 0

    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest["result"]["probes"]["burgers_circuit"]["passed"] is True
    assert (tmp_path / "predictor.tsv").exists()

    header, body = read_table(tmp_path / "strain.tsv")
    assert header[:4] == ["l1", "l2", "x1", "x2"]
    assert "e_rho6_3" in header and "e_rho7_1" not in header
    assert len(manifest["decisions"]["strain_offsets"]) == 6
    in_plane = [header.index(f"e_rho{k}_{c}") for k in range(1, 7) for c in (1, 2)]
    antiplane = [header.index(f"e_rho{k}_3") for k in range(1, 7)]
    assert np.all(body[:, in_plane] == 0.0)
    assert 0.0 < np.max(np.abs(body[:, antiplane])) < np.inf


def test_green_command(tmp_path: Path) -> None:
    code = _run(
        "green",
        "springs_square.toml",
        tmp_path,
        "analysis.green_radius=16",
        "analysis.rmin=2",
        "analysis.rmax=12",
    )

    assert code == 0
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest["result"]["green"]["residual"] <= 1e-6
    assert manifest["result"]["details"]["log_growth_slope"] < 0.0
    assert (tmp_path / "green.tsv").exists()


def test_locality_command_writes_the_homogeneity_profile(tmp_path: Path) -> None:
    assert _run("probe", "vacancy_lj_triangular.toml", tmp_path, "solver.R_dom=10") == 0

    manifest = load_manifest(tmp_path / "manifest.json")
    header, body = read_table(tmp_path / "homogeneity.tsv")
    assert header == ["radius", "discrepancy", "scaled", "matched"]
    assert len(body) > 0
    assert np.all(body[:, 0] > 0.0)
    # pair partials only see their own bond
    assert manifest["result"]["details"]["homogeneity"]["max_discrepancy"] <= 1e-12
    assert any("homogeneity decay fit skipped" in note for note in manifest["result"]["notes"])


def test_locality_command_skips_the_homogeneity_profile_without_a_point_defect(tmp_path: Path) -> None:
    assert _run("probe", "springs_square.toml", tmp_path, "solver.R_dom=8") == 0

    manifest = load_manifest(tmp_path / "manifest.json")
    assert not (tmp_path / "homogeneity.tsv").exists()
    assert any("homogeneity profile skipped" in note for note in manifest["result"]["notes"])
