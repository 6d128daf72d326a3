from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from defect_harness.errors import InputError
from defect_harness.logging.events import append_jsonl, read_jsonl
from defect_harness.reporting.manifest import RunManifest, load_manifest
from defect_harness.reporting.summarize import evaluate_checks, write_report_md
from defect_harness.reporting.tables import format_cell, read_table, write_columns, write_table


def _summary() -> dict:
    return {
        "command": "relax",
        "lattice": "triangular",
        "defect": "vacancy",
        "potential": "pair",
        "seed": 0,
        "seconds": 1.5,
        "stability": {"stable": True, "c_min": 0.4},
        "relax": {"energy": -0.25, "grad_norm": 5e-9, "tol": 1e-8},
        "fits": {
            "corrector": {
                "model": "power",
                "exponent": -2.1,
                "half_width": 0.05,
                "r2": 0.99,
                "n_shells": 9,
                "expected": -2.0,
                "tolerance": 0.3,
            }
        },
        "details": {"energy": -0.25, "iterations": 40},
        "notes": ["boundary layer reached"],
    }


def test_format_cell() -> None:
    assert format_cell(True) == "1"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(np.float64(2.0)) == "2"
    assert format_cell("x") == "x"


def test_columns_expand_and_read_back(tmp_path: Path) -> None:
    path = tmp_path / "t.tsv"
    count = write_columns(path, {"r": np.array([1.0, 2.0]), "u": np.array([[0.5, -1.0], [1.5, 3.0]])})

    header, body = read_table(path)
    assert count == 2
    assert header == ["r", "u1", "u2"]
    np.testing.assert_array_equal(body, [[1.0, 0.5, -1.0], [2.0, 1.5, 3.0]])


def test_table_shape_errors(tmp_path: Path) -> None:
    with pytest.raises(InputError, match="cells"):
        write_table(tmp_path / "a.tsv", ["x", "y"], [[1, 2], [3]])
    with pytest.raises(InputError, match="different lengths"):
        write_columns(tmp_path / "b.tsv", {"x": np.zeros(2), "y": np.zeros(3)})


def test_manifest_round_trip_handles_numpy(tmp_path: Path) -> None:
    manifest = RunManifest(command="green", config={"seed": 0}, version="0.1.0", seed=0)
    manifest.decide("constant", np.eye(2))
    manifest.decide("kgrid", np.int64(512))
    manifest.write(tmp_path / "manifest.json")

    loaded = load_manifest(tmp_path / "manifest.json")
    assert loaded["decisions"]["constant"] == [[1.0, 0.0], [0.0, 1.0]]
    assert loaded["decisions"]["kgrid"] == 512
    assert loaded["status"] == "ok"


def test_events_are_appended_as_json_lines(tmp_path: Path) -> None:
    path = tmp_path / "events.jsonl"
    append_jsonl(path, {"event": "a", "value": np.float64(1.5)})
    append_jsonl(path, {"event": "b", "ts": "fixed"})

    rows = read_jsonl(path)
    assert [r["event"] for r in rows] == ["a", "b"]
    assert rows[0]["value"] == 1.5 and "ts" in rows[0]
    assert rows[1]["ts"] == "fixed"
    assert read_jsonl(tmp_path / "missing.jsonl") == []


def test_evaluate_checks_passes_a_good_relaxation() -> None:
    result = evaluate_checks(_summary())

    names = [c["name"] for c in result["checks"]]
    assert names == ["lattice_stability", "gradient_norm", "energy_drop", "corrector_exponent"]
    assert result["passed"]


def test_evaluate_checks_flags_failures() -> None:
    summary = _summary()
    summary["stability"] = {"stable": False, "c_min": -0.1}
    summary["fits"]["corrector"]["exponent"] = -1.0
    summary["green"] = {"residual": 1e-3}
    summary["probes"] = {"burgers_circuit": {"passed": False, "actual": 0.5, "threshold": "<= 1e-10"}}

    result = evaluate_checks(summary)
    failed = {c["name"] for c in result["checks"] if not c["passed"]}
    assert failed == {"lattice_stability", "corrector_exponent", "green_residual", "burgers_circuit"}
    assert not result["passed"]


def test_fits_without_expectation_are_not_checked() -> None:
    summary = {"fits": {"residual": {"exponent": -3.0}}}

    assert evaluate_checks(summary) == {"passed": True, "checks": []}


def test_write_report_md(tmp_path: Path) -> None:
    out = tmp_path / "nested" / "report.md"
    result = write_report_md(_summary(), out)

    text = out.read_text(encoding="utf-8")
    assert result["passed"]
    assert text.startswith("# Run Report: relax")
    for section in ("## Results", "## Decay Fits", "## Checks", "## Notes"):
        assert section in text
    assert "| corrector | power | -2.1000 |" in text
    assert "- boundary layer reached" in text
    assert json.dumps(40) in text
