from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

DEFAULT_THRESHOLDS = {
    "decay_tolerance": 0.3,
    "green_residual_max": 1e-6,
    "energy_noise": 1e-10,
}


def evaluate_checks(summary: dict, thresholds: dict[str, float] | None = None) -> dict:
    """Pass/fail checks for whichever result sections `summary` carries."""
    limits = dict(DEFAULT_THRESHOLDS)
    if thresholds:
        limits.update(thresholds)
    checks: list[dict] = []

    stability = summary.get("stability")
    if isinstance(stability, dict):
        checks.append(
            {
                "name": "lattice_stability",
                "passed": bool(stability["stable"]),
                "actual": stability["c_min"],
                "threshold": "> 0",
            }
        )

    relax = summary.get("relax")
    if isinstance(relax, dict):
        tol = relax.get("tol", math.inf)
        checks.append(
            {
                "name": "gradient_norm",
                "passed": relax["grad_norm"] <= tol,
                "actual": relax["grad_norm"],
                "threshold": f"<= {tol:.1e}",
            }
        )
        checks.append(
            {
                "name": "energy_drop",
                "passed": relax["energy"] <= limits["energy_noise"],
                "actual": relax["energy"],
                "threshold": "<= 0",
            }
        )

    green = summary.get("green")
    if isinstance(green, dict) and "residual" in green:
        checks.append(
            {
                "name": "green_residual",
                "passed": green["residual"] <= limits["green_residual_max"],
                "actual": green["residual"],
                "threshold": f"<= {limits['green_residual_max']:.1e}",
            }
        )

    for name, fit in sorted(summary.get("fits", {}).items()):
        expected = fit.get("expected")
        if expected is None:
            continue
        tolerance = fit.get("tolerance", limits["decay_tolerance"])
        checks.append(
            {
                "name": f"{name}_exponent",
                "passed": abs(fit["exponent"] - expected) <= tolerance,
                "actual": fit["exponent"],
                "threshold": f"{expected:g} ± {tolerance:g}",
            }
        )

    convergence = summary.get("convergence")
    if isinstance(convergence, dict):
        checks.append(
            {
                "name": "cell_convergence_monotone",
                "passed": bool(convergence["monotone"]),
                "actual": convergence["differences"][-2] if len(convergence["differences"]) > 1 else 0.0,
                "threshold": "decreasing",
            }
        )

    for name, probe in sorted(summary.get("probes", {}).items()):
        if "passed" in probe:
            checks.append(
                {
                    "name": name,
                    "passed": bool(probe["passed"]),
                    "actual": probe.get("actual", ""),
                    "threshold": probe.get("threshold", ""),
                }
            )

    return {"passed": all(check["passed"] for check in checks), "checks": checks}


def write_report_md(summary: dict, out_path: str | Path, thresholds: dict | None = None) -> dict:
    check_summary = evaluate_checks(summary, thresholds=thresholds)
    lines = [
        f"# Run Report: {summary.get('command', 'unknown')}",
        "",
        f"- Lattice: {summary.get('lattice', 'unknown')}",
        f"- Defect: {summary.get('defect', 'unknown')}",
        f"- Potential: {summary.get('potential', 'unknown')}",
        f"- Seed: {summary.get('seed', 'n/a')}",
        f"- Wall clock: {_fmt_num(summary.get('seconds'))} s",
        "",
    ]

    details = summary.get("details", {})
    if details:
        lines.extend(["## Results", "", "| Quantity | Value |", "| --- | ---: |"])
        for key in sorted(details):
            lines.append(f"| {key} | {_render_value(details[key])} |")
        lines.append("")

    fits = summary.get("fits", {})
    if fits:
        lines.extend(
            [
                "## Decay Fits",
                "",
                "| Field | Model | Exponent | Half-width | R² | Shells |",
                "| --- | --- | ---: | ---: | ---: | ---: |",
            ]
        )
        for name in sorted(fits):
            fit = fits[name]
            lines.append(
                f"| {name} | {fit.get('model', '')} | {_fmt_num(fit.get('exponent'), 4)} | "
                f"{_fmt_num(fit.get('half_width'), 4)} | {_fmt_num(fit.get('r2'), 4)} | {fit.get('n_shells', '')} |"
            )
        lines.append("")

    lines.extend(
        [
            "## Checks",
            "",
            f"- status: {'PASS' if check_summary['passed'] else 'FAIL'}",
            "",
            "| Check | Status | Actual | Threshold |",
            "| --- | --- | ---: | --- |",
        ]
    )
    if not check_summary["checks"]:
        lines.append("| none | - | - | - |")
    for check in check_summary["checks"]:
        status = "pass" if check["passed"] else "fail"
        actual_value = check["actual"]
        if isinstance(actual_value, float):
            actual_text = f"{actual_value:.6g}"
        else:
            actual_text = str(actual_value)
        lines.append(f"| {check['name']} | {status} | {actual_text} | {check['threshold']} |")

    notes = summary.get("notes", [])
    lines.extend(["", "## Notes", ""])
    if not notes:
        lines.append("- None")
    else:
        lines.extend(f"- {note}" for note in notes)
    lines.append("")

    report_path = Path(out_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text("\n".join(lines), encoding="utf-8")
    return check_summary


def _render_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return json.dumps(value, ensure_ascii=False)


def _fmt_num(value: float | None, digits: int = 2) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{digits}f}"
