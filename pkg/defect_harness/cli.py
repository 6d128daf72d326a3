from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from defect_harness import __version__
from defect_harness.analysis.convergence import cell_convergence, corrector_decay_fit, corrector_norms
from defect_harness.analysis.decay import decay_fit, decay_fit_models
from defect_harness.config import ResolvedSetup, RunConfig, build_predictor, load_config, resolve
from defect_harness.errors import ConfigError, HarnessError, InputError, NumericError
from defect_harness.geometry.lattice import generate_sites
from defect_harness.homogeneous.force_constants import force_constants_for
from defect_harness.homogeneous.green import green_decay_fit, green_differences, green_function, green_log_growth
from defect_harness.homogeneous.symbol import stability_scan
from defect_harness.logging.events import append_jsonl
from defect_harness.potentials.probes import homogeneity_profile, locality_probe, point_symmetry_check
from defect_harness.potentials.tight_binding import TightBindingPotential
from defect_harness.predictor.dislocation import DislocationPredictor, Predictor, predictor_decay_fit, predictor_differences
from defect_harness.predictor.slip import burgers_circuit, elastic_strain, rectangular_loop
from defect_harness.relax.minimize import minimize
from defect_harness.relax.model import build_model, energy_diff, free_gradient, residual_force, stability_diagnostic
from defect_harness.reporting.manifest import RunManifest
from defect_harness.reporting.summarize import write_report_md
from defect_harness.reporting.tables import write_columns
from defect_harness.stencil.norms import nn_norm
from defect_harness.utils.parallel import set_threads
from defect_harness.utils.time import timed

COMMANDS = ("relax", "residual", "stability", "green", "decay-fit", "converge", "probe", "predictor")

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class Run:
    """One CLI job: its config, output directory, manifest and report summary."""

    command: str
    cfg: RunConfig
    out: Path
    manifest: RunManifest
    summary: dict = field(default_factory=dict)
    _setup: ResolvedSetup | None = None
    _predictor: Predictor | None = None

    @property
    def events_path(self) -> Path:
        return self.out / "events.jsonl"

    def event(self, name: str, **payload) -> None:
        append_jsonl(self.events_path, {"event": name, "command": self.command, **payload})

    def stage(self, name: str, **payload) -> None:
        self.event("stage_completed", stage=name, **payload)

    def setup(self) -> ResolvedSetup:
        if self._setup is None:
            self._setup = resolve(self.cfg)
            self.manifest.decisions.update(self._setup.decisions)
            self.summary.setdefault("lattice", self.cfg.lattice.kind)
            self.summary.setdefault("defect", self.cfg.defect.kind)
            self.summary.setdefault("potential", self._setup.potential.name)
            self.stage("setup", r_cut=self._setup.potential.r_cut, scale=self._setup.scale)
        return self._setup

    def predictor(self) -> Predictor:
        if self._predictor is None:
            self._predictor = build_predictor(self.cfg, self.setup())
            self.manifest.decide("predictor", self._predictor.summary())
        return self._predictor

    def table(self, name: str, columns: dict[str, np.ndarray]) -> Path:
        path = self.out / name
        write_columns(path, columns)
        self.manifest.artifacts.append(name)
        return path

    def fit(self, name: str, fit, expected: float | None = None, tolerance: float | None = None) -> None:
        entry = fit.summary()
        if expected is not None:
            entry["expected"] = expected
            entry["tolerance"] = self.cfg.analysis.exponent_tolerance if tolerance is None else tolerance
        self.summary.setdefault("fits", {})[name] = entry
        self.table(
            f"fit_{name}.tsv",
            {"radius": fit.radii, "envelope": fit.envelope, "mean": fit.mean, "count": fit.counts},
        )

    def note(self, text: str) -> None:
        self.summary.setdefault("notes", []).append(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defect_harness", description="Crystalline defect equilibration harness")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "relax": "Relax a defect on a clamped ball and fit the corrector decay",
        "residual": "Residual forces of the predictor (u = 0) and their decay",
        "stability": "Lattice stability scan of the homogeneous force constants",
        "green": "Lattice Green's function, residual and decay",
        "decay-fit": "Decay fit of one field (analysis.fit_field) under both power models",
        "converge": "Cell-size convergence of the relaxed corrector over analysis.radii",
        "probe": "Potential probes: locality, homogeneity, point symmetry, gradient consistency",
        "predictor": "Dislocation predictor and elastic strain tables, Burgers circuit and decay",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=helps[name])
        sub.add_argument("--config", required=True, help="Path to a TOML run config")
        sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key")
        sub.add_argument("--out", default=None, help="Output directory (default: output.dir)")
        sub.add_argument("--threads", type=int, default=1, help="Worker threads")
        sub.add_argument("--seed", type=int, default=None, help="RNG seed for random test displacements")
        sub.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    set_threads(args.threads)

    run: Run | None = None
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out) if args.out else cfg.output.dir
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(command=args.command, config=cfg.raw, version=__version__, seed=cfg.seed)
        run = Run(command=args.command, cfg=cfg, out=out, manifest=manifest, summary={"command": args.command, "seed": cfg.seed})
        run.events_path.unlink(missing_ok=True)
        run.event("run_started", config=str(args.config), overrides=list(args.set))
        with timed() as watch:
            HANDLERS[args.command](run)
    except HarnessError as exc:
        print(f"error: {exc.module}: {exc}", file=sys.stderr)
        if run is not None:
            run.event("run_failed", error=type(exc).__name__, module=exc.module, message=str(exc))
            run.manifest.status = "failed"
            run.manifest.result = {"error": type(exc).__name__, "module": exc.module, "message": str(exc), **run.summary}
            run.manifest.write(run.out / "manifest.json")
        return exc.exit_code

    run.summary["seconds"] = watch.seconds
    run.manifest.seconds = watch.seconds
    run.manifest.result = run.summary
    checks = write_report_md(run.summary, run.out / "report.md")
    run.manifest.artifacts.append("report.md")
    run.manifest.write(run.out / "manifest.json")
    run.event("run_finished", seconds=watch.seconds, checks_passed=checks["passed"])
    _print_summary(run, checks)
    return 0


def _print_summary(run: Run, checks: dict) -> None:
    rows = [(c["name"], "pass" if c["passed"] else "fail", _fmt(c["actual"]), str(c["threshold"])) for c in checks["checks"]]
    try:
        from rich.console import Console
        from rich.table import Table
    except ImportError:
        print(f"Completed {run.command}. Output: {run.out}")
        for name, status, actual, threshold in rows:
            print(f"- {name}: {status} (actual={actual}, threshold {threshold})")
        return
    table = Table(title=f"{run.command}: {run.out}")
    for column in ("Check", "Status", "Actual", "Threshold"):
        table.add_column(column)
    for row in rows:
        table.add_row(*row)
    Console().print(table)


def _fmt(value) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def _model(run: Run):
    setup = run.setup()
    predictor = run.predictor()
    solver = run.cfg.solver
    model = build_model(
        setup.reference,
        setup.potential,
        predictor,
        R_dom=solver.R_dom,
        buffer=solver.buffer,
        skin=solver.skin,
    )
    run.manifest.decide("model", model.summary())
    run.stage("model", **model.summary())
    return model


def _stability(run: Run):
    setup = run.setup()
    fc = force_constants_for(setup.potential, setup.lattice)
    report = stability_scan(fc, run.cfg.analysis.grid_n)
    run.summary["stability"] = report.summary()
    run.manifest.decide("force_constants", fc.summary())
    run.stage("stability", c_min=report.c_min, stable=report.stable)
    if not report.stable:
        run.note(f"host lattice is unstable: c_min = {report.c_min:.6g}")
    return fc, report


def _fit_or_note(run: Run, name: str, compute: Callable, expected: float | None = None):
    try:
        fit = compute()
    except InputError as exc:
        run.note(f"{name} decay fit skipped: {exc}")
        return None
    run.fit(name, fit, expected)
    return fit


def _site_columns(model) -> dict[str, np.ndarray]:
    domain = model.domain
    return {
        "index": np.arange(len(domain)),
        "on_lattice": domain.on_lattice,
        "l": domain.coords,
        "x": domain.positions,
    }


def cmd_relax(run: Run) -> None:
    cfg = run.cfg
    _stability(run)
    model = _model(run)
    options = cfg.solver.options()
    run.manifest.decide("solver", options.to_dict())
    every = cfg.output.event_every

    def on_step(row: dict) -> None:
        if row["iteration"] % every == 0:
            run.event("optimizer_step", **row)

    result = minimize(model, options, callback=on_step)
    run.stage("relax", **result.summary())
    du = nn_norm(result.u, model.config).per_site
    run.table("ubar.tsv", {**_site_columns(model), "free": model.free, "u": result.u.values, "du_norm": du})
    run.table(
        "trace.tsv",
        {
            "iteration": np.array([r["iteration"] for r in result.trace]),
            "energy": result.energies,
            "grad_norm": np.array([r["grad_norm"] for r in result.trace]),
            "step": np.array([r["step"] for r in result.trace]),
        },
    )
    run.summary["relax"] = {**result.summary(), "tol": options.tol}
    run.summary["details"] = {"energy": result.energy, "iterations": result.iterations, "n_free": model.n_free}
    if cfg.analysis.rayleigh_samples > 0:
        worst = stability_diagnostic(model, result.u, cfg.analysis.rayleigh_samples, cfg.seed)
        run.summary["details"]["min_rayleigh_quotient"] = worst
    _fit_or_note(
        run,
        "corrector",
        lambda: corrector_decay_fit(model, result, cfg.analysis.rmin, cfg.analysis.rmax, cfg.analysis.decay_model),
        cfg.analysis.expected_exponent,
    )
    if not result.converged:
        raise NumericError(
            f"relaxation stopped after {result.iterations} iterations with |g| = {result.grad_norm:.3e} > tol {options.tol:.1e}",
            module="relax",
        )


def _residual_field(run: Run):
    model = _model(run)
    forces = residual_force(model)
    norms = np.linalg.norm(forces, axis=1)
    return model, forces, norms


def cmd_residual(run: Run) -> None:
    model, forces, norms = _residual_field(run)
    run.table("residual.tsv", {**_site_columns(model), "f": forces, "f_norm": norms})
    free = model.free
    radii = np.linalg.norm(model.domain.positions, axis=1)
    hi = run.cfg.analysis.rmax or 0.5 * model.R_dom
    run.summary["details"] = {"max_force": float(norms[free].max()) if np.any(free) else 0.0}
    _fit_or_note(
        run,
        "residual",
        lambda: decay_fit(norms[free], radii[free], run.cfg.analysis.rmin, hi, run.cfg.analysis.decay_model),
        run.cfg.analysis.expected_exponent,
    )


def cmd_stability(run: Run) -> None:
    fc, report = _stability(run)
    run.table("force_constants.tsv", {"rho": fc.coords, "h": fc.h.reshape(len(fc), -1)})
    run.summary["details"] = {"c_min": report.c_min, "c_max": report.c_max, "grid_n": report.grid_n}


def _green(run: Run):
    setup = run.setup()
    a = run.cfg.analysis
    fc = force_constants_for(setup.potential, setup.lattice)
    table = green_function(fc, a.green_radius, a.green_kgrid, tol=a.green_tol, max_grid=a.green_max_grid)
    residual = table.residual()
    run.summary["green"] = {**table.summary(), "residual": residual}
    run.manifest.decide("green", table.summary())
    run.stage("green", kgrid=table.kgrid, residual=residual)
    return table


def cmd_green(run: Run) -> None:
    table = _green(run)
    a = run.cfg.analysis
    run.table("green.tsv", {"l": table.coords, "x": table.positions, "gamma": table.values.reshape(len(table), -1)})
    details = {"kgrid": table.kgrid, "constant_trace": float(np.trace(table.constant))}
    if table.fc.d == 2:
        growth = green_log_growth(table)
        details["log_growth_slope"] = growth.slope
    run.summary["details"] = details
    order = max(a.order, 1) if table.fc.d == 2 else a.order
    _fit_or_note(run, f"green_order{order}", lambda: green_decay_fit(table, a.rmin, a.rmax, order=order), a.expected_exponent)


def cmd_decay_fit(run: Run) -> None:
    a = run.cfg.analysis
    if a.fit_field == "corrector":
        model = _model(run)
        result = minimize(model, run.cfg.solver.options())
        values, radii = corrector_norms(model, result)
        hi = a.rmax or model.R_free - model.potential.r_cut
    elif a.fit_field == "residual":
        model, _, norms = _residual_field(run)
        values, radii = norms[model.free], np.linalg.norm(model.domain.positions[model.free], axis=1)
        hi = a.rmax or 0.5 * model.R_dom
    elif a.fit_field == "green":
        table = _green(run)
        values, radii = green_differences(table, order=max(a.order, 1))
        hi = a.rmax or table.radius - 2.0 * table.fc.lattice.max_vector_length
    else:
        predictor = _dislocation(run)
        order = max(a.order, 1)
        rho = predictor.lattice.A[:, 0]
        points = generate_sites(run.setup().reference, run.cfg.solver.R_dom).positions
        left = points[:, 0] + order * max(rho[0], 0.0) < predictor.core[0]
        values = predictor_differences(predictor, points[left], rho, order)
        radii = np.linalg.norm(points[left] - predictor.core, axis=1)
        hi = a.rmax or 0.5 * run.cfg.solver.R_dom
    models = ("power", "power_log") if a.decay_model != "exponential" else ("exponential",)
    try:
        fits = decay_fit_models(values, radii, a.rmin, hi, models)
    except InputError as exc:
        raise InputError(f"{a.fit_field} decay fit failed: {exc}", module="analysis") from exc
    for name, fit in fits.items():
        run.fit(f"{a.fit_field}_{name}", fit, a.expected_exponent if name == a.decay_model else None)


def cmd_converge(run: Run) -> None:
    cfg = run.cfg
    if not cfg.analysis.radii:
        raise ConfigError("analysis.radii: converge needs at least two radii")
    setup = run.setup()
    predictor = run.predictor()
    table = cell_convergence(
        setup.reference,
        setup.potential,
        cfg.analysis.radii,
        predictor=predictor,
        options=cfg.solver.options(),
    )
    rows = table.rows
    run.table(
        "convergence.tsv",
        {
            "R_dom": np.array([r.R_dom for r in rows]),
            "n_free": np.array([r.n_free for r in rows]),
            "energy": np.array([r.energy for r in rows]),
            "iterations": np.array([r.iterations for r in rows]),
            "grad_norm": np.array([r.grad_norm for r in rows]),
            "difference": np.array([r.difference for r in rows]),
        },
    )
    run.summary["convergence"] = table.summary()
    for note in table.notes:
        run.note(note)
    run.stage("converge", monotone=table.monotone)


def cmd_probe(run: Run) -> None:
    cfg = run.cfg
    setup = run.setup()
    potential, lattice = setup.potential, setup.lattice
    probes: dict[str, dict] = {}

    for report in locality_probe(potential, lattice):
        probes[f"locality_order{report.order}"] = {
            "passed": report.dominated and report.zero_beyond_cutoff,
            "actual": "dominated" if report.dominated else "not dominated",
            "threshold": "|V_ρ| ≤ C w(|ρ|)",
        }
        if report.fit is not None:
            run.fit(f"locality_order{report.order}", report.fit)
        run.table(f"locality_order{report.order}.tsv", {"radius": report.radii, "value": report.values})
        for flag in report.flags:
            run.note(f"locality order {report.order}: {flag}")

    asym = point_symmetry_check(potential, lattice, cfg.analysis.probe_samples, seed=cfg.seed)
    probes["point_symmetry"] = {"passed": asym <= 1e-10, "actual": asym, "threshold": "<= 1e-10"}

    try:
        profile = homogeneity_profile(potential, setup.reference, cfg.solver.R_dom)
    except InputError as exc:
        run.note(f"homogeneity profile skipped: {exc}")
    else:
        run.table(
            "homogeneity.tsv",
            {
                "radius": profile.radii,
                "discrepancy": profile.discrepancy,
                "scaled": profile.scaled,
                "matched": profile.matched,
            },
        )
        run.summary.setdefault("details", {})["homogeneity"] = profile.summary()
        a = cfg.analysis
        hi = a.rmax or (float(profile.radii.max()) if profile.radii.size else a.rmin)
        _fit_or_note(run, "homogeneity", lambda: decay_fit(profile.discrepancy, profile.radii, a.rmin, hi, a.decay_model))

    model = _model(run)
    rng = np.random.default_rng(cfg.seed)
    scale = 0.01 * lattice.atom_spacing()
    u = model.unpack(scale * rng.uniform(-1.0, 1.0, size=model.n_free * model.d_s))
    v = model.unpack(rng.uniform(-1.0, 1.0, size=model.n_free * model.d_s))
    h = 1e-6
    fd = (energy_diff(model, u + h * v) - energy_diff(model, u - h * v)) / (2.0 * h)
    analytic = float(np.sum(free_gradient(model, u) * v))
    rel = abs(fd - analytic) / max(abs(analytic), 1e-300)
    limit = 1e-4 if isinstance(potential, TightBindingPotential) else 1e-6
    probes["gradient_consistency"] = {"passed": rel <= limit, "actual": rel, "threshold": f"<= {limit:.0e}"}
    run.summary["probes"] = probes
    run.stage("probe", point_symmetry=asym, gradient_rel_err=rel)


def _dislocation(run: Run):
    predictor = run.predictor()
    if not isinstance(predictor, DislocationPredictor):
        raise ConfigError("defect.kind: the predictor subcommand needs a dislocation config")
    return predictor


def _nearest_offsets(lattice) -> np.ndarray:
    """In-plane nearest-neighbour offsets, counter-clockwise from the first lattice vector."""
    A = lattice.A[:2, :2]
    coords = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)])
    rho = coords @ A.T
    r = np.linalg.norm(rho, axis=1)
    rho = rho[r <= r.min() * (1.0 + 1e-9)]
    angle = np.mod(np.arctan2(rho[:, 1], rho[:, 0]) - np.arctan2(A[1, 0], A[0, 0]), 2.0 * np.pi)
    return rho[np.argsort(np.round(angle, 9))]


def cmd_predictor(run: Run) -> None:
    predictor = _dislocation(run)
    a = run.cfg.analysis
    domain = generate_sites(run.setup().reference, run.cfg.solver.R_dom)
    u0 = predictor.displacement(domain.positions)
    run.table("predictor.tsv", {"l": domain.coords, "x": domain.positions, "u0": u0})
    offsets = _nearest_offsets(predictor.lattice)
    strains = {f"e_rho{k + 1}_": elastic_strain(predictor, domain.positions, rho) for k, rho in enumerate(offsets)}
    run.table("strain.tsv", {"l": domain.coords, "x": domain.positions, **strains})
    run.manifest.decide("strain_offsets", offsets.tolist())
    loop = rectangular_loop(predictor, max(2, int(predictor.r_hat / predictor.lattice.max_vector_length) + 2))
    circuit = burgers_circuit(predictor, loop)
    error = float(np.max(np.abs(circuit - predictor.burgers)))
    run.summary["probes"] = {
        "burgers_circuit": {"passed": error <= 1e-10, "actual": error, "threshold": "<= 1e-10"},
    }
    run.summary["details"] = {"burgers": predictor.burgers.tolist(), "r_hat": predictor.r_hat}
    hi = a.rmax or 0.5 * run.cfg.solver.R_dom
    order = max(a.order, 1)
    _fit_or_note(run, f"predictor_order{order}", lambda: predictor_decay_fit(predictor, a.rmin, hi, order=order), a.expected_exponent)


HANDLERS: dict[str, Callable[[Run], None]] = {
    "relax": cmd_relax,
    "residual": cmd_residual,
    "stability": cmd_stability,
    "green": cmd_green,
    "decay-fit": cmd_decay_fit,
    "converge": cmd_converge,
    "probe": cmd_probe,
    "predictor": cmd_predictor,
}
