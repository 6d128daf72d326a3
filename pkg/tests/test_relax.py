from __future__ import annotations

import math

import numpy as np
import pytest

from defect_harness.analysis import decay_fit
from defect_harness.errors import ConfigError, InputError
from defect_harness.geometry import ReferenceConfig, columnar, square, triangular
from defect_harness.potentials import (
    CutoffPolicy,
    PairForm,
    PairPotential,
    SpringPotential,
    equilibrium_scale,
    lattice_offsets,
    site_energy,
)
from defect_harness.predictor import build_dislocation, in_omega_gamma, slip_stencil
from defect_harness.relax import (
    SolverOptions,
    build_model,
    energy_diff,
    gradient,
    hessian_vector,
    minimize,
    residual_force,
    stability_diagnostic,
)


def _lj(radius: float = 2.0) -> PairPotential:
    return PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=radius))


def _vacancy_model(R_dom: float = 9.0):
    config = ReferenceConfig.with_vacancies(triangular().scaled(1.1), [[0, 0]])
    return build_model(config, _lj(), R_dom=R_dom)


def _springs_model(kappa: float = 1.0, R_dom: float = 6.0, f_ext: np.ndarray | None = None):
    config = ReferenceConfig.homogeneous(square())
    return build_model(config, SpringPotential(kappa=kappa), R_dom=R_dom, f_ext=f_ext)


def test_energy_vanishes_at_the_predictor() -> None:
    model = _vacancy_model()

    assert energy_diff(model, None) == 0.0
    assert model.buffer == pytest.approx(2.0 * (2.0 + 0.33))
    assert model.n_free < model.n_sites


def test_domain_must_exceed_core_plus_buffer() -> None:
    config = ReferenceConfig.with_vacancies(triangular(), [[0, 0]])

    with pytest.raises(ConfigError, match="must exceed R_def \\+ buffer"):
        build_model(config, _lj(), R_dom=4.0)


def test_displacement_shape_is_checked() -> None:
    with pytest.raises(InputError, match="shape"):
        energy_diff(_vacancy_model(), np.zeros((3, 2)))


def test_gradient_matches_finite_differences() -> None:
    model = _vacancy_model()
    rng = np.random.default_rng(2)
    u = np.zeros((model.n_sites, 2))
    u[model.free] = 0.01 * rng.standard_normal((model.n_free, 2))
    g = gradient(model, u)
    h = 1e-6
    for i in np.flatnonzero(model.free)[:: max(1, model.n_free // 8)]:
        for c in range(2):
            plus, minus = u.copy(), u.copy()
            plus[i, c] += h
            minus[i, c] -= h
            fd = (energy_diff(model, plus) - energy_diff(model, minus)) / (2.0 * h)
            assert g[i, c] == pytest.approx(fd, abs=1e-6)


def test_energy_is_translation_invariant() -> None:
    model = _vacancy_model()
    shift = np.tile([0.01, -0.02], (model.n_sites, 1))

    assert abs(energy_diff(model, shift)) < 1e-10


def test_homogeneous_lattice_is_a_critical_point() -> None:
    config = ReferenceConfig.homogeneous(triangular().scaled(1.1))
    model = build_model(config, _lj(), R_dom=9.0)

    assert np.max(np.abs(residual_force(model)[model.free])) < 1e-10
    result = minimize(model, SolverOptions(tol=1e-8))
    assert result.converged
    assert result.iterations == 0
    assert result.reason == "converged"


def test_vacancy_relaxation_lowers_the_energy_monotonically() -> None:
    model = _vacancy_model()
    rows = []
    result = minimize(model, SolverOptions(tol=1e-8), callback=rows.append)

    assert result.converged
    assert result.energy < 0.0
    assert result.grad_norm <= 1e-8
    assert len(rows) == result.iterations
    assert np.all(np.diff(result.energies) <= 1e-9)
    assert np.all(result.u.values[~model.free] == 0.0)


def test_cg_and_lbfgs_reach_the_same_energy() -> None:
    lbfgs = minimize(_vacancy_model(), SolverOptions(method="lbfgs", tol=1e-9))
    cg = minimize(_vacancy_model(), SolverOptions(method="cg", tol=1e-9, max_iter=2000))

    assert lbfgs.converged and cg.converged
    assert cg.energy == pytest.approx(lbfgs.energy, abs=1e-10)
    assert np.all(np.diff(cg.energies) <= 1e-9)


def test_cg_solves_the_harmonic_toy() -> None:
    f = np.zeros((_springs_model().n_sites, 2))
    f[_springs_model().domain.index_of((0, 0))] = [1.0, -0.5]
    model = _springs_model(f_ext=f)

    cg = minimize(model, SolverOptions(method="cg", tol=1e-10, max_iter=500))
    lbfgs = minimize(model, SolverOptions(tol=1e-10))
    assert cg.converged
    assert cg.reason == "converged"
    np.testing.assert_allclose(cg.u.values, lbfgs.u.values, atol=1e-8)


def test_max_iter_stops_without_convergence() -> None:
    result = minimize(_vacancy_model(), SolverOptions(max_iter=1))

    assert not result.converged
    assert result.reason == "max_iter"
    assert result.iterations == 1


def test_harmonic_toy_matches_dense_solve() -> None:
    model = _springs_model()
    f = np.zeros((model.n_sites, 2))
    origin = model.domain.index_of((0, 0))
    f[origin] = [1.0, 0.5]
    f[model.domain.index_of((1, 1))] = [-0.25, 0.0]
    model = _springs_model(f_ext=f)

    free = np.flatnonzero(model.free)
    n = 2 * len(free)
    H = np.zeros((n, n))
    for col in range(n):
        v = np.zeros((model.n_sites, 2))
        v[free[col // 2], col % 2] = 1.0
        H[:, col] = hessian_vector(model, None, v)[free].ravel()
    z = np.linalg.solve(H, f[free].ravel())

    result = minimize(model, SolverOptions(tol=1e-10))
    assert result.converged
    np.testing.assert_allclose(result.u.values[free].ravel(), z, atol=1e-7)
    assert result.energy == pytest.approx(-0.5 * float(f[free].ravel() @ z), rel=1e-8)


def test_rayleigh_quotient_sign_follows_spring_stiffness() -> None:
    assert stability_diagnostic(_springs_model(kappa=1.0), None, samples=3) > 0.0
    assert stability_diagnostic(_springs_model(kappa=-1.0), None, samples=3) < 0.0


def test_solver_options_are_validated() -> None:
    with pytest.raises(ConfigError, match="Unknown solver method"):
        SolverOptions(method="newton")
    with pytest.raises(ConfigError, match="Armijo"):
        SolverOptions(armijo=0.7)
    assert SolverOptions().to_dict()["method"] == "lbfgs"


def _screw_model(R_dom: float = 16.0):
    potential = _lj(2.5)
    lattice = columnar(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]), period=1.0)
    lattice = lattice.scaled(equilibrium_scale(potential, lattice))
    predictor = build_dislocation(lattice, [0.0, 0.0, lattice.column_period])
    return build_model(ReferenceConfig.homogeneous(lattice), potential, predictor, R_dom=R_dom)


def test_slip_form_energy_matches_positions() -> None:
    model = _screw_model()
    lattice, potential, predictor = model.domain.lattice, model.potential, model.predictor
    values = np.zeros((model.n_sites, model.d_s))
    values[model.free] = 0.01 * np.random.default_rng(5).standard_normal((model.n_free, model.d_s))
    u = model.displacement(model.pack(values))
    y = model.y0 + u.values
    offsets = lattice_offsets(lattice, potential.r_cut + 1.5)

    sites = np.flatnonzero(np.linalg.norm(model.domain.positions - predictor.core, axis=1) <= 5.0)
    omega = in_omega_gamma(predictor, model.domain.positions[sites])
    assert np.any(omega) and np.any(~omega)
    for ell in sites.tolist():
        by_positions = site_energy(potential, y, ell, model.x, lattice.period)
        vec = slip_stencil(predictor, model.domain.positions[ell], offsets, u)
        assert potential.local_energy(vec, offsets) == pytest.approx(by_positions, abs=1e-10)


@pytest.mark.slow
def test_screw_dislocation_relaxes() -> None:
    potential = _lj(2.5)
    lattice = columnar(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]), period=1.0)
    scale = equilibrium_scale(potential, lattice)
    lattice = lattice.scaled(scale)
    predictor = build_dislocation(lattice, [0.0, 0.0, scale])
    config = ReferenceConfig.homogeneous(lattice)
    model = build_model(config, potential, predictor, R_dom=16.0)

    result = minimize(model, SolverOptions(tol=1e-8, max_iter=5000))
    assert result.converged
    assert result.energy < 0.0


@pytest.mark.slow
def test_screw_residual_forces_decay() -> None:
    potential = _lj(2.5)
    lattice = columnar(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]), period=1.0)
    lattice = lattice.scaled(equilibrium_scale(potential, lattice))
    predictor = build_dislocation(lattice, [0.0, 0.0, lattice.column_period])
    model = build_model(ReferenceConfig.homogeneous(lattice), potential, predictor, R_dom=56.0)
    forces = np.linalg.norm(residual_force(model), axis=1)
    radii = np.linalg.norm(model.domain.positions - predictor.core, axis=1)

    fit = decay_fit(forces[model.free], radii[model.free], 8.0, 40.0)
    assert -3.6 < fit.exponent < -2.4
