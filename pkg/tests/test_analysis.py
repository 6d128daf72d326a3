from __future__ import annotations

import numpy as np
import pytest

from defect_harness.analysis import decay_fit, decay_fit_models, shell_envelope
from defect_harness.analysis.convergence import cell_convergence, corrector_decay_fit
from defect_harness.errors import InputError
from defect_harness.geometry import ReferenceConfig, generate_sites, square, triangular
from defect_harness.potentials import CutoffPolicy, PairForm, PairPotential
from defect_harness.relax import SolverOptions, build_model, minimize


def _radii(R: float = 64.0) -> np.ndarray:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), R)
    return domain.distances_from_origin()


def _vacancy():
    config = ReferenceConfig.with_vacancies(triangular().scaled(1.1), [[0, 0]])
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.0))
    return config, potential


def test_power_law_exponent_is_recovered() -> None:
    r = _radii()
    fit = decay_fit((1.0 + r) ** -2.0, r, rmin=4.0, rmax=60.0)

    assert fit.exponent == pytest.approx(-2.0, abs=1e-10)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.n_shells >= 6
    assert not fit.warnings


def test_power_log_and_exponential_models() -> None:
    r = _radii()
    fits = decay_fit_models(np.log(2.0 + r) / (1.0 + r), r, 4.0, 60.0)
    expo = decay_fit(np.exp(-0.5 * r), r, 2.0, 30.0, "exponential")

    assert fits["power_log"].exponent == pytest.approx(-1.0, abs=1e-10)
    assert fits["power"].exponent > -1.0
    assert expo.rate == pytest.approx(0.5, abs=1e-10)


def test_shell_envelope_takes_the_maximum() -> None:
    r = _radii(20.0)
    values = np.where(r > 0, 1.0 / np.maximum(r, 1.0), 0.0)
    shells = shell_envelope(values, r, rmin=4.0, rmax=16.0, ratio=2.0)

    assert len(shells.radii) == 2
    np.testing.assert_allclose(shells.envelope, 1.0 / shells.radii)
    assert np.all(shells.envelope >= shells.mean)


def test_few_shells_produce_a_warning() -> None:
    r = _radii(20.0)
    fit = decay_fit(1.0 / (1.0 + r), r, rmin=4.0, rmax=8.0)

    assert any("shells" in w for w in fit.warnings)


def test_decay_fit_input_errors() -> None:
    r = _radii(20.0)
    with pytest.raises(InputError, match="Unknown decay model"):
        decay_fit(r, r, 4.0, 16.0, "stretched")
    with pytest.raises(InputError, match="at least two shells"):
        decay_fit(np.zeros_like(r), r, 4.0, 16.0)
    with pytest.raises(InputError, match="radii"):
        decay_fit(r[:-1], r, 4.0, 16.0)
    with pytest.raises(InputError, match="bad shell range"):
        decay_fit(r, r, 16.0, 4.0)


def test_empty_shell_is_reported() -> None:
    radii = np.array([1.0, 2.0, 10.0])

    with pytest.raises(InputError, match="empty shell"):
        shell_envelope(np.ones(3), radii, rmin=1.0, rmax=10.0)


def test_cell_convergence_validates_radii() -> None:
    config, potential = _vacancy()

    with pytest.raises(InputError, match="at least two"):
        cell_convergence(config, potential, [16.0])
    with pytest.raises(InputError, match="ascending"):
        cell_convergence(config, potential, [16.0, 12.0])


def test_cell_convergence_reference_row_is_zero() -> None:
    config, potential = _vacancy()
    table = cell_convergence(config, potential, [8.0, 10.0], options=SolverOptions(tol=1e-9))

    assert [row.R_dom for row in table.rows] == [8.0, 10.0]
    assert table.reference_radius == 10.0
    assert table.rows[-1].difference == 0.0
    assert table.rows[0].difference > 0.0
    assert table.summary()["monotone"] is table.monotone


@pytest.mark.slow
def test_vacancy_corrector_decays() -> None:
    config, potential = _vacancy()
    model = build_model(config, potential, R_dom=16.0)
    result = minimize(model, SolverOptions(tol=1e-9))
    fit = corrector_decay_fit(model, result, rmin=2.0)

    assert result.converged
    assert fit.exponent < 0.0
