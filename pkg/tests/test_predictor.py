from __future__ import annotations

import math

import numpy as np
import pytest

from defect_harness.errors import BranchError, ConfigError, InputError
from defect_harness.geometry import ReferenceConfig, columnar, generate_sites, square
from defect_harness.predictor import (
    CutFunction,
    DislocationPredictor,
    PointDefectPredictor,
    antiplane_cle,
    branch_log,
    build_dislocation,
    burgers_circuit,
    check_predictor_admissible,
    cle_eval,
    default_core,
    elastic_strain,
    predictor_decay_fit,
    predictor_eval,
    rectangular_loop,
    slip_stencil,
    slip_values,
)


def _screw(b3: float = 1.0) -> DislocationPredictor:
    return build_dislocation(columnar(np.eye(2), period=1.0), [0.0, 0.0, b3])


def test_branch_log_argument_range() -> None:
    args = branch_log(np.array([1.0, 1j, -1.0, -1j, 1.0 - 1e-12j])).imag

    np.testing.assert_allclose(args[:4], [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi])
    assert 2.0 * math.pi - 1e-9 < args[4] < 2.0 * math.pi


def test_default_core_is_off_the_lattice_rows() -> None:
    np.testing.assert_allclose(default_core(square()), [0.75, 0.75])


def test_antiplane_field_follows_the_angle() -> None:
    pred = _screw()
    core = pred.core
    u = predictor_eval(pred, np.array([core + [0.0, 1.0], core + [-1.0, 0.0]]))

    np.testing.assert_allclose(u[:, :2], 0.0)
    np.testing.assert_allclose(u[:, 2], [0.25, 0.5])


def test_antiplane_jump_across_the_cut_is_b3() -> None:
    pred = _screw(b3=1.0)
    below, above = predictor_eval(pred, np.array([pred.core + [3.0, -1e-6], pred.core + [3.0, 1e-6]]))

    assert below[2] - above[2] == pytest.approx(1.0, abs=1e-6)


def test_cle_eval_rejects_points_on_the_cut() -> None:
    cle = antiplane_cle(np.array([0.0, 0.0, 1.0]), np.array([0.5, 0.5]))

    with pytest.raises(BranchError):
        cle_eval(cle, np.array([2.0, 0.5]))


def test_counterclockwise_circuit_recovers_burgers_vector() -> None:
    pred = _screw(b3=1.0)
    total = burgers_circuit(pred, rectangular_loop(pred, half_width=6))

    np.testing.assert_allclose(total, [0.0, 0.0, 1.0], atol=1e-10)


def test_loop_half_width_must_be_positive() -> None:
    with pytest.raises(InputError):
        rectangular_loop(_screw(), half_width=0)


def test_burgers_vector_must_be_a_column_translation() -> None:
    with pytest.raises(ConfigError, match="column translation"):
        build_dislocation(columnar(np.eye(2), period=1.0), [0.0, 0.0, 0.5])


def test_antiplane_cle_refuses_edge_components() -> None:
    with pytest.raises(ConfigError, match="b1 = 0"):
        build_dislocation(columnar(np.eye(2), period=1.0), [1.0, 0.0, 0.0])


def test_core_on_a_lattice_row_is_rejected() -> None:
    with pytest.raises(BranchError):
        build_dislocation(columnar(np.eye(2), period=1.0), [0.0, 0.0, 1.0], core=[0.5, 0.0])


def test_cut_function_profile() -> None:
    eta = CutFunction(0.5)
    values, slopes = eta(np.array([0.0, 0.5, 0.75, 1.0, 2.0]))

    np.testing.assert_allclose(values, [0.0, 0.0, 0.5, 1.0, 1.0])
    assert slopes[2] > 0.0
    assert slopes[0] == 0.0 and slopes[-1] == 0.0


def test_xi_inverse_round_trip_with_slip() -> None:
    lattice = columnar(np.eye(2), period=1.0)
    core = default_core(lattice)
    pred = DislocationPredictor(
        lattice=lattice,
        burgers=np.array([1.0, 0.0, 0.0]),
        core=core,
        r_hat=8.0,
        cle=antiplane_cle(np.zeros(3), core),
    )
    rng = np.random.default_rng(7)
    radius = rng.uniform(0.5, 12.0, size=200)
    angle = rng.uniform(0.01, 2.0 * math.pi - 0.01, size=200)
    z = core + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])

    assert pred.check_bijective() > 0.0
    np.testing.assert_allclose(pred.xi(pred.xi_inverse(z)), z, atol=1e-10)


def test_slip_s0_removes_burgers_vector_below_the_cut() -> None:
    pred = _screw(b3=1.0)
    field = lambda x: np.tile([0.0, 0.0, 1.0], (len(x), 1))
    points = np.array([pred.core + [0.0, 1.0], pred.core + [0.0, -1.0]])

    np.testing.assert_allclose(slip_values(pred, "S0", field, points)[:, 2], [1.0, 0.0])
    with pytest.raises(InputError, match="Unknown slip operator"):
        slip_values(pred, "T", field, points)


def test_screw_predictor_is_admissible() -> None:
    pred = _screw()
    domain = generate_sites(ReferenceConfig.homogeneous(pred.lattice), 8.0)

    assert check_predictor_admissible(pred, domain).admissible


def test_point_defect_predictor_is_zero() -> None:
    pred = PointDefectPredictor(3)

    np.testing.assert_array_equal(pred.displacement(np.ones((4, 2))), np.zeros((4, 3)))
    with pytest.raises(InputError):
        predictor_decay_fit(pred)


def test_screw_predictor_strain_decays_like_one_over_r() -> None:
    fit = predictor_decay_fit(_screw(), rmin=8.0, rmax=64.0)

    assert -1.2 < fit.exponent < -0.9


def test_slip_and_adjoint_slip_invert_each_other() -> None:
    lattice = columnar(np.eye(2), period=1.0)
    core = default_core(lattice)
    pred = DislocationPredictor(
        lattice=lattice,
        burgers=np.array([1.0, 0.0, 0.0]),
        core=core,
        r_hat=8.0,
        cle=antiplane_cle(np.zeros(3), core),
    )
    field = lambda x: np.column_stack([np.sin(x[:, 0]), np.cos(x[:, 1]), x[:, 0] * x[:, 1]])
    points = np.random.default_rng(4).uniform(-10.0, 10.0, size=(50, 2))
    shifted = lambda x: slip_values(pred, "S", field, x)

    np.testing.assert_allclose(slip_values(pred, "S*", shifted, points), field(points), atol=1e-12)


def test_elastic_strain_is_continuous_across_the_cut() -> None:
    pred = _screw(b3=1.0)
    x1 = np.floor(pred.core[0] + pred.r_hat) + 6.0
    ell = np.array([[x1, np.floor(pred.core[1])]])
    rho = np.array([0.0, 1.0])

    jump = predictor_eval(pred, ell + rho)[0] - predictor_eval(pred, ell)[0]
    strain = elastic_strain(pred, ell, rho)[0]
    assert abs(jump[2]) > 0.9
    assert abs(strain[2]) < 0.05


def test_slip_stencil_adds_the_elastic_strain() -> None:
    pred = _screw(b3=1.0)
    offsets = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
    ell = np.floor(pred.core) + np.array([3.0, 4.0])
    zero = lambda x: np.zeros((len(x), 3))

    vec = slip_stencil(pred, ell, offsets)
    np.testing.assert_allclose(vec[:, :2], offsets[:, :2], atol=1e-12)
    for a, rho in enumerate(offsets):
        np.testing.assert_allclose(vec[a], offsets[a] + elastic_strain(pred, ell, rho[:2])[0], atol=1e-12)
    np.testing.assert_allclose(slip_stencil(pred, ell, offsets, zero), vec, atol=1e-12)
