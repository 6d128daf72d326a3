from __future__ import annotations

import math

import numpy as np
import pytest

from defect_harness.errors import ConfigError, InputError
from defect_harness.geometry import ReferenceConfig, generate_sites, square, triangular
from defect_harness.stencil import (
    Displacement,
    WeightFunction,
    finite_difference,
    nn_norm,
    norm_equivalence_report,
)


def test_weight_norms_in_closed_form() -> None:
    assert WeightFunction.algebraic(k=1, d=2, eps=1.0).norm() == pytest.approx(4.0 / 3.0)
    assert WeightFunction.exponential(1.0, k=1, d=2).norm() == pytest.approx(3.0)


def test_non_summable_weight_is_rejected() -> None:
    with pytest.raises(ConfigError, match="not summable"):
        WeightFunction.algebraic(k=1, d=2, eps=0.0)


def test_tail_bound_dominates_lattice_sum() -> None:
    w = WeightFunction.algebraic(k=1, d=2, eps=1.0)
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 60.0)
    r = domain.distances_from_origin()
    partial = float(np.sum(w(r[r > 5.0])))

    assert w.tail_sum_bound(5.0, 1.0, 2) >= partial


def test_displacement_is_clamped_outside_the_free_ball() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 6.0)
    u = Displacement.from_function(domain, lambda x: np.ones((len(x), 2)))

    assert u.clamp_radius == pytest.approx(4.0)
    outside = ~u.free_mask()
    assert outside.any()
    np.testing.assert_array_equal(u.values[outside], 0.0)
    np.testing.assert_array_equal(u.value_at([[100.0, 0.0]]), [[0.0, 0.0]])


def test_displacement_rejects_non_finite_values() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 3.0)
    values = np.zeros((len(domain), 2))
    values[0, 0] = math.nan

    with pytest.raises(InputError, match="finite"):
        Displacement(domain=domain, values=values)


def test_finite_difference_of_affine_field() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 6.0)
    u = Displacement.from_function(domain, lambda x: 0.1 * x)

    np.testing.assert_allclose(finite_difference(u, [0.0, 0.0], [1.0, 0.0]), [0.1, 0.0])


def test_nn_norm_of_affine_field_on_triangular_lattice() -> None:
    config = ReferenceConfig.homogeneous(triangular())
    domain = generate_sites(config, 6.0)
    u = Displacement.from_function(domain, lambda x: x)
    result = nn_norm(u, config)

    origin = domain.index_of((0, 0))
    assert result.per_site[origin] == pytest.approx(math.sqrt(6.0))
    assert result.global_value > 0.0


def test_nn_norm_of_zero_field_vanishes() -> None:
    config = ReferenceConfig.homogeneous(triangular())
    u = Displacement.zeros(generate_sites(config, 5.0))

    assert nn_norm(u, config).global_value == 0.0


def test_norm_equivalence_on_random_fields() -> None:
    config = ReferenceConfig.homogeneous(triangular())
    domain = generate_sites(config, 5.0)
    rng = np.random.default_rng(3)
    sample = [Displacement(domain=domain, values=rng.normal(size=(len(domain), 2))) for _ in range(2)]
    w = WeightFunction.exponential(2.0, k=1, d=2)

    report = norm_equivalence_report(sample, w, 1, config, tail_radius=4.0)

    assert report.bounded, report.notes
    assert report.upper_ratios.min() >= report.c0
