from __future__ import annotations

import math

import numpy as np
import pytest

from defect_harness.errors import InputError
from defect_harness.geometry import (
    BravaisLattice,
    DefectKind,
    ReferenceConfig,
    admissibility_check,
    columnar,
    generate_sites,
    homogeneous_offsets,
    lattice_path,
    neighbors,
    path_constant,
    square,
    triangular,
)


def test_square_ball_counts_and_order() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 2.0)

    assert len(domain) == 13
    assert domain.coords[0].tolist() == [-2, 0]
    assert domain.coords[-1].tolist() == [2, 0]
    assert domain.on_lattice.all()
    assert not domain.is_core.any()


def test_generate_sites_is_deterministic() -> None:
    config = ReferenceConfig.homogeneous(triangular())
    a = generate_sites(config, 5.5)
    b = generate_sites(config, 5.5)

    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.coords, b.coords)


def test_vacancy_removes_the_origin() -> None:
    config = ReferenceConfig.with_vacancies(square(), [[0, 0]])
    domain = generate_sites(config, 2.0)

    assert config.defect_kind is DefectKind.VACANCY
    assert config.R_def == pytest.approx(0.5)
    assert len(domain) == 12
    assert domain.index_of((0, 0)) is None
    assert domain.index_of((1, 0)) is not None


def test_interstitial_is_an_off_lattice_core_site() -> None:
    config = ReferenceConfig.with_interstitials(square(), [[0.5, 0.5]], R_def=1.0)
    domain = generate_sites(config, 3.0)

    assert len(domain) == 30
    assert domain.is_core.sum() == 6
    off = np.flatnonzero(~domain.on_lattice)
    assert len(off) == 1
    np.testing.assert_allclose(domain.positions[off[0]], [0.5, 0.5])
    assert domain.locate([[0.5, 0.5]])[0] == off[0]


def test_substitution_core_replaces_the_core_ball() -> None:
    core = [[0.2, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
    config = ReferenceConfig.with_substitutions(square(), core, R_def=1.0)
    domain = generate_sites(config, 3.0)

    assert config.defect_kind is DefectKind.SUBSTITUTION
    assert len(domain) == 29
    assert domain.is_core.sum() == 5
    off = np.flatnonzero(~domain.on_lattice)
    assert len(off) == 1
    np.testing.assert_allclose(domain.positions[off[0]], [0.2, 0.0])
    assert domain.index_of((0, 0)) is None
    with pytest.raises(InputError, match="at least one position"):
        ReferenceConfig.with_substitutions(square(), [], R_def=1.0)


def test_core_site_outside_core_ball_is_rejected() -> None:
    with pytest.raises(InputError, match="outside B_R_def"):
        ReferenceConfig(lattice=square(), core_sites=np.array([[2.0, 0.0]]), R_def=1.0)


def test_coinciding_core_sites_are_rejected() -> None:
    with pytest.raises(InputError, match="coincide"):
        ReferenceConfig(lattice=square(), core_sites=np.array([[0.5, 0.5], [0.5, 0.5]]), R_def=1.0)


def test_singular_lattice_is_rejected() -> None:
    with pytest.raises(InputError, match="nonsingular"):
        BravaisLattice(A=np.array([[1.0, 2.0], [2.0, 4.0]]), d_s=2)


def test_nonpositive_site_radius_is_rejected() -> None:
    with pytest.raises(InputError):
        generate_sites(ReferenceConfig.homogeneous(square()), 0.0)


def test_columnar_lattice_spacing_and_positions() -> None:
    lattice = columnar(np.eye(2), period=0.5, shift=[0.25, 0.0])

    assert lattice.columnar
    assert lattice.period == 0.5
    assert lattice.atom_spacing() == pytest.approx(0.5)
    x = lattice.reference_positions(np.array([[1, 0], [3, 0]]))
    np.testing.assert_allclose(x[:, 2], [0.25, 0.25])


def test_scaled_lattice() -> None:
    lattice = triangular().scaled(2.0)

    assert lattice.nn_distance == pytest.approx(2.0)
    assert lattice.cell_volume == pytest.approx(2.0 * math.sqrt(3.0))


def test_triangular_neighbour_offsets() -> None:
    offsets = homogeneous_offsets(triangular())
    lengths = np.linalg.norm(triangular().positions(offsets), axis=1)

    assert len(offsets) == 6
    np.testing.assert_allclose(lengths, 1.0)


def test_square_lattice_path_is_manhattan() -> None:
    path = lattice_path(ReferenceConfig.homogeneous(square()), [0.0, 0.0], [3.0, 4.0])

    assert path.length == 7
    assert path.ratio == pytest.approx(7.0 / 5.0)


def test_reference_configuration_is_admissible() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 6.0)
    report = admissibility_check(domain.reference_positions(), domain)

    assert report.admissible
    assert report.m_hat == pytest.approx(1.0)
    assert report.lambda_hat <= math.sqrt(0.5) + 1e-9


def test_collapsed_pair_is_not_admissible() -> None:
    domain = generate_sites(ReferenceConfig.homogeneous(square()), 4.0)
    y = domain.reference_positions()
    i, j = domain.index_of((0, 0)), domain.index_of((1, 0))
    y[j] = y[i]

    assert not admissibility_check(y, domain).admissible


def test_small_ball_counts() -> None:
    assert len(generate_sites(ReferenceConfig.homogeneous(square()), 1.5)) == 9
    assert len(generate_sites(ReferenceConfig.with_vacancies(square(), [[0, 0]]), 1.5)) == 8
    assert len(generate_sites(ReferenceConfig.homogeneous(triangular()), 1.01)) == 7


def test_triangular_neighbours_are_symmetric() -> None:
    config = ReferenceConfig.homogeneous(triangular())
    domain = generate_sites(config, 10.0)
    inner = [domain.index_of(c) for c in [(0, 0), (1, 0), (0, 1), (-1, 1)]]
    sets = {ell: set(neighbors(config, domain, ell).neighbors.tolist()) for ell in inner}

    assert all(len(s) == 6 for s in sets.values())
    for ell in inner:
        for m in inner:
            assert (m in sets[ell]) == (ell in sets[m])


def test_path_is_routed_around_a_vacancy() -> None:
    config = ReferenceConfig.with_vacancies(square(), [[1, 0]])
    path = lattice_path(config, [0.0, 0.0], [2.0, 0.0])

    assert path.length == 4
    assert not np.any(np.all(np.isclose(path.sites, [1.0, 0.0]), axis=1))


def test_path_to_itself_is_trivial() -> None:
    path = lattice_path(ReferenceConfig.homogeneous(triangular()), [1.0, 0.0], [1.0, 0.0])

    assert path.length == 0
    assert len(path.sites) == 1


def test_path_constant_is_finite_on_square_lattice() -> None:
    c = path_constant(ReferenceConfig.homogeneous(square()), samples=50, radius=6.0)

    assert 1.0 <= c <= math.sqrt(2.0) + 1e-12
