from __future__ import annotations

import numpy as np
import pytest

from defect_harness.errors import ConfigError, EvaluationError, InputError
from defect_harness.geometry import ReferenceConfig, square, triangular
from defect_harness.potentials import (
    CutoffPolicy,
    EAMPotential,
    HomogeneousStencil,
    PairForm,
    PairPotential,
    SpringPotential,
    TightBindingPotential,
    equilibrium_scale,
    get_potential,
    homogeneity_check,
    homogeneity_profile,
    lattice_offsets,
    locality_probe,
    pair_phi,
    point_symmetry_check,
    resolve_cutoff,
    second_partials,
    site_energy,
    site_gradient,
)


def _fd_gradient(potential, vec: np.ndarray, ref: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.zeros_like(vec)
    for b in range(vec.shape[0]):
        for beta in range(vec.shape[1]):
            plus = vec.copy()
            minus = vec.copy()
            plus[b, beta] += h
            minus[b, beta] -= h
            out[b, beta] = (potential.local_energy(plus, ref) - potential.local_energy(minus, ref)) / (2.0 * h)
    return out


def _perturbed_stencil(lattice, radius: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    ref = lattice_offsets(lattice, radius)
    rng = np.random.default_rng(seed)
    return ref + 0.03 * rng.uniform(-1.0, 1.0, size=ref.shape), ref


def test_lj_classic_minimum() -> None:
    _, d1, d2 = pair_phi(PairForm.lj_classic(), 2.0 ** (1.0 / 6.0))

    assert abs(float(d1)) < 1e-12
    assert float(d2) > 0.0


def test_pair_distance_must_be_positive() -> None:
    with pytest.raises(EvaluationError):
        pair_phi(PairForm.lj_classic(), np.array([1.0, 0.0]))


def test_generalized_lj_requires_p_above_q() -> None:
    with pytest.raises(ConfigError, match="p > q"):
        PairForm.lj(p=6.0, q=12.0, C1=1.0, C2=1.0)


@pytest.mark.parametrize(
    "potential",
    [
        PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5)),
        PairPotential(form=PairForm.morse(a=1.5), cutoff=CutoffPolicy(radius=2.5)),
        EAMPotential(cutoff=CutoffPolicy(radius=2.5)),
        SpringPotential(kappa=1.3, stencil_radius=1.5),
    ],
)
def test_local_gradient_matches_finite_differences(potential) -> None:
    vec, ref = _perturbed_stencil(triangular(), potential.r_cut * 0.99)

    np.testing.assert_allclose(
        potential.local_gradient(vec, ref), _fd_gradient(potential, vec, ref), rtol=1e-5, atol=1e-7
    )


def test_tight_binding_gradient_matches_finite_differences() -> None:
    potential = TightBindingPotential(r_c=1.6, window=2.0, kT=0.2)
    vec, ref = _perturbed_stencil(square(), 2.0)

    np.testing.assert_allclose(
        potential.local_gradient(vec, ref), _fd_gradient(potential, vec, ref, h=1e-5), rtol=1e-4, atol=1e-7
    )


def test_spring_hessian_is_half_kappa_identity() -> None:
    potential = SpringPotential(kappa=2.0)
    stencil = HomogeneousStencil.build(potential, square())
    hess = stencil.hessian()

    assert len(stencil) == 4
    for a in range(4):
        np.testing.assert_allclose(hess[a, a], np.eye(2))
    assert stencil.energy() == 0.0


def test_pair_hessian_matches_gradient_differences() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5))
    vec, ref = _perturbed_stencil(triangular(), 2.4)
    hess = potential.local_hessian(vec, ref)
    h = 1e-6
    plus = vec.copy()
    minus = vec.copy()
    plus[0, 1] += h
    minus[0, 1] -= h
    column = (potential.local_gradient(plus, ref) - potential.local_gradient(minus, ref)) / (2.0 * h)

    np.testing.assert_allclose(hess[:, 0, :, 1], column, rtol=1e-5, atol=1e-6)


def test_site_gradient_sums_to_zero() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5))
    y = triangular().positions(np.array([[i, j] for i in range(-3, 4) for j in range(-3, 4)]))
    y = y + 0.02 * np.random.default_rng(1).normal(size=y.shape)
    center = 24
    grad = site_gradient(potential, y, center)

    np.testing.assert_allclose(np.sum(list(grad.values()), axis=0), 0.0, atol=1e-12)


def test_point_symmetry_of_pair_and_eam() -> None:
    for potential in (
        PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=3.0)),
        EAMPotential(cutoff=CutoffPolicy(radius=3.0)),
    ):
        assert point_symmetry_check(potential, triangular(), samples=5) <= 1e-10


def test_equilibrium_scale_of_triangular_lj() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=3.0))
    scale = equilibrium_scale(potential, triangular())

    assert 1.0 < scale < 2.0 ** (1.0 / 6.0)
    stencil = HomogeneousStencil.build(potential, triangular().scaled(scale))
    assert stencil.energy() < 0.0


def test_adaptive_cutoff_grows_radius() -> None:
    policy = CutoffPolicy(mode="adaptive", radius=2.0, tol=1e-6, max_radius=30.0)
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=policy)
    resolved, report = resolve_cutoff(potential, triangular())

    assert report.mode == "adaptive"
    assert report.converged
    assert resolved.r_cut == pytest.approx(report.radius)
    assert resolved.r_cut > 2.0
    assert resolved.cutoff.mode == "hard"


def test_hard_cutoff_is_left_alone() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5))
    resolved, report = resolve_cutoff(potential, triangular())

    assert resolved is potential
    assert report.radius == 2.5


def test_lj_locality_decays_algebraically() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=10.0))
    first, second = locality_probe(potential, square(), rmin=2.0, rmax=9.0)

    assert first.order == 1 and second.order == 2
    assert first.fit is not None
    assert first.fit.exponent < -6.0
    assert first.zero_beyond_cutoff


def test_get_potential_builds_each_kind() -> None:
    assert isinstance(get_potential("pair", form="morse", a=2.0), PairPotential)
    assert isinstance(get_potential("eam", q=7.0, cutoff={"radius": 4.0}), EAMPotential)
    assert isinstance(get_potential("tb", r_c=2.0), TightBindingPotential)
    assert isinstance(get_potential("springs", kappa=-1.0), SpringPotential)


def test_get_potential_rejects_unknown_kind_and_parameters() -> None:
    with pytest.raises(ConfigError, match="Unknown potential"):
        get_potential("buckingham")
    with pytest.raises(ConfigError, match="bad parameters"):
        get_potential("springs", stiffness=1.0)


@pytest.mark.slow
def test_tight_binding_locality_decays_exponentially() -> None:
    potential = TightBindingPotential(r_c=1.6, window=8.0, kT=0.5)
    (report,) = locality_probe(potential, square(), orders=(1,), rmin=2.0, rmax=7.5)

    assert report.fit is not None
    assert report.fit.model == "exponential"
    assert report.fit.exponent < 0.0


def _triangular_patch(seed: int = 1) -> tuple[np.ndarray, np.ndarray]:
    x = triangular().positions(np.array([[i, j] for i in range(-3, 4) for j in range(-3, 4)]))
    return x + 0.02 * np.random.default_rng(seed).normal(size=x.shape), x


def test_site_energy_is_invariant_under_isometries() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5))
    y, _ = _triangular_patch()
    t = 0.7
    rotation = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    moved = y @ rotation.T + np.array([3.0, -1.5])

    assert site_energy(potential, moved, 24) == pytest.approx(site_energy(potential, y, 24), abs=1e-10)


def test_second_partials_are_exchange_symmetric() -> None:
    potential = EAMPotential(cutoff=CutoffPolicy(radius=2.5))
    y, x = _triangular_patch()
    rho = np.array([1.0, 0.0])
    sigma = np.array([0.5, np.sqrt(3.0) / 2.0])

    ab = second_partials(potential, y, 24, rho, sigma, reference=x)
    ba = second_partials(potential, y, 24, sigma, rho, reference=x)
    assert ab.shape == (2, 2)
    np.testing.assert_allclose(ab, ba.T, atol=1e-10)
    with pytest.raises(InputError, match="interaction window"):
        second_partials(potential, y, 24, rho, np.array([0.3, 0.3]), reference=x)


def _vacancy_at_distance_two() -> tuple[np.ndarray, np.ndarray]:
    _, x = _triangular_patch()
    # site (2, 0) sits at index 38, outside B_1.5 of the centre but inside the cutoff
    return x, np.delete(x, 38, axis=0)


def test_homogeneity_check_sees_a_missing_neighbour_through_eam_density() -> None:
    potential = EAMPotential(cutoff=CutoffPolicy(radius=2.5))
    x, x_vac = _vacancy_at_distance_two()

    same = homogeneity_check(potential, x, x, 24, x, x, 24, 1.5)
    assert same.discrepancy == 0.0
    assert same.matched > 6

    report = homogeneity_check(potential, x_vac, x_vac, 24, x, x, 24, 1.5)
    assert report.discrepancy > 0.0
    assert report.scaled_discrepancy >= report.discrepancy
    assert report.matched == same.matched - 1
    with pytest.raises(InputError, match="differ"):
        homogeneity_check(potential, x_vac, x_vac, 24, x, x, 24, 2.5)


def test_pair_partials_ignore_a_missing_neighbour() -> None:
    potential = PairPotential(form=PairForm.lj_classic(), cutoff=CutoffPolicy(radius=2.5))
    x, x_vac = _vacancy_at_distance_two()

    report = homogeneity_check(potential, x_vac, x_vac, 24, x, x, 24, 1.5)
    assert report.discrepancy <= 1e-14
    assert report.matched > 6


def test_eam_homogeneity_profile_vanishes_beyond_the_cutoff() -> None:
    potential = EAMPotential(cutoff=CutoffPolicy(radius=2.5))
    config = ReferenceConfig.with_vacancies(triangular(), [[0, 0]])
    profile = homogeneity_profile(potential, config, 8.0)

    assert len(profile.radii) > 0
    assert np.all(profile.radii >= 1.0 - 1e-12)
    near = profile.radii < 2.5 - 1e-9
    assert np.max(profile.discrepancy[near]) > 0.0
    # the embedding argument only sees sites inside the cutoff
    assert np.max(profile.discrepancy[profile.radii > 2.5 + 1e-9]) <= 1e-14
    assert profile.summary()["sites"] == len(profile.radii)


def test_homogeneity_profile_needs_a_defect() -> None:
    potential = EAMPotential(cutoff=CutoffPolicy(radius=2.5))

    with pytest.raises(InputError, match="does not differ"):
        homogeneity_profile(potential, ReferenceConfig.homogeneous(triangular()), 6.0)
