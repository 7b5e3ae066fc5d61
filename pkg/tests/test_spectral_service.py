import math

import numpy as np
import pytest

from mfmusic.exceptions import DimensionMismatch, RankDeficientWarning
from mfmusic.models import FrequencyGrid, NoiseSpec, Scatterer, ScattererEnsemble
from mfmusic.services.forward_service import RescaleVariant, get_forward_service
from mfmusic.services.spectral_service import RankStrategy, get_spectral_service
from mfmusic.tools import linalg
from tests.helpers import plane_geometry, random_configuration


def exact_hankels(ensemble, geometry, grid, variant=RescaleVariant.EXTENDED):
    forward = get_forward_service()
    spectral = get_spectral_service()
    tensor = forward.leading_order_farfield(ensemble, geometry, grid)
    rescaled = forward.rescale_data(tensor, grid, variant)
    return [spectral.assemble_hankel(row, grid.L, N=grid.N, direction_index=j, variant=variant).entries
            for j, row in enumerate(rescaled)]


def random_configurations(count=50, seed=17):
    rng = np.random.default_rng(seed)
    for index in range(count):
        dimension = 2 + index % 2
        N = (8, 16)[(index // 2) % 2]
        M = int(rng.integers(1, 4 if N == 8 else 5))
        yield random_configuration(rng, dimension, M, N)


def test_hankel_entries_follow_anti_diagonals():
    row = np.arange(1, 11) + 0.5j
    hankel = get_spectral_service().assemble_hankel(row, L=3, N=5)
    assert hankel.shape == (7, 4)
    for p in range(7):
        for q in range(4):
            assert hankel.entries[p, q] == row[p + q]


def test_hankel_rejects_wrong_length():
    with pytest.raises(DimensionMismatch):
        get_spectral_service().assemble_hankel(np.ones(9), L=3, N=5)
    with pytest.raises(DimensionMismatch):
        get_spectral_service().assemble_hankel(np.ones(4), L=3)


def test_factorization_reproduces_exact_hankel_matrices():
    spectral = get_spectral_service()
    for ensemble, geometry, grid in random_configurations():
        for j, hankel in enumerate(exact_hankels(ensemble, geometry, grid)):
            factorization = spectral.exact_factorization(ensemble, j, geometry, grid)
            error = np.linalg.norm(factorization.product() - hankel)
            assert error <= 1e-10 * np.linalg.norm(hankel)


def test_rank_equals_collapsed_model_order():
    spectral = get_spectral_service()
    for ensemble, geometry, grid in random_configurations():
        for j, hankel in enumerate(exact_hankels(ensemble, geometry, grid)):
            factorization = spectral.exact_factorization(ensemble, j, geometry, grid)
            _, sigma, _ = spectral.svd(hankel)
            assert np.count_nonzero(sigma > 1e-8 * sigma[0]) == factorization.M_j_prime


def test_real_only_factorization():
    rng = np.random.default_rng(5)
    spectral = get_spectral_service()
    ensemble, geometry, grid = random_configuration(rng, 2, 3, 8)
    real = ScattererEnsemble(scatterers=tuple(s.model_copy(update={"moment_q2": 0.0}) for s in ensemble.scatterers),
                             radius_R=1.0)
    hankels = exact_hankels(real, geometry, grid, RescaleVariant.REAL_ONLY)
    for j, hankel in enumerate(hankels):
        factorization = spectral.exact_factorization(real, j, geometry, grid, RescaleVariant.REAL_ONLY)
        assert factorization.M_j_prime == factorization.M_j == 3
        assert np.linalg.norm(factorization.product() - hankel) <= 1e-10 * np.linalg.norm(hankel)


def test_real_only_factorization_needs_vanishing_absorption():
    ensemble = ScattererEnsemble(scatterers=(Scatterer(position=(0.1, 0.2), moment_q1=1.0, moment_q2=0.5),),
                                 radius_R=1.0)
    grid = FrequencyGrid(k_min=math.pi / 2.0, N=8, L=4)
    with pytest.raises(ValueError):
        get_spectral_service().exact_factorization(ensemble, 0, plane_geometry(), grid, RescaleVariant.REAL_ONLY)


def aligned_pair(q1_second):
    """Two scatterers with equal projection on the first effective direction"""
    geometry = plane_geometry()
    e = geometry.effective_directions()[0]
    normal = np.array([-e[1], e[0]]) / np.linalg.norm(e)
    first = np.array([0.3, 0.1])
    second = first + 0.5 * normal
    ensemble = ScattererEnsemble(scatterers=(Scatterer(position=tuple(first), moment_q1=0.4),
                                             Scatterer(position=tuple(second), moment_q1=q1_second)),
                                 radius_R=1.0)
    return ensemble, geometry


def test_coinciding_projections_merge():
    ensemble, geometry = aligned_pair(0.6)
    spectral = get_spectral_service()
    merged = spectral.collapse_exponents(ensemble, geometry.effective_directions()[0])
    assert len(merged) == 1
    assert merged[0].q1 == pytest.approx(1.0)
    assert len(spectral.collapse_exponents(ensemble, geometry.effective_directions()[1])) == 2


def test_cancelled_moments_drop_out():
    ensemble, geometry = aligned_pair(-0.4)
    grid = FrequencyGrid(k_min=math.pi / 2.0, N=8, L=4)
    spectral = get_spectral_service()
    factorization = spectral.exact_factorization(ensemble, 0, geometry, grid)
    assert factorization.M_j == 0
    assert factorization.M_j_prime == 0
    hankel = exact_hankels(ensemble, geometry, grid)[0]
    assert np.linalg.norm(hankel) < 1e-12


def test_purely_absorbing_terms_are_not_confluent():
    ensemble = ScattererEnsemble(scatterers=(Scatterer(position=(0.1, 0.2), moment_q1=0.0, moment_q2=0.5),),
                                 radius_R=1.0)
    grid = FrequencyGrid(k_min=math.pi / 2.0, N=8, L=4)
    factorization = get_spectral_service().exact_factorization(ensemble, 0, plane_geometry(), grid)
    assert factorization.M_j == factorization.M_j_prime == 1


def test_gap_strategy_finds_the_jump():
    spectral = get_spectral_service()
    sigma = [10.0, 5.0, 2.0, 1e-6, 1e-7]
    assert spectral.essential_rank(sigma, RankStrategy.gap(1e-2)) == 3
    assert spectral.essential_rank([1.0, 0.9, 0.8], RankStrategy.gap(1e-2)) == 3


def test_threshold_and_fixed_strategies():
    spectral = get_spectral_service()
    sigma = [10.0, 5.0, 2.0, 1e-6, 1e-7]
    assert spectral.essential_rank(sigma, RankStrategy.threshold(0.15)) == 3
    assert spectral.essential_rank(sigma, RankStrategy.fixed(2)) == 2
    assert spectral.essential_rank(sigma, RankStrategy.fixed(9)) == 5
    assert spectral.essential_rank([0.0, 0.0], RankStrategy.gap()) == 0


def test_projector_is_an_orthogonal_projection():
    rng = np.random.default_rng(3)
    matrix = rng.standard_normal((9, 5)) + 1j * rng.standard_normal((9, 5))
    projector = get_spectral_service().projector_from(matrix, 3)
    P = projector.matrix()
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, P.conj().T, atol=1e-12)
    assert np.trace(P).real == pytest.approx(3.0)


def test_projector_beyond_rank_warns():
    ensemble = ScattererEnsemble(scatterers=(Scatterer(position=(0.1, 0.2), moment_q1=0.0, moment_q2=0.5),),
                                 radius_R=1.0)
    grid = FrequencyGrid(k_min=math.pi / 2.0, N=8, L=4)
    hankel = exact_hankels(ensemble, plane_geometry(), grid)[0]
    decomposition = get_spectral_service().decompose(hankel)
    decomposition.projector(1)
    with pytest.warns(RankDeficientWarning):
        decomposition.projector(3)
    with pytest.raises(ValueError):
        decomposition.projector(6)


def test_decompose_data_keeps_direction_order(plane_experiment):
    forward = get_forward_service()
    tensor = forward.leading_order_farfield(plane_experiment.ensemble, plane_experiment.geometry,
                                            plane_experiment.grid)
    rescaled = forward.rescale_data(tensor, plane_experiment.grid)
    decompositions = get_spectral_service().decompose_data(rescaled, plane_experiment.grid)
    assert [d.direction_index for d in decompositions] == list(range(5))
    assert decompositions[0].left.shape == (11, 6)


def test_weyl_bound_under_noise(example_experiment):
    forward = get_forward_service()
    spectral = get_spectral_service()
    grid = example_experiment.grid
    clean = forward.leading_order_farfield(example_experiment.ensemble, example_experiment.geometry, grid)
    noisy = forward.add_noise(clean, NoiseSpec(level=0.1, seed=9))
    exact = forward.rescale_data(clean, grid)
    perturbed = forward.rescale_data(noisy, grid)
    for j in range(exact.shape[0]):
        H = spectral.assemble_hankel(exact[j], grid.L, N=grid.N).entries
        F = spectral.assemble_hankel(perturbed[j], grid.L, N=grid.N).entries
        bound = np.linalg.norm(F - H, 2)
        _, sigma_h, _ = spectral.svd(H)
        _, sigma_f, _ = spectral.svd(F)
        assert np.all(np.abs(sigma_f - sigma_h) <= bound * (1 + 1e-12) + 1e-12)


def test_svd_rejects_non_finite_input():
    with pytest.raises(ValueError):
        linalg.svd(np.array([[1.0, np.inf]]))
