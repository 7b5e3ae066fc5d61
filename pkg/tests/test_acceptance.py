"""End-to-end localization of the three-ellipsoid benchmark in three dimensions."""
import math

import numpy as np
import pytest

from mfmusic.models import AcquisitionMode
from mfmusic.presets import example_config, example_positions
from mfmusic.services.experiment_service import get_experiment_service
from mfmusic.services.forward_service import get_forward_service
from mfmusic.services.imaging_service import Functional, get_imaging_service
from mfmusic.services.pipeline_service import ReconstructOptions, get_pipeline_service
from mfmusic.services.spectral_service import get_spectral_service

pytestmark = pytest.mark.slow

TOLERANCE = 0.5


def assert_localized(peaks, tolerance=TOLERANCE):
    truth = example_positions()
    assert peaks.count == len(truth)
    for z in truth:
        distances = np.linalg.norm(peaks.positions() - z, axis=1)
        assert distances.min() <= tolerance, f"no peak near {tuple(z)}"


def noisy_run(mode=AcquisitionMode.FIXED_INCIDENCE):
    pipeline = get_pipeline_service()
    experiment = get_experiment_service().build_experiment(example_config(mode=mode))
    return pipeline, experiment, pipeline.simulate(experiment)


@pytest.fixture(scope="module")
def fixed_run():
    return noisy_run()


def test_range_dichotomy_on_exact_data():
    experiment = get_experiment_service().build_experiment(example_config(noise_level=0.0))
    forward, spectral, imaging = get_forward_service(), get_spectral_service(), get_imaging_service()
    geometry, grid, ensemble = experiment.geometry, experiment.grid, experiment.ensemble
    tensor = forward.leading_order_farfield(ensemble, geometry, grid)
    decompositions = spectral.decompose_data(forward.rescale_data(tensor, grid), grid)
    e = geometry.effective_directions()
    truth = ensemble.positions
    rng = np.random.default_rng(41)

    for j, decomposition in enumerate(decompositions):
        rank = spectral.exact_factorization(ensemble, j, geometry, grid).M_j_prime
        projector = decomposition.projector(rank)
        for z in truth:
            phi = imaging.test_vector(z, e[j], grid.k_min, projector.length)
            assert imaging.residual(projector, phi) <= 1e-8 * np.linalg.norm(phi)

        checked = 0
        while checked < 100:
            z = rng.uniform(-5.0, 5.0, 3)
            phases = grid.k_min * (truth - z) @ e[j]
            if min(abs(math.remainder(p, 2.0 * math.pi)) for p in phases) <= 0.5:
                continue
            phi = imaging.test_vector(z, e[j], grid.k_min, projector.length)
            assert imaging.residual(projector, phi) > 1e-3 * np.linalg.norm(phi)
            checked += 1


def test_exact_data_peaks(example_experiment):
    pipeline = get_pipeline_service()
    tensor = pipeline.simulate(example_experiment)
    result = pipeline.reconstruct(example_experiment, tensor, ReconstructOptions(mtilde=6, threshold=1e-4))
    assert_localized(result.peaks, tolerance=0.25)


def test_i1_on_noisy_data(fixed_run):
    pipeline, experiment, tensor = fixed_run
    assert tensor.noise_mode == "entrywise"
    result = pipeline.reconstruct(experiment, tensor, ReconstructOptions(mtilde=6))
    assert result.field.values.shape == (41, 41, 41)
    assert_localized(result.peaks)


def test_i2_on_noisy_data(fixed_run):
    pipeline, experiment, tensor = fixed_run
    result = pipeline.reconstruct(experiment, tensor,
                                  ReconstructOptions(functional=Functional.I2, M=3, mtilde=6))
    assert result.field.m_used == 3
    assert_localized(result.peaks)


def test_backscattering_on_noisy_data():
    pipeline, experiment, tensor = noisy_run(AcquisitionMode.BACKSCATTERING)
    assert_localized(pipeline.reconstruct(experiment, tensor, ReconstructOptions(mtilde=6)).peaks)


def test_model_order_estimate(fixed_run):
    pipeline, experiment, tensor = fixed_run
    result = pipeline.reconstruct(experiment, tensor, ReconstructOptions(mtilde="auto"))
    assert result.estimate.m_estimate == 3
    assert result.estimate.stationary
    assert result.estimate.l_tilde <= 8
    assert_localized(result.peaks)


def test_pipeline_is_deterministic(tmp_path):
    pipeline = get_pipeline_service()
    config = tmp_path / "example.json"
    config.write_text(example_config(grid_points=21).model_dump_json(), encoding="utf-8")
    outputs = [pipeline.cmd_pipeline(config, tmp_path / name, reconstruct_options=ReconstructOptions(mtilde=6))
               for name in ("a", "b")]
    assert outputs[0]["peaks"] == outputs[1]["peaks"]
    for name in ("farfield.csv", "indicator_i1.vtk", "peaks.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
