import json

import pytest

from mfmusic.models import ExperimentConfig
from mfmusic.presets import example_config
from mfmusic.services.experiment_service import get_experiment_service
from tests.helpers import plane_config_dict


@pytest.fixture
def plane_config():
    return ExperimentConfig.model_validate(plane_config_dict())


@pytest.fixture
def plane_experiment(plane_config):
    return get_experiment_service().build_experiment(plane_config)


@pytest.fixture
def plane_config_file(tmp_path):
    def write(name="plane.json", **overrides):
        path = tmp_path / name
        path.write_text(json.dumps(plane_config_dict(**overrides)), encoding="utf-8")
        return path
    return write


@pytest.fixture
def example_experiment():
    return get_experiment_service().build_experiment(example_config(noise_level=0.0))
