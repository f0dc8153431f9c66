"""Shared fixtures: tiny configs and domains that train in well under a second per epoch."""
import logging

import pytest

from config.experiment import ExperimentConfig, format_config
from core.trainer import prepare_domains
from utils.seeding import make_rng


@pytest.fixture(autouse=True)
def quiet_logging():
    logging.getLogger().setLevel(logging.WARNING)
    yield


@pytest.fixture
def rng():
    return make_rng(0)


@pytest.fixture
def small_cfg(tmp_path):
    return ExperimentConfig(
        generator='gaussians',
        angles=[0.0, 30.0, 60.0, 90.0],
        n_per_domain=40,
        noise_sd=0.1,
        feature_hidden=[6],
        feature_dim=4,
        invariant_hidden=[4],
        invariant_dim=3,
        specific_hidden=[4],
        specific_dim=3,
        mine_hidden=[6],
        policy_hidden=[6],
        epochs=2,
        batch_size=16,
        adapt_steps=20,
        n_projections=8,
        distance_rows=16,
        output_dir=str(tmp_path / 'run'),
        progress=False,
    )


@pytest.fixture
def small_domains(small_cfg):
    return prepare_domains(small_cfg)


@pytest.fixture
def write_config(tmp_path):
    """Write a config to an INI file and return its path."""
    def _write(cfg_or_text, name='experiment.ini'):
        text = cfg_or_text if isinstance(cfg_or_text, str) else format_config(cfg_or_text)
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write
