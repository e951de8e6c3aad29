from pathlib import Path

import numpy as np
import pytest

from sa_reid.dataset import ToySpec
from sa_reid.model import ModelConfig, StageConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_model_config():
    """Two stages on an 8x8 input: one deep-supervision branch on a 4x4 map, a 4x4 final map."""
    return ModelConfig(
        stages=(StageConfig(out_channels=4), StageConfig(out_channels=6, downsample=False)),
        input_shape=(3, 8, 8),
        num_classes=3,
        m=2,
        reduced_dim=4,
        lam=0.3,
        seed=7,
    )


@pytest.fixture
def small_toy_spec():
    return ToySpec(
        num_identities=6,
        images_per_identity_per_camera=2,
        image_height=16,
        image_width=8,
        noise_std=0.0,
        seed=3,
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a key-value configuration file and return its path."""

    def _write_config(text: str, file_name: str = "run.cfg") -> Path:
        file_path = tmp_path / file_name
        file_path.write_text(text)
        return file_path

    return _write_config
