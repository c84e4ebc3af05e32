import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make helpers importable

import tlp
from tlp.phantom import PhantomSpec, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_gen_config():
    """Smallest config that still exercises fusion and both resample paths."""
    return tlp.GeneratorConfig(
        base_channels=4,
        levels=2,
        blocks_per_level=[1, 1, 1],
        heads_per_level=[1, 2, 2],
        decoder_blocks_per_level=[1, 1],
    )


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """12 phantom cases at 32x32 with an 8/1/3 split."""
    root = tmp_path_factory.mktemp("tiny-data")
    spec = PhantomSpec(resolution=32, seed=77)
    generate_dataset(spec, 12, str(root), fractions=(0.67, 0.08, 0.25))
    return str(root)
