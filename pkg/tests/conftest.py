import numpy as np
import pytest

from artifactqc.encoder import EncoderConfig
from artifactqc.volio import SliceImage, Volume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest sensible encoder: fast enough for per-test training passes."""
    return EncoderConfig(
        input_size=(16, 16),
        dense_blocks=1,
        layers_per_block=2,
        growth_rate=4,
        negatives=4,
        grad_accum_queries=1,
    )


def random_volume(rng, dims=(6, 5, 4)):
    return Volume(
        voxels=rng.random(dims, dtype=np.float32),
        spacing=tuple(rng.uniform(0.5, 2.0, 3)),
    )


def random_image(rng, shape=(16, 16)):
    return SliceImage(pixels=rng.random(shape, dtype=np.float32))
