import numpy as np
import pytest

from naturamap.dataset import generate_dataset
from naturamap.model import ArchConfig
from naturamap.synth import SynthParams

# small geometry shared by the fast tests (full desk scale lives in acceptance)
TINY_PATCH = 16
TINY_CONTEXT = 64
TINY_LADDER = (4, 6, 8, 10)


def tiny_arch(**kw):
    base = dict(patch_size=TINY_PATCH, context_size=TINY_CONTEXT,
                channel_ladder=TINY_LADDER, geo_latent_channels=4)
    base.update(kw)
    return ArchConfig(**base)


def tiny_params(**kw):
    base = dict(patch_size=TINY_PATCH, context_size=TINY_CONTEXT, seed=0)
    base.update(kw)
    return SynthParams(**base)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_data")
    return generate_dataset(tiny_params(), 8, 4, 2, root)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
