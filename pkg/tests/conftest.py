import numpy as np
import pytest

from facemotion import synth


@pytest.fixture(scope="session")
def seed0_cfg():
    return synth.SynthConfig(seed=0, duration_frames=250)


@pytest.fixture(scope="session")
def seed0_model(seed0_cfg):
    return synth.make_model(seed0_cfg)


@pytest.fixture(scope="session")
def seed0_motion(seed0_cfg):
    return synth.make_motion(seed0_cfg)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(0))
