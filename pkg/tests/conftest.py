import numpy as np
import pytest

from app.diffusion.rng import NoiseStreams
from app.diffusion.schedules import make_linear_schedule
from app.denoisers.toy_attention import ToyAttentionDenoiser


@pytest.fixture
def schedule():
    """默认线性调度 T=1000。"""
    return make_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture
def short_schedule():
    return make_linear_schedule(100, 1e-4, 0.02)


@pytest.fixture
def streams():
    return NoiseStreams(seed=7)


@pytest.fixture
def toy_denoiser(short_schedule):
    return ToyAttentionDenoiser(
        seed=3,
        grid_h=4,
        grid_w=4,
        token_dim=8,
        num_tokens_max=6,
        schedule=short_schedule,
        channels=2,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
