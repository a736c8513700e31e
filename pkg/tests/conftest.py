import numpy as np
import pytest

from coarsepoint.estimator import RfBudget
from coarsepoint.lens_array import ArrayShape, LensArrayConfig
from coarsepoint.optical_channel import AttenuationParams, FadingParams, LinkBudget, PointingParams
from coarsepoint.outage import Channel


@pytest.fixture
def arc17():
    return LensArrayConfig(17, 0.3, 0.019, 0.0107, 0.25, ArrayShape.ARC)


@pytest.fixture
def rf_default():
    return RfBudget(gain_ref=300.0, distance_ref=1000.0, noise_std=1.0)


def make_channel(distance=1000.0, visibility=3000.0, model="lognormal", theta=0.01, sigma_est=1e-3, jitter=3e-3,
                 radius=0.1, center_gain=None, budget=None):
    return Channel(
        AttenuationParams(distance, visibility=visibility),
        FadingParams(model),
        PointingParams(theta, distance, jitter, sigma_est, center_gain=center_gain,
                       receiver_radius=None if center_gain else radius),
        budget or LinkBudget(),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
