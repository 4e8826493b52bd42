import numpy as np
import pytest

from parec import (
    AcquisitionParams,
    ArrayGeometry,
    ForwardConfig,
    GridSpec,
    RawFrame,
    forward,
    identity_impulse_response,
)


@pytest.fixture
def small_geometry():
    return ArrayGeometry(element_count=16, pitch=0.2e-3, sound_speed=1540.0)


@pytest.fixture
def small_acquisition():
    return AcquisitionParams(sample_count=256, sampling_rate=31.25e6, sound_speed=1540.0)


@pytest.fixture
def small_grid():
    return GridSpec((32, 16), 0.1e-3, 0.2e-3)


@pytest.fixture
def point_frame(small_geometry, small_acquisition, small_grid):
    """Noise-free point-source frame plus the source pixel location."""
    img = np.zeros(small_grid.shape)
    iz, ix = 16, 8
    img[iz, ix] = 1.0
    frame = forward(
        small_grid.image(img),
        small_geometry,
        small_acquisition,
        identity_impulse_response(small_acquisition.sampling_rate),
        ForwardConfig(use_derivative=False, use_directivity=False, noise_std=0.0),
    )
    return frame, (iz, ix)


def random_frame(geometry, acquisition, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((acquisition.sample_count, geometry.element_count))
    return RawFrame(data.astype(dtype), geometry, acquisition)
