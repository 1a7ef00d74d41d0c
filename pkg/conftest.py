import numpy as np
import pytest
from scipy import ndimage

from image_core import ImageGrid, make_phantom, normalize


def smooth_field(width, height, seed, sigma=4.0):
    """Seeded smooth random image in [0, 1]."""
    rng = np.random.default_rng(seed)
    return normalize(ImageGrid(ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def phantom():
    return make_phantom(48, 40, seed=3)


@pytest.fixture
def half_scale_phantom():
    return make_phantom(109, 90, seed=0)


@pytest.fixture
def smooth_image():
    return smooth_field(48, 48, seed=7)
