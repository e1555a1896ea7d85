import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from zoomkit.imageio import ColorSpace, ImageBuffer


def texture_image(size=64, channels=3, seed=0, smooth=1.5):
    """Smooth random field with full [0,1] range; has gradient energy
    everywhere, which registration and matching tests rely on."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (size, size, channels))
    x = gaussian_filter(x, (smooth, smooth, 0))
    x = (x - x.min()) / (x.max() - x.min())
    return ImageBuffer(data=x.astype(np.float32), space=ColorSpace.SRGB)


def flat_regions_image(size=32, seed=0, levels=3, smooth=2.0):
    """Piecewise-flat image with large exact-duplicate patches. Ambiguous
    content like this is what makes purely feature-based matching collapse
    many sources onto few targets."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (size, size, 3))
    x = gaussian_filter(x, (smooth, smooth, 0))
    x = (x - x.min()) / (x.max() - x.min())
    x = np.round(x * (levels - 1)) / (levels - 1)
    return ImageBuffer(data=x.astype(np.float32), space=ColorSpace.SRGB)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
