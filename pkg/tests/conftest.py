import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from gsr360 import EquirectImage


def smooth_field(h: int, w: int, seed: int, sigma: float = 4.0) -> np.ndarray:
    """Band-limited random field, a stand-in for natural image content."""
    rng = np.random.default_rng(seed)
    base = gaussian_filter(rng.normal(0.0, 1.0, (h, w, 3)), (sigma, sigma, 0), mode="wrap")
    base = base / base.std() * 45.0 + 128.0
    detail = gaussian_filter(rng.normal(0.0, 1.0, (h, w, 3)), (1.0, 1.0, 0), mode="wrap")
    base = base + detail / detail.std() * 18.0
    return np.clip(base, 0, 255).astype(np.uint8)


@pytest.fixture
def smooth_image() -> EquirectImage:
    return EquirectImage(smooth_field(128, 256, seed=11))


@pytest.fixture
def noise_image() -> EquirectImage:
    rng = np.random.default_rng(3)
    return EquirectImage(rng.integers(0, 256, (128, 256, 3), dtype=np.uint8))
