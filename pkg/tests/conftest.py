import numpy as np
import pytest
from hypothesis import settings

from clickcut.imagecore import BinaryMask, Image
from clickcut.superpixels import SuperpixelMap

settings.register_profile("fast", max_examples=30, deadline=None)
settings.load_profile("fast")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    return Image(rng.integers(0, 255, (48, 64, 3), dtype=np.uint8))


@pytest.fixture
def grid_sp():
    """Synthetic 4x4 superpixel grid over a 32x32 raster."""
    labels = np.zeros((32, 32), np.int32)
    for i in range(4):
        for j in range(4):
            labels[i * 8:(i + 1) * 8, j * 8:(j + 1) * 8] = i * 4 + j
    return SuperpixelMap.from_labels(labels)


@pytest.fixture
def two_tone():
    """32x32 image, left half red, right half blue, superpixels aligned."""
    img = np.zeros((32, 32, 3), np.uint8)
    img[:, :16] = (200, 30, 30)
    img[:, 16:] = (30, 30, 200)
    labels = np.zeros((32, 32), np.int32)
    for i in range(4):
        for j in range(4):
            labels[i * 8:(i + 1) * 8, j * 8:(j + 1) * 8] = i * 4 + j
    return Image(img), SuperpixelMap.from_labels(labels)


def disk_mask(w, h, cx, cy, r):
    ys, xs = np.indices((h, w))
    return BinaryMask((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r)
