import numpy as np
import pytest

from histgate.imagecore import BinaryMask, DatasetSplit, GrayImage


def random_mask(rng, shape=(16, 16)) -> BinaryMask:
    return BinaryMask((rng.random(shape) < 0.5).astype(np.uint8))


def make_split(pixel_arrays, masks=None, role="source-train", ids=None) -> DatasetSplit:
    images = [GrayImage(np.asarray(a, dtype=np.float64)) for a in pixel_arrays]
    if ids is None:
        ids = [f"{i:04d}" for i in range(len(images))]
    return DatasetSplit(images=images, masks=masks, ids=ids, role=role)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
