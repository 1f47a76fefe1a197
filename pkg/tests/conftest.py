import numpy as np
import pytest

from SRRN.data import synthetic_textures
from SRRN.models import build_network


@pytest.fixture
def rng():
    return np.random.default_rng(20170521)


@pytest.fixture
def tiny_net():
    return build_network('4_1,6_1', seed=3)


@pytest.fixture
def zero_net():
    return build_network('8_2', seed=0).zero_()


@pytest.fixture
def textures():
    return synthetic_textures(4, size=48, seed=5)


@pytest.fixture
def image_dir(tmp_path, textures):
    from SRRN.data import write_image

    directory = tmp_path / 'images'
    directory.mkdir()
    for i, plane in enumerate(textures[:3]):
        write_image(directory / f"img{i}.png", plane)
    return directory
