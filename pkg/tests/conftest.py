import numpy as np
import pytest

from visioncorrect.image import reference_scene, text_card, to_gray
from visioncorrect.psf import disk_psf


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene512():
    return reference_scene(512)


@pytest.fixture(scope="session")
def scene256_gray():
    return to_gray(reference_scene(256))


@pytest.fixture(scope="session")
def disk8():
    return disk_psf(8, 17)


@pytest.fixture(scope="session")
def card256():
    return text_card(256)
