import numpy as np
import pytest
import torch

import photogeo as pg


@pytest.fixture(autouse=True)
def _single_thread():
    # keep runs reproducible and avoid oversubscription on CI boxes
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def hemisphere64():
    return pg.make_scene("hemisphere", 64, 64)


@pytest.fixture(scope="session")
def hemisphere16():
    return pg.make_scene("hemisphere", 16, 16)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
