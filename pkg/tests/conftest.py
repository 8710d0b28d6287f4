import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

CHSH_DIRECTIONS = np.array(
    [
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [[1 / np.sqrt(2), 1 / np.sqrt(2), 0.0], [-1 / np.sqrt(2), 1 / np.sqrt(2), 0.0]],
    ]
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chsh_directions():
    return CHSH_DIRECTIONS.copy()
