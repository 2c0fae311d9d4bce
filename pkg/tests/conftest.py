import numpy as np
import pytest

from issr.data import chronological_split
from synthetic import labelled_log


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_split():
    """Five users over eight items, enough for windows at L=2, T=1."""
    sequences = [
        [0, 1, 2, 3, 4],
        [2, 3, 4, 5, 6],
        [0, 2, 4, 6, 7],
        [1, 3, 5, 7, 0],
        [5, 6, 7, 0, 1],
    ]
    return chronological_split(labelled_log(sequences, 8))
