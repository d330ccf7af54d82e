import warnings

import numpy as np
import pytest

from mdselect.game_core import GameOracle
from mdselect.linmodel import Dataset

# v(empty)=0, v({0})=3, v({1})=1, v({0,1})=4
FIXTURE_TABLE = (0.0, 3.0, 1.0, 4.0)


@pytest.fixture
def fixture_game():
    return GameOracle.from_table(FIXTURE_TABLE)


def random_game(rng, n):
    return GameOracle.from_table(rng.uniform(0.0, 1.0, 1 << n))


def make_linear_data(seed=0, t_obs=60, n=4, beta=(2.0,), noise=0.1, Z=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((t_obs, n))
    y = 1.0 + X[:, : len(beta)] @ np.asarray(beta) + noise * rng.standard_normal(t_obs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Dataset(y, X, Z)
