from pathlib import Path

import matplotlib
import numpy as np
import pytest

matplotlib.use("Agg")

from oracles import MaxFormProblem, PageRankProblem  # noqa: E402
from problem_generators import cycle_matrix, lp_toy, random_stochastic_matrix  # noqa: E402
from sparse_core import build_from_triplets  # noqa: E402

INSTANCES = Path(__file__).parent / "instances"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical or large-instance checks (still run by default)")


@pytest.fixture
def instances_dir():
    return INSTANCES


@pytest.fixture
def cycle2():
    return cycle_matrix(2)


@pytest.fixture
def cycle2_problem(cycle2):
    return PageRankProblem(cycle2)


@pytest.fixture
def small_chain():
    """Random strongly connected row-stochastic P with n = 6."""
    return random_stochastic_matrix(6, out_degree=2, seed=3)


@pytest.fixture
def lp_problems():
    A, b, c = lp_toy()
    f = MaxFormProblem.affine(build_from_triplets([(0, j, v) for j, v in enumerate(c)], 1, len(c)))
    return f, MaxFormProblem.affine(A, b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
