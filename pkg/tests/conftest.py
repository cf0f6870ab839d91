import numpy as np
import pytest

from uqadmm.core import NoiseCov, PriorSpec, Subproblem
from uqadmm.operators import MatrixOperator


def pytest_addoption(parser):
    parser.addoption(
        "--run-experiments",
        action="store_true",
        default=False,
        help="run the long experiment reproduction checks",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-experiments"):
        return
    skip = pytest.mark.skip(reason="needs --run-experiments")
    for item in items:
        if "experiment" in item.keywords:
            item.add_marker(skip)


def random_split_problem(seed: int, n: int = 20, rows: int = 30, n_sub: int = 4, alpha: float = 0.1):
    """N dense, well-conditioned linear subproblems sharing a smallness prior."""

    rng = np.random.default_rng(seed)
    prior = PriorSpec.smallness(n, alpha)
    truth = rng.standard_normal(n)
    subproblems = []
    for _ in range(n_sub):
        A = rng.standard_normal((rows, n)) / np.sqrt(rows)
        y = A @ truth + 0.01 * rng.standard_normal(rows)
        subproblems.append(Subproblem(MatrixOperator(A), y, NoiseCov.identity(rows), prior))
    return subproblems, truth


@pytest.fixture
def make_split_problem():
    return random_split_problem
