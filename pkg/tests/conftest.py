import itertools

import numpy as np
import pytest

from juror.model import CpdModel


def random_model(rng, cards, F):
    weights = rng.dirichlet(np.ones(F))
    factors = [rng.dirichlet(np.ones(I), size=F).T for I in cards]
    return CpdModel(weights, factors)


def brute_force_tensor(model):
    """Joint PMF by explicit enumeration of every cell and latent state."""
    out = np.zeros(model.cardinalities)
    for idx in itertools.product(*(range(I) for I in model.cardinalities)):
        total = 0.0
        for f in range(model.rank):
            p = model.weights[f]
            for A, i in zip(model.factors, idx):
                p *= A[i, f]
            total += p
        out[idx] = total
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_model(rng):
    return random_model(rng, (2, 3, 4), 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
