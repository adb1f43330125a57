import numpy as np
import pytest

from hmclab.targets import (
    GaussianTarget,
    LogisticPosteriorTarget,
    RidgeSeparableTarget,
    logcosh_potential,
    random_unit_rows,
    sine_potential,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_ridge(n: int, d: int, seed: int, potential=None) -> RidgeSeparableTarget:
    gen = np.random.default_rng(seed)
    pot = potential if potential is not None else logcosh_potential()
    return RidgeSeparableTarget(random_unit_rows(n, d, gen), pot)


def make_mixed_ridge(n: int, d: int, seed: int) -> RidgeSeparableTarget:
    gen = np.random.default_rng(seed)
    pots = [logcosh_potential() if i % 2 == 0 else sine_potential() for i in range(n)]
    return RidgeSeparableTarget(random_unit_rows(n, d, gen), pots)


def make_logistic(n: int, d: int, seed: int, alpha2: float = 1.0) -> LogisticPosteriorTarget:
    return LogisticPosteriorTarget.synthetic(n, d, alpha2, np.random.default_rng(seed))


def make_dense_gaussian(d: int, seed: int) -> GaussianTarget:
    gen = np.random.default_rng(seed)
    a = gen.standard_normal((d, d))
    return GaussianTarget(a @ a.T / d + np.eye(d))
