"""Shared fixtures for the chainverifier tests."""

import pytest

from chainverifier.attractivity import SearchBudget
from chainverifier.chains import RandomWalk, SelectionWalk, XnesChain, XnesParams
from chainverifier.toy_models import drift_chain, flip_chain, frozen_chain, noisy_flip_chain


@pytest.fixture
def random_walk():
    """One-dimensional additive random walk."""
    return RandomWalk(1)


@pytest.fixture
def selection_walk():
    """Selection walk on f(x) = x^2."""
    return SelectionWalk()


@pytest.fixture
def xnes3():
    """xNES chain on the sphere with n=3, lambda=4, mu=2."""
    return XnesChain(XnesParams(n=3, lam=4, mu=2))


@pytest.fixture
def xnes1():
    """xNES chain on the sphere with n=1, lambda=2, mu=1."""
    return XnesChain(XnesParams(n=1, lam=2, mu=1))


@pytest.fixture
def frozen():
    return frozen_chain(1)


@pytest.fixture
def flip():
    return flip_chain()


@pytest.fixture
def noisy_flip():
    return noisy_flip_chain(0.01)


@pytest.fixture
def drift():
    return drift_chain(1)


@pytest.fixture
def small_budget():
    """Budget for searches that are expected to fail."""
    return SearchBudget(restarts=2, refinement_iterations=10)
