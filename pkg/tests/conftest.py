import numpy as np
import pytest

from fpklab import SpaceTriple, separating_family, simulate_em
from fpklab.models import ou_model


@pytest.fixture(scope="session")
def linear_triple():
    return SpaceTriple(np.arange(1.0, 9.0))


@pytest.fixture(scope="session")
def bump_family():
    return separating_family(1, 4, box=4.0)


@pytest.fixture(scope="session")
def ou():
    return ou_model()


@pytest.fixture(scope="session")
def ou_ensemble(ou):
    """Shared medium-size OU ensemble; tests must not mutate it."""
    return simulate_em(ou, [1.0], 1, 200, 20000, seed=1234)
