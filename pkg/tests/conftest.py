import pytest
from hypothesis import settings

from bmrc.corpus import synthetic_corpus
from helpers import make_sentence

# numba compiles on first call, which blows any per-example deadline
settings.register_profile("bmrc", deadline=None)
settings.load_profile("bmrc")


@pytest.fixture
def figure1():
    return make_sentence(
        "the food was delicious but the price was high",
        [((1, 1), (3, 3), "POS"), ((6, 6), (8, 8), "NEG")],
        sid="fig1",
    )


@pytest.fixture(scope="session")
def corpus50():
    return synthetic_corpus(50, seed=0)
