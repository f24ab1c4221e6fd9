import numpy as np
import pytest

from cayleylab import parse_group, walk_sequence

FAMILIES = ("Z^2", "heisenberg", "free:2", "lamplighter:2", "wreathZZ")


@pytest.fixture(scope="session")
def specs():
    return {name: parse_group(name) for name in FAMILIES}


@pytest.fixture(scope="session")
def small_traces(specs):
    """Float traces with steps 0..11 for every family (enough for n<=5 identities)."""
    return {name: walk_sequence(spec, 5, retain="all")
            for name, spec in specs.items()}


@pytest.fixture(scope="session")
def rational_traces(specs):
    """Exact-rational traces with steps 0..9."""
    return {name: walk_sequence(spec, 4, mode="rational")
            for name, spec in specs.items()}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
