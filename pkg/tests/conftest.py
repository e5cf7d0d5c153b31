import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oblimatch.bench import gen_erdos_renyi, gen_random_weighted
from oblimatch.graph import Instance

settings.register_profile(
    "repo",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


def random_instance(rng: np.random.Generator, n_lo: int = 2, n_hi: int = 10,
                    weighted: bool | None = None, bipartite: bool | None = None) -> Instance:
    """A small random instance; unset flags are chosen at random."""
    n = int(rng.integers(n_lo, n_hi + 1))
    if weighted is None:
        weighted = bool(rng.integers(0, 2))
    if bipartite is None:
        bipartite = bool(rng.integers(0, 2))
    p = float(rng.uniform(0.25, 0.9))
    seed = int(rng.integers(0, 2**31))
    if weighted:
        return gen_random_weighted(n, p, seed, "uniform", bipartite)
    return gen_erdos_renyi(n, p, seed, bipartite)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def triangle_with_tail():
    return Instance.unweighted(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
