import numpy as np
import pytest

from seqassign.graph import (
    build_graph,
    complete_graph,
    cycle_graph,
    path_graph,
    star_graph,
)
from seqassign.values import compute_table


@pytest.fixture(scope="session")
def p4():
    return path_graph(4)


@pytest.fixture(scope="session")
def triangle():
    return build_graph(3, [(1, 2), (2, 3), (1, 3)])


@pytest.fixture(scope="session")
def k13():
    return star_graph(3)


@pytest.fixture(scope="session")
def c4():
    return cycle_graph(4)


@pytest.fixture(scope="session")
def k4():
    return complete_graph(4)


@pytest.fixture(scope="session")
def p4_table(p4):
    """Shared P4 table to total 200 (the heaviest fixture; ~5 s)."""
    return compute_table(p4, 200)


def brute_force(g, cfg, weights=None):
    """Memo-free recursive evaluation of the optimality recursion, float64.

    Exponential in the total; only usable for small configs.  Kept free of
    memoization on purpose: it is the independent oracle for the table.
    """
    if weights is None:
        weights = np.full(g.k, 1.0 / g.k)
    cfg = tuple(int(c) for c in cfg)
    if sum(cfg) == 0:
        return 1.0
    total = 0.0
    for v in range(1, g.k + 1):
        best = -1.0
        for e in g.incidence[v - 1]:
            if cfg[e] > 0:
                child = list(cfg)
                child[e] -= 1
                val = brute_force(g, child, weights)
                if val > best:
                    best = val
        total += weights[v - 1] * (0.0 if best < 0 else best)
    return total


@pytest.fixture(scope="session")
def oracle():
    return brute_force


def random_simplex_points(m, count, seed):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(m), size=count)


@pytest.fixture(scope="session")
def simplex_sampler():
    return random_simplex_points
