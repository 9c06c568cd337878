"""Shared fixtures and brute-force reference implementations.

The references here are written directly from the defining formulas with
plain Python loops, so they share no code with the package.
"""

import numpy as np
import pytest

from diffgossip import pa_graph
from diffgossip.scenarios import TrustScenario, generate_trust


def brute_global(entries: dict, n: int, j: int, population: str) -> float:
    vals = [t for (i, jj), t in entries.items() if jj == j]
    if not vals:
        return 0.0
    return sum(vals) / (n if population == "all" else len(vals))


def brute_calibrated(entries: dict, adjacency, n, a, b, evaluator, j, population) -> float:
    """sum_i w_i t_ij / sum_i w_i over the population, w = a**(b*t[I,k]) on neighbours, 1 elsewhere.

    In the opining population only opiners of j enter the unweighted part; the
    neighbour excess (w - 1) terms are added for every neighbour.
    """
    nbrs = adjacency[evaluator]
    excess = {k: a ** (b * entries.get((evaluator, k), 0.0)) - 1.0 for k in nbrs}
    opiners = [i for (i, jj) in entries if jj == j]
    num = sum(excess[k] * entries.get((k, j), 0.0) for k in nbrs)
    num += sum(entries[(i, j)] for i in opiners)
    den = sum(excess.values()) + (n if population == "all" else len(opiners))
    return num / den if den > 0 else 0.0


def brute_calibrated_direct_all(entries, adjacency, n, a, b, evaluator, j) -> float:
    """The weighted-average form over all N nodes (ALL population)."""
    w = [1.0] * n
    for k in adjacency[evaluator]:
        w[k] = a ** (b * entries.get((evaluator, k), 0.0))
    return sum(w[i] * entries.get((i, j), 0.0) for i in range(n)) / sum(w)


def star(leaves: int):
    return pa_graph.Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@pytest.fixture(scope="session")
def pa100():
    return pa_graph.generate(100, 2, 11)


@pytest.fixture(scope="session")
def trust100(pa100):
    return generate_trust(pa100, 11, TrustScenario(floor=0.1))
