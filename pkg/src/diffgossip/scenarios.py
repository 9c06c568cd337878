"""Synthetic direct-trust scenarios.

Node i holds an opinion about j with probability

    min(1, floor + adjacency_weight * [i ~ j] + common_weight * |NS_i & NS_j|)

so peers mostly know their neighbours and neighbours' neighbours, with a thin
uniform background.  Opinion values are uniform on [0, 1].  Each subject
column draws from its own stream seeded by (seed, subject), so generating a
subset of subjects gives the same columns as generating all of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pa_graph import Graph
from .trust import TrustMatrix


@dataclass(frozen=True)
class TrustScenario:
    floor: float = 0.01
    adjacency_weight: float = 0.5
    common_weight: float = 0.05

    def __post_init__(self):
        for name in ("floor", "adjacency_weight", "common_weight"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"scenario {name} must lie in [0, 1], got {v}")


def generate_trust(graph: Graph, seed: int, scenario: TrustScenario | None = None,
                   subjects=None) -> TrustMatrix:
    scenario = scenario or TrustScenario()
    n = graph.node_count
    adj = graph.to_sparse()
    subjects = range(n) if subjects is None else [int(j) for j in subjects]
    rows, cols, vals = [], [], []
    for j in subjects:
        a_col = adj.getrow(j).toarray().ravel()
        common = adj @ a_col
        p = scenario.floor + scenario.adjacency_weight * a_col + scenario.common_weight * common
        p = np.minimum(p, 1.0)
        p[j] = 0.0
        rng = np.random.default_rng([seed, j])
        opine = rng.random(n) < p
        t = rng.random(n)
        idx = np.flatnonzero(opine)
        rows.append(idx)
        cols.append(np.full(idx.size, j))
        vals.append(t[idx])
    if not rows:
        return TrustMatrix.empty(n)
    return TrustMatrix(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
