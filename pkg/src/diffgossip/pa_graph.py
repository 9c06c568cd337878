"""Preferential-attachment graphs and the differential push count.

Graphs are stored in CSR form (``indptr``/``indices``) so the gossip engine
can pick neighbours with vectorised numpy operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    ``m`` and ``seed`` are ``None`` for hand-built graphs.
    """

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    m: int | None = None
    seed: int | None = None

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], m=None, seed=None) -> "Graph":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) outside 0..{n - 1}")
            nbrs[i].add(j)
            nbrs[j].add(i)
        deg = np.array([len(s) for s in nbrs], dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        indices = np.fromiter(
            (j for s in nbrs for j in sorted(s)), dtype=np.int64, count=int(indptr[-1])
        )
        indptr.setflags(write=False)
        indices.setflags(write=False)
        return cls(n, indptr, indices, m, seed)

    @cached_property
    def degree(self) -> np.ndarray:
        d = np.diff(self.indptr)
        d.setflags(write=False)
        return d

    @property
    def edge_count(self) -> int:
        return int(self.indptr[-1]) // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.node_count)]

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for i in range(self.node_count):
            out.extend((i, int(j)) for j in self.neighbors(i) if j > i)
        return out

    @cached_property
    def neighbor_degree_sum(self) -> np.ndarray:
        owner = np.repeat(np.arange(self.node_count), self.degree)
        s = np.bincount(owner, weights=self.degree[self.indices], minlength=self.node_count)
        return s.astype(np.int64)

    @cached_property
    def push_counts(self) -> np.ndarray:
        """k_i for every node; 0 for isolated nodes (they can push nowhere)."""
        deg = self.degree
        s = self.neighbor_degree_sum
        k = np.zeros(self.node_count, dtype=np.int64)
        has = deg > 0
        # round-half-up of deg / (s / deg) == deg^2 / s, in exact integer arithmetic
        k[has] = (2 * deg[has] ** 2 + s[has]) // (2 * s[has])
        k[has] = np.clip(k[has], 1, deg[has])
        k.setflags(write=False)
        return k

    def to_sparse(self):
        import scipy.sparse as sp

        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.node_count,) * 2)


def generate(n: int, m: int, seed: int) -> Graph:
    """Grow G^m_n by preferential attachment from a complete graph on m+1 nodes.

    Each joining node picks m distinct existing targets; every pick is
    proportional to the target's current degree among nodes not yet picked.
    """
    if m < 2:
        raise GraphError(f"m must be >= 2, got {m}")
    if n <= m:
        raise GraphError(f"n must exceed m, got n={n}, m={m}")
    rng = np.random.default_rng(seed)

    n_edges = m * (m + 1) // 2 + m * (n - m - 1)
    # every node appears in `ends` once per incident edge: uniform draws are degree-weighted
    ends = np.empty(2 * n_edges, dtype=np.int64)
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    e = 0
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            src[e], dst[e] = i, j
            ends[2 * e], ends[2 * e + 1] = i, j
            e += 1

    for new in range(m + 1, n):
        filled = 2 * e
        targets: list[int] = []
        while len(targets) < m:
            draws = rng.integers(0, filled, size=m - len(targets))
            for t in ends[draws]:
                t = int(t)
                if t not in targets and len(targets) < m:
                    targets.append(t)
        for t in targets:
            src[e], dst[e] = new, t
            ends[2 * e], ends[2 * e + 1] = new, t
            e += 1

    return _from_edge_arrays(n, src, dst, m=m, seed=seed)


def _from_edge_arrays(n, src, dst, m=None, seed=None) -> Graph:
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(a, minlength=n), out=indptr[1:])
    indptr.setflags(write=False)
    b.setflags(write=False)
    return Graph(n, indptr, b, m, seed)


def avg_neighbor_degree(g: Graph, i: int) -> float:
    d = int(g.degree[i])
    if d == 0:
        raise GraphError(f"node {i} is isolated")
    return float(g.neighbor_degree_sum[i]) / d


def push_count(g: Graph, i: int) -> int:
    if g.degree[i] == 0:
        raise GraphError(f"node {i} is isolated")
    return int(g.push_counts[i])


def write_edge_list(g: Graph, path) -> None:
    lines = [f"{g.node_count} {g.m if g.m is not None else 0} {g.seed if g.seed is not None else -1}"]
    lines += [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise GraphError(f"{path}: header must be 'n m seed'")
        n, m, seed = (int(x) for x in header)
        edges = [tuple(int(x) for x in line.split()) for line in fh if line.strip()]
    return Graph.from_edges(n, edges, m=m or None, seed=None if seed < 0 else seed)
