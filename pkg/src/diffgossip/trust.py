"""Direct-interaction trust, confidence weights, and exact reputation oracles.

The oracles here compute reputations by plain summation over the trust
matrix.  They never touch the gossip engine and serve as the reference the
gossip estimates are checked against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pa_graph import Graph


class Population(str, enum.Enum):
    """Normaliser of a reputation average: every node, or only opining nodes."""

    ALL = "all"
    OPINING = "opining"


@dataclass(frozen=True)
class WeightParams:
    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError(f"weight base a must be > 1, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"weight scale b must be > 0, got {self.b}")


def weight(p: WeightParams, t):
    """Confidence weight a**(b*t); 1 for no trust, growing with trust."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0) | (t_arr > 1)) or np.any(np.isnan(t_arr)):
        raise ValueError(f"trust value outside [0, 1]: {t}")
    w = np.power(p.a, p.b * t_arr)
    return float(w) if np.ndim(w) == 0 else w


class TrustMatrix:
    """Sparse N x N matrix of direct trust values t[i, j] in [0, 1].

    An absent entry means i never interacted with j and reads as 0.  A stored
    entry, even a stored 0, makes i an *opiner* about j.
    """

    def __init__(self, n: int, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size:
            if rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n:
                raise ValueError("trust entry index outside 0..n-1")
            if np.any(rows == cols):
                raise ValueError("trust matrix cannot hold self-opinions")
            if np.any((vals < 0) | (vals > 1)) or np.any(np.isnan(vals)):
                raise ValueError("trust values must lie in [0, 1]")
        # last write wins on duplicate (i, j)
        key = rows * n + cols
        _, last = np.unique(key[::-1], return_index=True)
        keep = np.sort(len(key) - 1 - last)
        order = np.lexsort((cols[keep], rows[keep]))
        self.n = int(n)
        self.rows = rows[keep][order]
        self.cols = cols[keep][order]
        self.vals = vals[keep][order]
        self._key = self.rows * self.n + self.cols
        for a in (self.rows, self.cols, self.vals, self._key):
            a.setflags(write=False)

    @classmethod
    def from_dict(cls, n: int, entries: dict) -> "TrustMatrix":
        if not entries:
            return cls.empty(n)
        keys = list(entries)
        return cls(n, [k[0] for k in keys], [k[1] for k in keys], [entries[k] for k in keys])

    @classmethod
    def from_dense(cls, values: np.ndarray, mask: np.ndarray) -> "TrustMatrix":
        r, c = np.nonzero(mask)
        return cls(values.shape[0], r, c, values[r, c])

    @classmethod
    def empty(cls, n: int) -> "TrustMatrix":
        return cls(n, [], [], [])

    def __len__(self):
        return len(self.vals)

    def __eq__(self, other):
        if not isinstance(other, TrustMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    def to_dict(self) -> dict:
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.vals)}

    def get(self, i: int, j: int) -> float:
        k = self._find(i, j)
        return 0.0 if k < 0 else float(self.vals[k])

    def has(self, i: int, j: int) -> bool:
        return self._find(i, j) >= 0

    def _find(self, i, j) -> int:
        key = self._key
        target = i * self.n + j
        k = int(np.searchsorted(key, target))
        return k if k < len(key) and key[k] == target else -1

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(opiner ids, trust values) for subject j."""
        sel = self.cols == j
        return self.rows[sel], self.vals[sel]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.searchsorted(self.rows, [i, i + 1])
        return self.cols[lo:hi], self.vals[lo:hi]

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, opinion mask) as dense N x N arrays."""
        values = np.zeros((self.n, self.n))
        mask = np.zeros((self.n, self.n), dtype=bool)
        values[self.rows, self.cols] = self.vals
        mask[self.rows, self.cols] = True
        return values, mask

    def block(self, subjects) -> tuple[np.ndarray, np.ndarray]:
        """Dense (values, mask) of shape (N, len(subjects)) for the given subject columns."""
        subjects = np.asarray(subjects, dtype=np.int64)
        values = np.zeros((self.n, len(subjects)))
        mask = np.zeros((self.n, len(subjects)), dtype=bool)
        pos = np.full(self.n, -1)
        pos[subjects] = np.arange(len(subjects))
        sel = pos[self.cols] >= 0
        values[self.rows[sel], pos[self.cols[sel]]] = self.vals[sel]
        mask[self.rows[sel], pos[self.cols[sel]]] = True
        return values, mask

    def subjects(self) -> np.ndarray:
        return np.unique(self.cols)

    def write(self, path) -> None:
        lines = [f"n {self.n}"]
        lines += [f"{i} {j} {v!r}" for i, j, v in zip(self.rows, self.cols, self.vals.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "TrustMatrix":
        rows, cols, vals = [], [], []
        with open(path) as fh:
            head = fh.readline().split()
            if len(head) != 2 or head[0] != "n":
                raise ValueError(f"{path}: first line must be 'n <count>'")
            n = int(head[1])
            for line in fh:
                if not line.strip():
                    continue
                i, j, v = line.split()
                rows.append(int(i))
                cols.append(int(j))
                vals.append(float(v))
        return cls(n, rows, cols, vals)


def oracle_global(t: TrustMatrix, j: int, population: Population = Population.OPINING) -> float:
    _, vals = t.column(j)
    if len(vals) == 0:
        return 0.0
    denom = t.n if Population(population) is Population.ALL else len(vals)
    return float(vals.sum()) / denom


def _neighbor_excess(t: TrustMatrix, g: Graph, p: WeightParams, evaluator: int):
    nbrs = g.neighbors(evaluator)
    t_row = np.array([t.get(evaluator, int(k)) for k in nbrs], dtype=float)
    return nbrs, np.power(p.a, p.b * t_row) - 1.0


def oracle_calibrated(
    t: TrustMatrix,
    g: Graph,
    p: WeightParams,
    evaluator: int,
    j: int,
    population: Population = Population.OPINING,
) -> float:
    """Globally calibrated local reputation of j as seen by ``evaluator``.

    Neighbours k of the evaluator get weight w = a**(b*t[evaluator, k]);
    every other node has weight 1.
    """
    opiners, vals = t.column(j)
    nbrs, excess = _neighbor_excess(t, g, p, evaluator)
    t_nbr = np.array([t.get(int(k), j) for k in nbrs])
    denom_pop = t.n if Population(population) is Population.ALL else len(vals)
    num = float(excess @ t_nbr) + float(vals.sum())
    den = float(excess.sum()) + denom_pop
    return num / den if den > 0 else 0.0


def oracle_global_matrix(t: TrustMatrix, population: Population = Population.OPINING) -> np.ndarray:
    """oracle_global for every subject, as a length-N vector."""
    sums = np.bincount(t.cols, weights=t.vals, minlength=t.n)
    if Population(population) is Population.ALL:
        return sums / t.n
    counts = np.bincount(t.cols, minlength=t.n)
    return np.divide(sums, counts, out=np.zeros(t.n), where=counts > 0)


def neighbor_excess_matrix(t: TrustMatrix, g: Graph, p: WeightParams):
    """Sparse E with E[I, k] = w_Ik - 1 for k in NS_I (zero elsewhere)."""
    import scipy.sparse as sp

    owner = np.repeat(np.arange(g.node_count), g.degree)
    values, _ = _lookup(t, owner, g.indices)
    excess = np.power(p.a, p.b * values) - 1.0
    return sp.csr_matrix((excess, g.indices, g.indptr), shape=(g.node_count, g.node_count))


def _lookup(t: TrustMatrix, rows, cols):
    key = t._key
    target = np.asarray(rows) * t.n + np.asarray(cols)
    k = np.searchsorted(key, target)
    k_clip = np.minimum(k, max(len(key) - 1, 0))
    found = (k < len(key)) & (key[k_clip] == target) if len(key) else np.zeros(len(target), bool)
    out = np.where(found, t.vals[k_clip] if len(key) else 0.0, 0.0)
    return out, found


def oracle_calibrated_matrix(
    t: TrustMatrix,
    g: Graph,
    p: WeightParams,
    population: Population = Population.OPINING,
    subjects=None,
    feedback: TrustMatrix | None = None,
) -> np.ndarray:
    """R[I, s] = oracle_calibrated(t, g, p, I, subjects[s]) as a dense (N, S) array.

    ``feedback``, when given, supplies the evaluator's confidence weights and
    the neighbour values it mixes in, while ``t`` supplies the network-wide
    sums and counts (as when some nodes report differently to the network
    than to their neighbours).  ``subjects`` defaults to all N nodes.
    """
    feedback = t if feedback is None else feedback
    subjects = np.arange(t.n) if subjects is None else np.asarray(subjects, dtype=np.int64)
    values, mask = t.block(subjects)
    fb_values, _ = feedback.block(subjects)
    excess = neighbor_excess_matrix(feedback, g, p)
    y_hat = np.asarray(excess @ fb_values)
    w_sum = np.asarray(excess.sum(axis=1)).ravel()
    col_sum = values.sum(axis=0)
    if Population(population) is Population.ALL:
        pop = np.full(len(subjects), float(t.n))
    else:
        pop = mask.sum(axis=0).astype(float)
    num = y_hat + col_sum[None, :]
    den = w_sum[:, None] + pop[None, :]
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)
