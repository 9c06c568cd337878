"""Colluding groups and the closed-form effect of collusion on reputation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .pa_graph import Graph
from .trust import TrustMatrix, WeightParams


class CollusionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CollusionConfig:
    """``fraction`` of all nodes collude in groups of ``group_size``.

    Colluders are drawn uniformly without replacement; groups are contiguous
    blocks of the shuffled colluder list, the last one possibly smaller.
    """

    fraction: float = 0.0
    group_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.fraction <= 1:
            raise ValueError(f"colluder fraction must lie in [0, 1], got {self.fraction}")
        if self.group_size < 1:
            raise ValueError(f"group size must be >= 1, got {self.group_size}")

    def count(self, n: int) -> int:
        return int(math.floor(self.fraction * n + 0.5))

    def colluders(self, n: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.permutation(n)[: self.count(n)]

    def groups(self, n: int) -> list[np.ndarray]:
        members = self.colluders(n)
        size = self.group_size
        if size > len(members) > 0:
            warnings.warn(
                f"group size {size} exceeds colluder count {len(members)}; using one group",
                CollusionWarning,
                stacklevel=2,
            )
            size = len(members)
        if not len(members):
            return []
        return [members[i : i + size] for i in range(0, len(members), size)]


def apply_collusion(t: TrustMatrix, cfg: CollusionConfig) -> TrustMatrix:
    """Colluders report 1 for every group-mate and 0 for everyone else they know.

    Honest rows are untouched.  Colluders start opining on group-mates they
    never dealt with.
    """
    groups = cfg.groups(t.n)
    if not groups:
        return t
    group_of = np.full(t.n, -1)
    for gid, members in enumerate(groups):
        group_of[members] = gid

    honest = group_of[t.rows] < 0
    rows = [t.rows[honest]]
    cols = [t.cols[honest]]
    vals = [t.vals[honest]]
    # colluders' existing opinions of outsiders drop to 0
    col_rows = t.rows[~honest]
    col_cols = t.cols[~honest]
    outsider = group_of[col_cols] != group_of[col_rows]
    rows.append(col_rows[outsider])
    cols.append(col_cols[outsider])
    vals.append(np.zeros(int(outsider.sum())))
    for members in groups:
        a, b = np.meshgrid(members, members, indexing="ij")
        off = a != b
        rows.append(a[off])
        cols.append(b[off])
        vals.append(np.ones(int(off.sum())))
    return TrustMatrix(t.n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


@dataclass(frozen=True)
class CollusionDeltas:
    delta_old: float
    delta_new: float
    attenuation: float


def attenuation_factor(weights_excess_sum: float, n: int) -> float:
    return n / (n + weights_excess_sum)


def closed_form_deltas(t: TrustMatrix, graph: Graph, params: WeightParams, observer: int,
                       subject: int, cfg: CollusionConfig) -> CollusionDeltas:
    """Expected reputation error caused by collusion, without and with weighting.

    ``delta_old`` is the unweighted error -G*C/N^2 + sum_{i in colluders} t[i, x] / N.
    Weighting by the observer's confidence in its neighbours scales it by
    N / (N + sum_i (w_oi - 1)); non-neighbours have weight 1.
    """
    n = t.n
    colluders = cfg.colluders(n)
    c = len(colluders)
    g = min(cfg.group_size, c)
    held = sum(t.get(int(i), subject) for i in colluders)
    delta_old = -g * c / n**2 + held / n

    nbrs = graph.neighbors(observer)
    t_on = np.array([t.get(observer, int(k)) for k in nbrs], dtype=float)
    excess = float((np.power(params.a, params.b * t_on) - 1.0).sum())
    att = attenuation_factor(excess, n)
    return CollusionDeltas(delta_old, att * delta_old, att)
