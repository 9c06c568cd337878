"""The four reputation aggregation variants built on the gossip engine.

* global_single / global_all: average-mode gossip of direct trust, every
  opiner starts with gossip weight 1.
* calibrated_single / calibrated_all: a neighbour feedback exchange, then
  sum-mode gossip (one initiator holds weight 1) with a count channel; each
  node mixes the network-wide sum and count with its confidence-weighted
  neighbour feedback.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .gossip import ChurnModel, GossipOutcome, GossipParams, init_vector, run
from .pa_graph import Graph
from .trust import Population, TrustMatrix, WeightParams, neighbor_excess_matrix

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    GLOBAL_SINGLE = "global_single"
    CALIBRATED_SINGLE = "calibrated_single"
    GLOBAL_ALL = "global_all"
    CALIBRATED_ALL = "calibrated_all"


@dataclass
class AggregationResult:
    variant: Variant
    subjects: np.ndarray
    estimates: np.ndarray  # estimates[I, s]: node I's reputation for subjects[s]
    steps: int
    messages: int
    converged: bool
    no_opiners: np.ndarray  # subjects nobody opined on; their estimates are 0
    feedback_messages: int = 0
    outcome: GossipOutcome | None = None

    def column(self, subject: int) -> np.ndarray:
        s = int(np.searchsorted(self.subjects, subject))
        if s >= len(self.subjects) or self.subjects[s] != subject:
            raise KeyError(subject)
        return self.estimates[:, s]


def trust_block(t: TrustMatrix, subjects) -> tuple[np.ndarray, np.ndarray]:
    return t.block(subjects)


class FeedbackCache:
    """Neighbour feedback held by every node before a calibrated gossip round.

    A node pushes t[i, j] to all its neighbours when it has never pushed a
    value for j or its trust moved by more than ``delta`` since the last
    push.  Pushes go to every neighbour alike, so the cache is keyed by
    sender: node I's view is the rows of its neighbours.  Entries of a sender
    that has not been present for more than ``horizon`` rounds are dropped.
    """

    def __init__(self, n: int, delta: float = 0.05, horizon: int = 3):
        if not delta > 0:
            raise ValueError(f"delta must be > 0, got {delta}")
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.n = n
        self.delta = delta
        self.horizon = horizon
        self.round = 0
        self.last_heard = np.full(n, -(10**9))
        self._values = np.full((n, 0), np.nan)
        self._index: dict[int, int] = {}

    def _columns(self, subjects) -> np.ndarray:
        new = [int(j) for j in subjects if int(j) not in self._index]
        if new:
            for j in new:
                self._index[j] = len(self._index)
            self._values = np.hstack([self._values, np.full((self.n, len(new)), np.nan)])
        return np.array([self._index[int(j)] for j in subjects], dtype=np.int64)

    def exchange(self, trust: TrustMatrix, graph: Graph, subjects, present=None) -> int:
        """Run one feedback phase; returns the number of messages sent."""
        self.round += 1
        present = np.ones(self.n, dtype=bool) if present is None else np.asarray(present, bool)
        self.last_heard[present] = self.round
        cols = self._columns(subjects)
        values, mask = trust_block(trust, subjects)
        cached = self._values[:, cols]
        moved = np.abs(values - np.nan_to_num(cached)) > self.delta
        changed = mask & present[:, None] & (np.isnan(cached) | moved)
        cached = np.where(changed, values, cached)
        stale = self.round - self.last_heard > self.horizon
        cached[stale] = np.nan
        self._values[:, cols] = cached
        senders = changed.any(axis=1)
        return int(graph.degree[senders].sum())

    def feedback(self, subjects) -> np.ndarray:
        """Last value each node pushed for each subject, 0 where none is held."""
        cols = self._columns(subjects)
        return np.nan_to_num(self._values[:, cols], nan=0.0)

    def get(self, sender: int, subject: int) -> float | None:
        if subject not in self._index:
            return None
        v = self._values[sender, self._index[subject]]
        return None if np.isnan(v) else float(v)


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _global(graph, trust, subjects, variant, params, churn, rng, population, diagnostics=False):
    subjects = np.asarray(subjects, dtype=np.int64)
    values, mask = trust_block(trust, subjects)
    empty = ~mask.any(axis=0)
    if np.all(empty):
        log.warning("no opiners for any of %d subjects; estimates are 0", len(subjects))
        return AggregationResult(variant, subjects, np.zeros(values.shape), 0, 0, True, subjects[empty])
    live = np.flatnonzero(~empty)
    if Population(population) is Population.ALL:
        g = np.ones((trust.n, len(live)))
    else:
        g = mask[:, live].astype(float)
    state = init_vector(graph, values[:, live], g, subjects=subjects[live])
    out = run(state, graph, churn, params, _rng(rng), diagnostics)
    est = np.zeros(values.shape)
    est[:, live] = out.ratios
    return AggregationResult(
        variant, subjects, est, out.steps, out.messages, out.converged, subjects[empty], outcome=out
    )


def global_single(graph: Graph, trust: TrustMatrix, subject: int, params: GossipParams | None = None,
                  churn: ChurnModel | None = None, rng=None,
                  population: Population = Population.OPINING,
                  diagnostics: bool = False) -> AggregationResult:
    """Every node's estimate of the average direct trust held for ``subject``."""
    return _global(graph, trust, [subject], Variant.GLOBAL_SINGLE, params, churn, rng, population,
                   diagnostics)


def global_all(graph: Graph, trust: TrustMatrix, params: GossipParams | None = None,
               churn: ChurnModel | None = None, rng=None, subjects=None,
               population: Population = Population.OPINING,
               diagnostics: bool = False) -> AggregationResult:
    subjects = np.arange(trust.n) if subjects is None else subjects
    return _global(graph, trust, subjects, Variant.GLOBAL_ALL, params, churn, rng, population,
                   diagnostics)


def _calibrated(graph, trust, weights, subjects, variant, params, churn, rng, cache,
                feedback_trust, population, initiators=None, diagnostics=False):
    subjects = np.asarray(subjects, dtype=np.int64)
    n = trust.n
    feedback_trust = trust if feedback_trust is None else feedback_trust
    cache = FeedbackCache(n) if cache is None else cache

    fb_messages = cache.exchange(feedback_trust, graph, subjects)
    excess = neighbor_excess_matrix(feedback_trust, graph, weights)
    y_hat = np.asarray(excess @ cache.feedback(subjects))
    w_sum = np.asarray(excess.sum(axis=1)).ravel()

    values, mask = trust_block(trust, subjects)
    empty = ~mask.any(axis=0)
    live = np.flatnonzero(~empty)
    est = np.zeros(values.shape)
    steps, messages, converged, out = 0, fb_messages, True, None
    if live.size:
        if initiators is None:
            # lowest-id opiner holds the only unit of gossip weight
            init_nodes = mask[:, live].argmax(axis=0)
        else:
            init_nodes = np.asarray(initiators, dtype=np.int64)[live]
        g = np.zeros((n, live.size))
        g[init_nodes, np.arange(live.size)] = 1.0
        state = init_vector(graph, values[:, live], g, mask[:, live].astype(float),
                            subjects=subjects[live])
        out = run(state, graph, churn, params, _rng(rng), diagnostics)
        total = out.ratios
        if Population(population) is Population.ALL:
            pop = np.full(total.shape, float(n))
        else:
            pop = out.count_ratios
        num = y_hat[:, live] + total
        den = w_sum[:, None] + pop
        est[:, live] = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        steps, messages, converged = out.steps, messages + out.messages, out.converged
    if empty.any():
        log.warning("%d subjects have no opiners; their estimates are 0", int(empty.sum()))
    return AggregationResult(variant, subjects, est, steps, messages, converged, subjects[empty],
                             feedback_messages=fb_messages, outcome=out)


def calibrated_single(graph: Graph, trust: TrustMatrix, weights: WeightParams, subject: int,
                      initiator: int | None = None, params: GossipParams | None = None,
                      churn: ChurnModel | None = None, rng=None, cache: FeedbackCache | None = None,
                      feedback_trust: TrustMatrix | None = None,
                      population: Population = Population.OPINING,
                      diagnostics: bool = False) -> AggregationResult:
    """Each node's globally calibrated local reputation for ``subject``.

    ``feedback_trust`` supplies the values neighbours exchange directly and
    the evaluator's own confidence weights; it defaults to ``trust``.  Pass a
    cache from a previous round to model repeated rounds.
    """
    inits = None if initiator is None else [initiator]
    return _calibrated(graph, trust, weights, [subject], Variant.CALIBRATED_SINGLE, params, churn,
                       rng, cache, feedback_trust, population, inits, diagnostics)


def calibrated_all(graph: Graph, trust: TrustMatrix, weights: WeightParams,
                   params: GossipParams | None = None, churn: ChurnModel | None = None, rng=None,
                   cache: FeedbackCache | None = None, feedback_trust: TrustMatrix | None = None,
                   subjects=None, population: Population = Population.OPINING,
                   diagnostics: bool = False) -> AggregationResult:
    subjects = np.arange(trust.n) if subjects is None else subjects
    return _calibrated(graph, trust, weights, subjects, Variant.CALIBRATED_ALL, params, churn, rng,
                       cache, feedback_trust, population, diagnostics=diagnostics)


def aggregate(variant: Variant | str, graph: Graph, trust: TrustMatrix, *, subject: int = 0,
              weights: WeightParams | None = None, **kw) -> AggregationResult:
    variant = Variant(variant)
    weights = weights or WeightParams()
    if variant is Variant.GLOBAL_SINGLE:
        kw.pop("cache", None), kw.pop("feedback_trust", None)
        return global_single(graph, trust, subject, **kw)
    if variant is Variant.GLOBAL_ALL:
        kw.pop("cache", None), kw.pop("feedback_trust", None)
        return global_all(graph, trust, **kw)
    if variant is Variant.CALIBRATED_SINGLE:
        return calibrated_single(graph, trust, weights, subject, **kw)
    return calibrated_all(graph, trust, weights, **kw)
