"""Synchronous differential push gossip (push-sum with per-node fan-out k_i).

All variants share one engine.  State arrays have shape ``(N, S)`` where S is
the number of subjects gossiped together; the scalar variants are S == 1.
Every round builds a column-stochastic transfer matrix T (T[dst, src] is the
fraction of src's mass delivered to dst) and applies it to every channel, so
y, g and count are conserved by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .pa_graph import Graph

DIAGNOSTICS_MAX_N = 2000
_EMPTY = np.zeros((0, 0))


@dataclass(frozen=True)
class ChurnModel:
    """Each neighbour-bound push is lost with probability ``p_loss``.

    A lost share goes back to its sender in the same round.
    """

    p_loss: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_loss < 1.0:
            raise ValueError(f"p_loss must lie in [0, 1), got {self.p_loss}")


SUBJECT_RULES = ("max", "sum")


@dataclass(frozen=True)
class GossipParams:
    xi: float = 1e-4
    csl: int = 5
    max_steps: int | None = None
    # converged nodes go silent; leaves behind a silent hub then never converge
    stop_when_done: bool = False
    # vector test: every subject's change <= xi ("max") or their sum <= S*xi ("sum")
    subject_rule: str = "max"

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"xi must be > 0, got {self.xi}")
        if self.csl < 1:
            raise ValueError(f"csl must be >= 1, got {self.csl}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.subject_rule not in SUBJECT_RULES:
            raise ValueError(f"subject_rule must be one of {SUBJECT_RULES}, got {self.subject_rule!r}")

    def step_limit(self, n: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return default_max_steps(n)


def default_max_steps(n: int) -> int:
    return int(10 * math.log2(max(n, 2)) ** 2) + 200


@dataclass(frozen=True)
class GossipMessage:
    sender: int
    recipient: int
    # (subject, y share, g share, count share)
    payload: tuple[tuple[int, float, float, float], ...]
    lost: bool = False


@dataclass
class GossipState:
    y: np.ndarray
    g: np.ndarray
    count: np.ndarray | None
    u: np.ndarray
    u_count: np.ndarray | None
    cs: np.ndarray
    subjects: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_subjects(self) -> int:
        return self.y.shape[1]

    def ratios(self) -> np.ndarray:
        return _safe_ratio(self.y, self.g)

    def count_ratios(self) -> np.ndarray | None:
        return None if self.count is None else _safe_ratio(self.count, self.g)

    def mass(self) -> np.ndarray:
        """Per-subject totals, shape (3, S): rows are y, g, count (count row is 0 if absent)."""
        c = self.count.sum(axis=0) if self.count is not None else np.zeros(self.n_subjects)
        return np.vstack([self.y.sum(axis=0), self.g.sum(axis=0), c])

    def copy(self) -> "GossipState":
        return GossipState(
            self.y.copy(),
            self.g.copy(),
            None if self.count is None else self.count.copy(),
            self.u.copy(),
            None if self.u_count is None else self.u_count.copy(),
            self.cs.copy(),
            self.subjects.copy(),
        )


def _safe_ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def _defined_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r[den <= 0] = np.nan
    return r


def init_vector(graph: Graph, y, g, count=None, subjects=None) -> GossipState:
    """State for S subjects at once; y, g, count have shape (N, S)."""
    y = np.array(y, dtype=float, order="C")
    g = np.array(g, dtype=float, order="C")
    if y.ndim == 1:
        y, g = y[:, None], g[:, None]
    y, g = np.ascontiguousarray(y), np.ascontiguousarray(g)
    n = graph.node_count
    if y.shape[0] != n or g.shape != y.shape:
        raise ValueError(f"initial arrays must have shape ({n}, S), got {y.shape} and {g.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("initial gossip values must be finite")
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("initial gossip weights must be 0 or 1")
    if count is not None:
        count = np.array(count, dtype=float, order="C")
        if count.ndim == 1:
            count = count[:, None]
        count = np.ascontiguousarray(count)
        if count.shape != y.shape:
            raise ValueError("count must have the same shape as y")
        if np.any(count < 0) or not np.all(np.isfinite(count)):
            raise ValueError("initial counts must be finite and >= 0")
    if subjects is None:
        subjects = np.arange(y.shape[1])
    return GossipState(
        y=y,
        g=g,
        count=count,
        u=_defined_ratio(y, g),
        u_count=None if count is None else _defined_ratio(count, g),
        cs=np.zeros(n, dtype=np.int64),
        subjects=np.asarray(subjects, dtype=np.int64),
    )


def init_scalar(graph: Graph, y, g, subject: int = 0) -> GossipState:
    return init_vector(graph, np.asarray(y, float)[:, None], np.asarray(g, float)[:, None],
                       subjects=[subject])


def init_counted(graph: Graph, y, g, count, subject: int = 0) -> GossipState:
    return init_vector(
        graph,
        np.asarray(y, float)[:, None],
        np.asarray(g, float)[:, None],
        np.asarray(count, float)[:, None],
        subjects=[subject],
    )


@dataclass
class Pushes:
    src: np.ndarray
    dst: np.ndarray
    lost: np.ndarray
    share: np.ndarray  # per-node fraction 1/(k+1), 1 for non-pushing nodes

    def transfer_matrix(self, n: int) -> sp.csr_matrix:
        delivered = ~self.lost
        n_lost = np.bincount(self.src[self.lost], minlength=n)
        keep = self.share * (1 + n_lost)
        rows = np.concatenate([self.dst[delivered], np.arange(n)])
        cols = np.concatenate([self.src[delivered], np.arange(n)])
        data = np.concatenate([self.share[self.src[delivered]], keep])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def choose_pushes(graph: Graph, active: np.ndarray, churn: ChurnModel, rng) -> Pushes:
    """Pick k_i distinct uniform neighbours for each active node, then apply loss."""
    n = graph.node_count
    k = graph.push_counts
    deg = graph.degree
    pushing = active & (k > 0)

    u = rng.random(n)
    single = np.flatnonzero(pushing & (k == 1))
    pos = np.minimum((u[single] * deg[single]).astype(np.int64), deg[single] - 1)
    src = [single]
    dst = [graph.indices[graph.indptr[single] + pos]]

    multi = np.flatnonzero(pushing & (k > 1))
    if multi.size:
        d = deg[multi]
        group_start = np.cumsum(d) - d
        owner = np.repeat(np.arange(multi.size), d)
        offset = np.arange(int(d.sum())) - np.repeat(group_start, d)
        slot = np.repeat(graph.indptr[multi], d) + offset
        keys = rng.random(owner.size)
        # sorting by owner + key in [0, 1) shuffles slots within each node's block
        order = np.argsort(owner + keys, kind="stable")
        pick = offset < k[multi][owner]
        src.append(multi[owner[pick]])
        dst.append(graph.indices[slot[order][pick]])

    src = np.concatenate(src)
    dst = np.concatenate(dst)
    if churn.p_loss > 0 and src.size:
        lost = rng.random(src.size) < churn.p_loss
    else:
        lost = np.zeros(src.size, dtype=bool)
    share = np.ones(n)
    share[pushing] = 1.0 / (k[pushing] + 1)
    return Pushes(src, dst, lost, share)


@numba.njit(cache=True)
def _mix(indptr, indices, data, y, g, count, u, u_count, has_count):
    """Fused T @ channels, ratio update and per-node convergence delta.

    Returns new (y, g, count, ratio, count_ratio), the per-node sum and max
    over subjects of |ratio change| (max over channels), whether any subject was
    comparable at the node, the largest single change, and per-subject
    channel totals.
    """
    n, s_count = y.shape
    ny = np.zeros((n, s_count))
    ng = np.zeros((n, s_count))
    nc = np.zeros(count.shape)
    r = np.empty((n, s_count))
    rc = np.empty(count.shape)
    per_node = np.zeros(n)
    worst = np.zeros(n)
    comparable = np.zeros(n, dtype=np.bool_)
    max_delta = 0.0
    mass = np.zeros((3, s_count))
    for i in range(n):
        for kk in range(indptr[i], indptr[i + 1]):
            src = indices[kk]
            w = data[kk]
            for s in range(s_count):
                ny[i, s] += w * y[src, s]
                ng[i, s] += w * g[src, s]
                if has_count:
                    nc[i, s] += w * count[src, s]
        for s in range(s_count):
            gg = ng[i, s]
            mass[0, s] += ny[i, s]
            mass[1, s] += gg
            if has_count:
                mass[2, s] += nc[i, s]
            if gg > 0:
                rv = ny[i, s] / gg
                r[i, s] = rv
                d = abs(rv - u[i, s])
                if has_count:
                    rcv = nc[i, s] / gg
                    rc[i, s] = rcv
                    dc = abs(rcv - u_count[i, s])
                    if dc > d:
                        d = dc
                if d == d:
                    per_node[i] += d
                    if d > worst[i]:
                        worst[i] = d
                    comparable[i] = True
                    if d > max_delta:
                        max_delta = d
            else:
                r[i, s] = np.nan
                if has_count:
                    rc[i, s] = np.nan
    return ny, ng, nc, r, rc, per_node, worst, comparable, max_delta, mass


@dataclass
class StepResult:
    state: GossipState
    messages: int
    converged: np.ndarray  # nodes whose cs incremented this step
    max_ratio_delta: float
    transfer: sp.csr_matrix
    mass: np.ndarray  # (3, S) channel totals after the step


def step(
    state: GossipState,
    graph: Graph,
    churn: ChurnModel,
    rng,
    params: GossipParams,
    record: list | None = None,
) -> StepResult:
    """One synchronous round: split, push, sum, then convergence bookkeeping.

    Nodes past csl post-convergence steps keep pushing until the whole
    network is done, unless ``params.stop_when_done`` silences them (they
    then keep their mass and only absorb incoming shares).  ``record``
    (small graphs only) receives one GossipMessage per neighbour-bound push.
    """
    n = state.n
    active = state.cs <= params.csl
    senders = active if params.stop_when_done else np.ones(n, dtype=bool)
    pushes = choose_pushes(graph, senders, churn, rng)
    if record is not None:
        record.extend(_materialise(state, pushes))
    T = pushes.transfer_matrix(n)

    has_count = state.count is not None
    # nan marks an undefined ratio (g == 0); such subjects do not enter the delta
    y, g, count, r, r_count, per_node, worst, comparable_any, max_delta, mass = _mix(
        T.indptr, T.indices, T.data, state.y, state.g,
        state.count if has_count else _EMPTY, state.u,
        state.u_count if has_count else _EMPTY, has_count,
    )
    if not has_count:
        count = r_count = None

    received = np.zeros(n, dtype=bool)
    received[pushes.dst[~pushes.lost]] = True

    S = state.n_subjects
    testable = received & comparable_any & active
    ok = (worst <= params.xi) if params.subject_rule == "max" else (per_node <= S * params.xi)
    cs = state.cs.copy()
    inc = testable & ok
    cs[inc] += 1
    cs[testable & ~ok] = 0

    new = GossipState(y, g, count, r, r_count, cs, state.subjects)
    return StepResult(new, int(pushes.src.size), inc, float(max_delta), T, mass)


def _materialise(state: GossipState, pushes: Pushes) -> list[GossipMessage]:
    out = []
    for s, d, lost in zip(pushes.src, pushes.dst, pushes.lost):
        f = pushes.share[s]
        payload = tuple(
            (
                int(state.subjects[j]),
                float(state.y[s, j] * f),
                float(state.g[s, j] * f),
                float(state.count[s, j] * f) if state.count is not None else 0.0,
            )
            for j in range(state.n_subjects)
        )
        out.append(GossipMessage(int(s), int(d), payload, bool(lost)))
    return out


@dataclass
class DiffusionDiagnostics:
    """Per-origin contribution tracking; ``contribution[i, j]`` is origin i's share at node j."""

    contribution: np.ndarray
    psi_trace: list[float] = field(default_factory=list)


def potential(holder_by_origin: np.ndarray) -> float:
    """psi = sum over holders j and origins i of (c_ij - g_j / N)^2.

    Evaluated as sum(c^2) - sum(g^2) / N, which is the same quantity and is
    exact (N - 1) for the identity start, where the direct form picks up
    rounding from the 1/N terms.
    """
    n = holder_by_origin.shape[1]
    g = holder_by_origin.sum(axis=1)
    return float((holder_by_origin**2).sum() - (g**2).sum() / n)


@dataclass
class GossipOutcome:
    ratios: np.ndarray
    count_ratios: np.ndarray | None
    steps: int
    messages: int
    gossip_messages: int
    degree_messages: int
    converged: bool
    state: GossipState
    mass_trace: list[np.ndarray]
    trace: list[dict]
    diagnostics: DiffusionDiagnostics | None = None

    def max_mass_drift(self) -> np.ndarray:
        """Largest relative deviation of sum(y), sum(g), sum(count) from their start values."""
        base = self.mass_trace[0]
        scale = np.where(base != 0, np.abs(base), 1.0)
        drift = np.zeros(3)
        for m in self.mass_trace[1:]:
            drift = np.maximum(drift, (np.abs(m - base) / scale).max(axis=1))
        return drift


def run(
    state: GossipState,
    graph: Graph,
    churn: ChurnModel | None = None,
    params: GossipParams | None = None,
    rng=None,
    diagnostics: bool = False,
) -> GossipOutcome:
    """Iterate rounds until every node has done csl post-convergence steps.

    Hitting the step limit returns ``converged=False``.  Message totals count
    neighbour-bound pushes plus the one-off degree broadcast (2|E|); pushes a
    node makes to itself are free.
    """
    churn = churn or ChurnModel()
    params = params or GossipParams()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = state.n
    limit = params.step_limit(n)

    diag = None
    if diagnostics:
        if n > DIAGNOSTICS_MAX_N:
            raise ValueError(f"diagnostics mode is limited to N <= {DIAGNOSTICS_MAX_N}")
        holder = np.eye(n)
        diag = DiffusionDiagnostics(holder.T, [potential(holder)])

    degree_msgs = 2 * graph.edge_count
    mass = [state.mass()]
    # step 0 carries the one-off degree broadcast, so trace messages sum to the total
    trace = [{"step": 0, "max_ratio_delta": None, "messages": degree_msgs,
              "psi": diag.psi_trace[0] if diag is not None else None}]
    pushes_total = 0
    steps = 0
    while steps < limit and not np.all(state.cs > params.csl):
        res = step(state, graph, churn, rng, params)
        state = res.state
        steps += 1
        pushes_total += res.messages
        mass.append(res.mass)
        psi = None
        if diag is not None:
            holder = np.asarray(res.transfer @ holder)
            psi = potential(holder)
            diag.psi_trace.append(psi)
        trace.append(
            {"step": steps, "max_ratio_delta": res.max_ratio_delta, "messages": res.messages, "psi": psi}
        )
    if diag is not None:
        diag.contribution = holder.T

    return GossipOutcome(
        ratios=state.ratios(),
        count_ratios=state.count_ratios(),
        steps=steps,
        messages=pushes_total + degree_msgs,
        gossip_messages=pushes_total,
        degree_messages=degree_msgs,
        converged=bool(np.all(state.cs > params.csl)),
        state=state,
        mass_trace=mass,
        trace=trace,
        diagnostics=diag,
    )


def run_counted(state, graph, churn=None, params=None, rng=None, diagnostics=False) -> GossipOutcome:
    if state.count is None:
        raise ValueError("run_counted needs a state with a count channel")
    return run(state, graph, churn, params, rng, diagnostics)


def run_vector(state, graph, churn=None, params=None, rng=None, diagnostics=False) -> GossipOutcome:
    return run(state, graph, churn, params, rng, diagnostics)
