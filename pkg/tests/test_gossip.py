import numpy as np
import pytest

from diffgossip import gossip, pa_graph
from diffgossip.gossip import (
    ChurnModel,
    GossipParams,
    init_counted,
    init_scalar,
    init_vector,
    run,
    run_counted,
    run_vector,
    step,
)
from diffgossip.pa_graph import Graph
from diffgossip.trust import Population, oracle_global

from conftest import star

PAIR = Graph.from_edges(2, [(0, 1)])


def test_pair_averages_in_one_step():
    st = init_scalar(PAIR, [0.0, 1.0], [1, 1])
    res = step(st, PAIR, ChurnModel(), np.random.default_rng(0), GossipParams())
    assert np.allclose(res.state.y[:, 0], 0.5) and np.allclose(res.state.g[:, 0], 1.0)
    assert np.allclose(res.state.ratios()[:, 0], 0.5)
    assert res.messages == 2


def test_pair_fixed_point():
    st = init_scalar(PAIR, [0.3, 0.3], [1, 1])
    out = run(st, PAIR, rng=1)
    assert np.allclose(out.ratios, 0.3) and out.converged


def test_all_zero_values_stay_zero(pa100):
    st = init_scalar(pa100, np.zeros(100), np.ones(100))
    out = run(st, pa100, rng=2)
    assert np.all(out.ratios == 0)


def test_init_rejects_fractional_weight():
    with pytest.raises(ValueError):
        init_scalar(PAIR, [0.1, 0.2], [0.5, 1])
    with pytest.raises(ValueError):
        init_scalar(PAIR, [np.nan, 0.2], [1, 1])
    with pytest.raises(ValueError):
        init_counted(PAIR, [0.1, 0.2], [1, 0], [-1, 0])


def test_init_marks_undefined_ratio():
    st = init_scalar(PAIR, [0.4, 0.0], [1, 0])
    assert st.u[0, 0] == 0.4 and np.isnan(st.u[1, 0])
    assert np.all(st.cs == 0)
    assert st.ratios()[1, 0] == 0.0


def test_churn_validation():
    for p in (-0.1, 1.0):
        with pytest.raises(ValueError):
            ChurnModel(p)


def test_near_total_loss_keeps_mass_at_senders(pa100):
    rng = np.random.default_rng(3)
    st = init_scalar(pa100, rng.random(100), np.ones(100))
    res = step(st, pa100, ChurnModel(0.999), np.random.default_rng(4), GossipParams())
    before, after = st.mass(), res.mass
    assert np.allclose(before, after, rtol=1e-12, atol=0)
    kept = np.isclose(res.state.ratios()[:, 0], st.ratios()[:, 0], rtol=0, atol=1e-12)
    assert kept.mean() > 0.9


def _pa_start(graph, seed, all_weight=True):
    rng = np.random.default_rng(seed)
    t = rng.random(graph.node_count)
    opine = rng.random(graph.node_count) < 0.3
    y = np.where(opine, t, 0.0)
    g = np.ones(graph.node_count) if all_weight else opine.astype(float)
    return y, g, opine


@pytest.mark.parametrize("all_weight", [True, False])
def test_run_matches_average(pa100, all_weight):
    y, g, opine = _pa_start(pa100, 5, all_weight)
    out = run(init_scalar(pa100, y, g), pa100, params=GossipParams(1e-4, 3), rng=6)
    target = y.sum() / (100 if all_weight else opine.sum())
    assert out.converged
    assert np.abs(out.ratios[:, 0] - target).max() <= 1e-4 * (1 + abs(target))


def test_identical_values_converge_after_csl_plus_one_steps():
    s = star(6)
    for csl in (1, 3, 5):
        out = run(init_scalar(s, np.full(7, 0.25), np.ones(7)), s, params=GossipParams(csl=csl), rng=0)
        assert out.converged and out.steps == csl + 1


def test_step_limit_reports_non_convergence(pa100):
    y, g, _ = _pa_start(pa100, 1)
    out = run(init_scalar(pa100, y, g), pa100, params=GossipParams(1e-9, 5, max_steps=3), rng=0)
    assert not out.converged and out.steps == 3


def test_counted_examples():
    n = 10
    graph = pa_graph.generate(n, 2, 8)
    opiners = np.arange(n) < 5
    y = np.where(opiners, 0.5, 0.0)
    g = np.zeros(n)
    g[0] = 1
    out = run_counted(init_counted(graph, y, g, opiners.astype(float)), graph, rng=1)
    assert np.allclose(out.count_ratios, 5, atol=1e-3)
    assert np.allclose(out.ratios, 2.5, atol=1e-3)

    out = run_counted(init_counted(graph, np.zeros(n), g, np.zeros(n)), graph, rng=1)
    assert np.all(out.count_ratios == 0)

    out = run_counted(init_counted(graph, np.full(n, 0.2), np.ones(n), np.ones(n)), graph, rng=1)
    assert np.allclose(out.count_ratios, 1.0)


def test_run_counted_needs_count_channel():
    with pytest.raises(ValueError):
        run_counted(init_scalar(PAIR, [0, 1], [1, 1]), PAIR)


def test_vector_of_one_equals_counted(pa100):
    y, _, opine = _pa_start(pa100, 9)
    g = np.zeros(100)
    g[3] = 1
    a = run_counted(init_counted(pa100, y, g, opine.astype(float)), pa100, rng=12)
    b = run_vector(init_vector(pa100, y[:, None], g[:, None], opine[:, None].astype(float)), pa100, rng=12)
    assert a.steps == b.steps and a.messages == b.messages
    assert np.array_equal(a.ratios, b.ratios) and np.array_equal(a.count_ratios, b.count_ratios)


def test_vector_components_follow_scalar_trajectories(pa100):
    rng = np.random.default_rng(0)
    y = rng.random((100, 2))
    g = (rng.random((100, 2)) < 0.5).astype(float)
    g[0] = 1
    params = GossipParams()
    vec = init_vector(pa100, y, g)
    singles = [init_scalar(pa100, y[:, s], g[:, s]) for s in range(2)]
    r_vec = np.random.default_rng(77)
    r_s = [np.random.default_rng(77) for _ in range(2)]
    for _ in range(25):
        vec = step(vec, pa100, ChurnModel(0.1), r_vec, params).state
        singles = [step(st, pa100, ChurnModel(0.1), r, params).state for st, r in zip(singles, r_s)]
    for s in range(2):
        assert np.array_equal(vec.ratios()[:, s], singles[s].ratios()[:, 0])


def test_fused_step_matches_sparse_product(pa100):
    rng = np.random.default_rng(1)
    y = rng.random((100, 4))
    g = (rng.random((100, 4)) < 0.4).astype(float)
    c = (rng.random((100, 4)) < 0.5).astype(float)
    st = init_vector(pa100, y, g, c)
    res = step(st, pa100, ChurnModel(0.2), np.random.default_rng(5), GossipParams())
    T = res.transfer
    assert np.allclose(np.asarray(T.sum(axis=0)).ravel(), 1.0)
    for a, b in ((res.state.y, T @ y), (res.state.g, T @ g), (res.state.count, T @ c)):
        assert np.allclose(a, b, rtol=1e-14, atol=1e-15)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(res.state.g > 0, res.state.y / res.state.g, np.nan)
        d = np.maximum(np.abs(r - st.u), np.abs(res.state.count / res.state.g - st.u_count))
    assert res.max_ratio_delta == pytest.approx(np.nanmax(d), rel=1e-12)


def test_recorded_messages_carry_equal_shares():
    s = star(4)
    st = init_counted(s, [0.8, 0.1, 0.2, 0.3, 0.4], [1, 1, 0, 1, 0], [1, 1, 0, 1, 0])
    record = []
    res = step(st, s, ChurnModel(), np.random.default_rng(0), GossipParams(), record)
    assert len(record) == res.messages == 8
    k = s.push_counts
    for msg in record:
        (subject, ys, gs, cs), = msg.payload
        f = 1.0 / (k[msg.sender] + 1)
        assert subject == 0
        assert ys == pytest.approx(st.y[msg.sender, 0] * f)
        assert gs == pytest.approx(st.g[msg.sender, 0] * f)
        assert cs == pytest.approx(st.count[msg.sender, 0] * f)
    center = [m.recipient for m in record if m.sender == 0]
    assert sorted(center) == [1, 2, 3, 4]


@pytest.mark.parametrize("p_loss", [0.0, 0.1, 0.3])
def test_mass_conserved_every_step(pa100, p_loss):
    rng = np.random.default_rng(2)
    y = rng.random((100, 3))
    g = np.zeros((100, 3))
    g[rng.integers(0, 100, 3), np.arange(3)] = 1
    c = (rng.random((100, 3)) < 0.3).astype(float)
    out = run_vector(init_vector(pa100, y, g, c), pa100, ChurnModel(p_loss), rng=3)
    assert len(out.mass_trace) == out.steps + 1
    assert out.max_mass_drift().max() <= 1e-9


def test_message_accounting(pa100):
    y, g, _ = _pa_start(pa100, 4)
    out = run(init_scalar(pa100, y, g), pa100, ChurnModel(0.2), rng=8)
    assert out.degree_messages == 2 * pa100.edge_count
    assert out.gossip_messages == sum(r["messages"] for r in out.trace[1:])
    assert out.messages == sum(r["messages"] for r in out.trace)
    # every node keeps pushing k_i per round until the network terminates
    assert out.gossip_messages == out.steps * pa100.push_counts.sum()


def test_determinism(pa100):
    y, g, _ = _pa_start(pa100, 4)
    a = run(init_scalar(pa100, y, g), pa100, ChurnModel(0.1), rng=21)
    b = run(init_scalar(pa100, y, g), pa100, ChurnModel(0.1), rng=21)
    assert a.steps == b.steps and np.array_equal(a.ratios, b.ratios)
    assert [r["max_ratio_delta"] for r in a.trace] == [r["max_ratio_delta"] for r in b.trace]


def test_consecutive_counter_bounded(pa100):
    y, g, _ = _pa_start(pa100, 4)
    st = init_scalar(pa100, y, g)
    params = GossipParams(1e-3, 2)
    rng = np.random.default_rng(0)
    for _ in range(80):
        st = step(st, pa100, ChurnModel(), rng, params).state
        assert st.cs.max() <= params.csl + 1


def test_silenced_nodes_still_conserve_mass():
    s = star(5)
    st = init_scalar(s, np.linspace(0, 1, 6), np.ones(6))
    out = run(st, s, params=GossipParams(1e-6, 2, stop_when_done=True), rng=0)
    assert out.max_mass_drift().max() <= 1e-12


def test_diagnostics_potential(pa100):
    y, _, _ = _pa_start(pa100, 3)
    out = run(init_scalar(pa100, y, np.ones(100)), pa100, rng=4, diagnostics=True)
    d = out.diagnostics
    assert d.psi_trace[0] == 99.0
    assert out.trace[0]["psi"] == 99.0
    assert len(d.psi_trace) == out.steps + 1
    assert np.allclose(d.contribution.sum(axis=1), 1.0, atol=1e-9)
    assert d.psi_trace[-1] < 1e-3


def test_diagnostics_size_limit():
    g = pa_graph.generate(gossip.DIAGNOSTICS_MAX_N + 1, 2, 0)
    st = init_scalar(g, np.zeros(g.node_count), np.ones(g.node_count))
    with pytest.raises(ValueError):
        run(st, g, params=GossipParams(max_steps=1), diagnostics=True)


def test_global_mean_against_trust_oracle(pa100, trust100):
    values, mask = trust100.block([7])
    out = run(init_scalar(pa100, values[:, 0], mask[:, 0].astype(float)), pa100, rng=0)
    assert np.abs(out.ratios - oracle_global(trust100, 7, Population.OPINING)).max() <= 1e-4


def test_potential_matches_direct_form(pa100):
    assert gossip.potential(np.eye(500)) == 499.0
    y, _, _ = _pa_start(pa100, 3)
    st = init_scalar(pa100, y, np.ones(100))
    holder = np.eye(100)
    rng = np.random.default_rng(0)
    for _ in range(40):
        res = step(st, pa100, ChurnModel(), rng, GossipParams())
        st, holder = res.state, np.asarray(res.transfer @ holder)
        g = holder.sum(axis=1)
        direct = ((holder - g[:, None] / 100) ** 2).sum()
        assert gossip.potential(holder) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_subject_rules_on_one_lagging_subject():
    xi = 1e-4
    st = init_vector(PAIR, [[0.5, 0.3], [0.5, 0.3]], [[1, 1], [1, 1]])
    st.u[:, 0] -= 1.5 * xi  # subject 0 moves by 1.5 xi, subject 1 is still
    for rule, passes in (("sum", True), ("max", False)):
        res = step(st, PAIR, ChurnModel(), np.random.default_rng(0), GossipParams(xi, subject_rule=rule))
        assert res.converged.all() == passes


def test_max_rule_runs_at_least_as_long(pa100):
    rng = np.random.default_rng(4)
    y = rng.random((100, 30))
    g = (rng.random((100, 30)) < 0.1).astype(float)
    g[0] = 1
    out = {rule: run_vector(init_vector(pa100, y, g), pa100, params=GossipParams(subject_rule=rule), rng=2)
           for rule in ("sum", "max")}
    assert out["max"].steps >= out["sum"].steps
    assert out["max"].converged and out["sum"].converged
    with pytest.raises(ValueError):
        GossipParams(subject_rule="mean")
