"""Config-driven experiment runner and sweep.

A run writes into ``cfg.output``:

* report.csv: one row, the full config echo plus the run's metrics
* results.csv: variant,node,subject,estimate,oracle,abs_error,steps,messages
* trace.csv (optional): step,max_ratio_delta,messages,psi

Every file starts with a ``# generated <timestamp>`` line; everything after
it depends only on the config.
"""

from __future__ import annotations

import csv
import datetime as _dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pa_graph
from .adversary import CollusionConfig, apply_collusion
from .aggregation import AggregationResult, FeedbackCache, Variant, aggregate
from .config import ConfigError, SimConfig
from .gossip import ChurnModel, GossipParams
from .metrics import MetricsReport, average_rms_error
from .scenarios import TrustScenario, generate_trust
from .trust import Population, TrustMatrix, WeightParams, oracle_calibrated_matrix, oracle_global_matrix

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("variant", "node", "subject", "estimate", "oracle", "abs_error", "steps", "messages")
TRACE_COLUMNS = ("step", "max_ratio_delta", "messages", "psi")
# the dense calibrated oracle is skipped above this many (node, subject) cells
ORACLE_MAX_CELLS = 25_000_000


@dataclass
class ExperimentResult:
    report: MetricsReport
    status: str  # converged | not_converged
    result: AggregationResult
    oracle: np.ndarray | None
    files: list[Path] = field(default_factory=list)


def seed_streams(seed: int) -> tuple[int, int, int]:
    """Independent (graph, trust, gossip) seeds derived from the run seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def build_inputs(cfg: SimConfig) -> tuple[pa_graph.Graph, TrustMatrix]:
    graph_seed, trust_seed, _ = seed_streams(cfg.seed)
    if cfg.graph_file:
        graph = pa_graph.read_edge_list(cfg.graph_file)
    else:
        graph = pa_graph.generate(cfg.n, cfg.m, graph_seed)
    if cfg.subject >= graph.node_count:
        raise ConfigError("subject", f"must be < {graph.node_count}, got {cfg.subject}")
    if cfg.trust_file:
        trust = TrustMatrix.read(cfg.trust_file)
        if trust.n != graph.node_count:
            raise ConfigError("trust_file", f"has {trust.n} nodes, graph has {graph.node_count}")
    else:
        scenario = TrustScenario(cfg.floor, cfg.adjacency_weight, cfg.common_weight)
        subjects = [cfg.subject] if _is_single(cfg) else None
        trust = generate_trust(graph, trust_seed, scenario, subjects)
    return graph, trust


def _is_single(cfg: SimConfig) -> bool:
    return Variant(cfg.variant) in (Variant.GLOBAL_SINGLE, Variant.CALIBRATED_SINGLE)


def _aggregate(cfg, graph, trust, feedback_trust=None):
    _, _, gossip_seed = seed_streams(cfg.seed)
    params = GossipParams(cfg.xi, cfg.csl, cfg.max_steps or None, cfg.stop_when_done,
                          cfg.subject_rule)
    kw = dict(params=params, churn=ChurnModel(cfg.p_loss), rng=gossip_seed,
              population=Population(cfg.population), diagnostics=cfg.diagnostics)
    variant = Variant(cfg.variant)
    if variant in (Variant.CALIBRATED_SINGLE, Variant.CALIBRATED_ALL):
        kw.update(cache=FeedbackCache(graph.node_count, cfg.delta), feedback_trust=feedback_trust)
    return aggregate(variant, graph, trust, subject=cfg.subject,
                     weights=WeightParams(cfg.a, cfg.b), **kw)


def _oracle(cfg, graph, trust, subjects, feedback_trust=None) -> np.ndarray | None:
    pop = Population(cfg.population)
    n = graph.node_count
    if Variant(cfg.variant) in (Variant.GLOBAL_SINGLE, Variant.GLOBAL_ALL):
        return np.broadcast_to(oracle_global_matrix(trust, pop)[subjects], (n, len(subjects)))
    if n * len(subjects) > ORACLE_MAX_CELLS:
        log.warning("calibrated oracle skipped: %d x %d cells", n, len(subjects))
        return None
    return oracle_calibrated_matrix(trust, graph, WeightParams(cfg.a, cfg.b), pop, subjects,
                                    feedback=feedback_trust)


def execute(cfg: SimConfig) -> ExperimentResult:
    """Run the configured variant end to end without writing files.

    With a colluder fraction > 0 the run is repeated on the colluded trust
    matrix with the same seeds; the reported estimates are the colluded ones
    and avg_rms_error compares them against the clean run.  Colluders give
    honest feedback to their neighbours unless ``poison_feedback`` is set.
    """
    cfg.validate()
    graph, trust = build_inputs(cfg)
    feedback_trust = None
    rms = None
    if cfg.collusion_fraction > 0:
        clean = _aggregate(cfg, graph, trust)
        colluded = apply_collusion(trust, CollusionConfig(cfg.collusion_fraction, cfg.group_size,
                                                          cfg.collusion_seed))
        feedback_trust = colluded if cfg.poison_feedback else trust
        res = _aggregate(cfg, graph, colluded, feedback_trust)
        rms = average_rms_error(res.estimates, clean.estimates)
        trust = colluded
    else:
        res = _aggregate(cfg, graph, trust)

    oracle = _oracle(cfg, graph, trust, res.subjects, feedback_trust)
    max_err = None if oracle is None else float(np.abs(res.estimates - oracle).max())
    psi = None
    if res.outcome is not None and res.outcome.diagnostics is not None:
        psi = list(res.outcome.diagnostics.psi_trace)
    report = MetricsReport(
        n=graph.node_count,
        steps_to_converge=res.steps,
        messages_total=res.messages,
        converged=res.converged,
        avg_rms_error=None if rms is None else rms.value,
        rms_skipped=None if rms is None else rms.skipped,
        max_abs_error=max_err,
        psi_trace=psi,
    )
    status = "converged" if res.converged else "not_converged"
    return ExperimentResult(report, status, res, oracle)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _open_csv(path: Path, header, timestamp: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    fh.write(f"# generated {timestamp}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def report_row(cfg: SimConfig, ex: ExperimentResult | None, status: str, error: str = "") -> dict:
    row = dict(cfg.echo())
    row["status"] = status
    row.update(ex.report.as_row() if ex else dict.fromkeys(MetricsReport(0, 0, 0).as_row()))
    row["error"] = error
    return row


def write_report(path: Path, rows: list[dict], timestamp: str) -> Path:
    fh, w = _open_csv(path, list(rows[0]), timestamp)
    with fh:
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])
    return path


def write_results(path: Path, ex: ExperimentResult, timestamp: str) -> Path:
    res = ex.result
    fh, w = _open_csv(path, RESULT_COLUMNS, timestamp)
    n, s = res.estimates.shape
    variant = res.variant.value
    with fh:
        for node in range(n):
            for k in range(s):
                est = float(res.estimates[node, k])
                orc = None if ex.oracle is None else float(ex.oracle[node, k])
                err = None if orc is None else abs(est - orc)
                w.writerow([variant, node, int(res.subjects[k]), _fmt(est), _fmt(orc), _fmt(err),
                            res.steps, res.messages])
    return path


def write_trace(path: Path, ex: ExperimentResult, timestamp: str) -> Path:
    fh, w = _open_csv(path, TRACE_COLUMNS, timestamp)
    trace = ex.result.outcome.trace if ex.result.outcome is not None else []
    with fh:
        for rec in trace:
            w.writerow([_fmt(rec[c]) for c in TRACE_COLUMNS])
    return path


def run_experiment(cfg: SimConfig, timestamp: str | None = None) -> ExperimentResult:
    """Execute ``cfg`` and write report.csv, results.csv and trace.csv as configured."""
    timestamp = timestamp or _timestamp()
    ex = execute(cfg)
    out = Path(cfg.output)
    ex.files.append(write_report(out / "report.csv", [report_row(cfg, ex, ex.status)], timestamp))
    if cfg.results:
        ex.files.append(write_results(out / "results.csv", ex, timestamp))
    if cfg.trace:
        ex.files.append(write_trace(out / "trace.csv", ex, timestamp))
    return ex


@dataclass
class SweepResult:
    rows: list[dict]
    failed: list[int]  # cell indices that raised or did not converge
    path: Path | None = None


def sweep(cfg: SimConfig, timestamp: str | None = None, write: bool = True) -> SweepResult:
    """Run every cell of the config's sweep; failures are recorded and skipped past."""
    timestamp = timestamp or _timestamp()
    rows, failed = [], []
    for index, cell in cfg.cells():
        try:
            ex = execute(cell)
            row = report_row(cell, ex, ex.status)
            if not ex.report.converged:
                failed.append(index)
        except ValueError as exc:
            log.warning("sweep cell %d failed: %s", index, exc)
            row = report_row(cell, None, "error", str(exc))
            failed.append(index)
        rows.append({"cell": index, **row})
    path = None
    if write:
        path = write_report(Path(cfg.output) / "sweep.csv", rows, timestamp)
    return SweepResult(rows, failed, path)
