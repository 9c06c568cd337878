"""Command line entry point.

    diffgossip generate-graph --n 1000 --seed 3 --graph-out g.txt [--trust-out t.txt]
    diffgossip run [--config FILE] [--preset NAME] [--<field> VALUE ...]
    diffgossip sweep --preset fig2 --output out/fig2
    diffgossip verify [--n 200] [--seeds 3]

Exit status: 0 converged (or all checks passed), 1 not converged (or a
check failed), 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import logging
import sys
from importlib import resources

from . import config as cfgmod
from . import pa_graph
from .aggregation import Variant
from .config import SECTIONS, ConfigError, SimConfig
from .harness import build_inputs, execute, run_experiment, sweep

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INVALID = 0, 1, 2
PRESETS = ("fig2", "churn", "collusion_group", "collusion_individual", "table1")


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {list(PRESETS)}")
    return resources.files("diffgossip") / "presets" / f"{name}.ini"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (key = value sections)")
    p.add_argument("--preset", choices=PRESETS, help="start from a bundled preset")
    grp = p.add_argument_group("config fields (override the file)")
    for keys in SECTIONS.values():
        for key in keys:
            grp.add_argument(f"--{key.replace('_', '-')}", dest=f"field_{key}", metavar="VALUE")
    grp.add_argument("--replicates", dest="field_replicates", metavar="VALUE")


def _load(args) -> SimConfig:
    overrides = {k[len("field_"):]: v for k, v in vars(args).items()
                 if k.startswith("field_") and v is not None}
    if args.config and args.preset:
        raise ConfigError("config", "give either --config or --preset, not both")
    path = args.config or (preset_path(args.preset) if args.preset else None)
    if path is None:
        return cfgmod.from_values(overrides=overrides)
    with resources.as_file(path) if args.preset else contextlib.nullcontext(path) as real:
        return cfgmod.load(real, overrides)


def cmd_generate_graph(args) -> int:
    cfg = _load(args)
    graph, trust = build_inputs(cfg)
    pa_graph.write_edge_list(graph, args.graph_out)
    print(f"graph: {graph.node_count} nodes, {graph.edge_count} edges -> {args.graph_out}")
    if args.trust_out:
        trust.write(args.trust_out)
        print(f"trust: {len(trust)} opinions -> {args.trust_out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    ex = run_experiment(cfg)
    r = ex.report
    print(f"{cfg.variant}: n={r.n} steps={r.steps_to_converge} messages={r.messages_total} "
          f"rate={r.messages_per_node_per_step:.4f} max_abs_error={r.max_abs_error} "
          f"avg_rms_error={r.avg_rms_error} status={ex.status}")
    for f in ex.files:
        print(f"wrote {f}")
    return EXIT_OK if r.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg = _load(args)
    res = sweep(cfg)
    print(f"{len(res.rows)} cells, {len(res.failed)} failed -> {res.path}")
    for i in res.failed:
        row = res.rows[i]
        print(f"  cell {i}: {row['status']} {row['error']}")
    return EXIT_OK if not res.failed else EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    """Compare every variant against its closed-form oracle on small random instances."""
    xi = float(args.xi)
    ok = True
    for variant in Variant:
        for s in range(args.seeds):
            cfg = cfgmod.from_values(dict(n=args.n, seed=s, xi=xi, variant=variant.value,
                                          subject=0, floor=0.1, results=False))
            ex = execute(cfg)
            err = ex.report.max_abs_error
            passed = ex.report.converged and err <= 10 * xi
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} {variant.value} n={args.n} seed={s} "
                  f"steps={ex.report.steps_to_converge} max_abs_error={err:.3e} bound={10 * xi:.1e}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffgossip", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-graph", help="write a graph (and optionally a trust scenario)")
    _add_config_flags(g)
    g.add_argument("--graph-out", required=True)
    g.add_argument("--trust-out")
    g.set_defaults(func=cmd_generate_graph)

    r = sub.add_parser("run", help="run one experiment")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the Cartesian product of the [sweep] axes")
    _add_config_flags(s)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="oracle-equivalence check of all variants")
    v.add_argument("--n", type=int, default=200)
    v.add_argument("--seeds", type=int, default=3)
    v.add_argument("--xi", default="1e-4")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, configparser.Error, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
