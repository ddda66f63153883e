"""Command-line entry point.

Exit codes: 0 success, 1 input or validation error, 2 a bound or invariant
violation was detected.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from . import analysis, experiments, generators, mpp
from .engine import encode_value, trace_from_instr_csv
from .experiments import ConfigError, ExperimentConfig, dump_json
from .graph import Graph, GraphError, shortest_distances
from .schedule import Windows, counting_process_schedule, synchronous_schedule

log = logging.getLogger("abfsim")

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _init_arg(text: str | None):
    """Initial condition from a flag: a number, a named preset, a JSON literal or a JSON file."""
    if text is None:
        return None
    if Path(text).is_file():
        return json.loads(Path(text).read_text())
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


# -- gen ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "two-node":
        g = generators.two_node()
    elif kind == "line":
        g = generators.line(args.n or 4)
    elif kind == "buckyball":
        g = generators.buckyball(args.seed)
    elif kind == "geometric":
        cfg = generators.GeometricConfig(n=args.n or 1000, box=tuple(args.box), k=args.k,
                                         num_sources=args.sources or 10, seed=args.seed)
        g = generators.random_geometric(cfg)
    else:
        g = generators.random_digraph(args.n or 8, args.p, tuple(args.weights), seed=args.seed,
                                      n_sources=args.sources or 1)
    _write(json.dumps(g.to_json(), indent=1) + "\n", args.out)
    return EXIT_OK


# -- oracle ------------------------------------------------------------------

def cmd_oracle(args) -> int:
    g = Graph.load(args.graph)
    o = shortest_distances(g)
    doc = {
        "dstar": [encode_value(x) for x in o.dstar],
        "dstar_max": encode_value(o.dstar_max),
        "diameter": o.diameter,
        "diameter_conservative": o.diameter_conservative,
        "e_min": encode_value(o.e_min),
        "tcg_edges": [[i + 1, j + 1] for i, j in o.tcg_edges(g)],
    }
    _write(dump_json(doc), args.out)
    return EXIT_OK


# -- experiment config -------------------------------------------------------

def _config(args) -> ExperimentConfig:
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config: {path} does not exist")
        doc = json.loads(path.read_text())
    if args.graph:
        doc["graph"] = {"file": args.graph}
    elif getattr(args, "generator", None):
        spec = {"generator": args.generator}
        for k in ("n", "seed", "k", "sources"):
            v = getattr(args, f"gen_{k}", None)
            if v is not None:
                spec[k] = v
        doc["graph"] = spec
    overrides = {
        "init": _init_arg(args.init),
        "windows": args.windows,
        "ordering": args.ordering,
        "horizon": args.horizon,
        "runs": args.runs,
        "seed": args.seed,
        "granularity": getattr(args, "granularity", None),
        "schedule_file": getattr(args, "schedule", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.conservative:
        doc["conservative"] = True
    noise = dict(doc.get("noise") or {})
    for name in ("read", "update", "write"):
        v = getattr(args, f"noise_{name}", None)
        if v is not None:
            noise[name] = v
    if args.sampler:
        noise["sampler"] = args.sampler
    if noise:
        doc["noise"] = noise
    return ExperimentConfig.from_json(doc)


def _add_config_flags(p, granularity: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--graph", help="graph JSON file")
    p.add_argument("--generator", choices=experiments.GENERATORS, help="build the graph instead of loading it")
    p.add_argument("--gen-n", type=int, dest="gen_n")
    p.add_argument("--gen-seed", type=int, dest="gen_seed")
    p.add_argument("--gen-k", type=int, dest="gen_k")
    p.add_argument("--gen-sources", type=int, dest="gen_sources")
    p.add_argument("--init", help="number, 'zero-d-inf-buffers', JSON literal or JSON file")
    p.add_argument("--windows", type=int, nargs=3, metavar=("P_R", "P_U", "P_W"))
    p.add_argument("--ordering", help="random-permutation, sort-UWR, sort-RUW or fixed:XYZ")
    p.add_argument("--noise-read", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--noise-update", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--noise-write", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--sampler", choices=("uniform", "always-max", "always-min", "zero"))
    p.add_argument("--horizon", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--conservative", action="store_true", help="use the longest constraining chain as diameter")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory")
    if granularity:
        p.add_argument("--granularity", choices=("step", "instr"))
        p.add_argument("--schedule", help="explicit schedule JSONL (one queue per line)")


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_simulate(args) -> int:
    cfg = _config(args)
    res = experiments.run_batch(cfg, jobs=args.jobs)
    out = _out_dir(args)
    summary = dump_json(res.summary())
    if out is None:
        sys.stdout.write(summary)
    else:
        (out / "summary.json").write_text(summary)
        (out / "trace.csv").write_text(res.trace_csv())
        if len(res.runs) == 1:
            (out / "terminal.json").write_text(res.runs[0].trace.terminal_json(res.graph) + "\n")
        if res.violations:
            (out / "violations.csv").write_text(res.violations_csv())
    if not res.bound_respected:
        log.error("%d bound violation(s) detected", len(res.violations))
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _config(args)
    g = experiments.build_graph(cfg.graph)
    rep = experiments.bounds_for(cfg, g, shortest_distances(g))
    _write(dump_json(rep.to_json()), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.trace:
        g = experiments.build_graph(cfg.graph)
        oracle = shortest_distances(g)
        tr = trace_from_instr_csv(g, Path(args.trace).read_text(), cfg.init, oracle)
        viol = analysis.check_replay(tr, g)
        viol += analysis.check_monotonicity(tr)
        viol += analysis.check_dmin_increase(tr, oracle, cfg.P, oracle.e_min)
        report = {"trace": args.trace, "violations": len(viol)}
        csv_text = analysis.violations_csv(viol)
    else:
        res = experiments.run_batch(cfg, jobs=args.jobs, verify=True)
        viol = res.violations
        kinds = sorted({v.kind for v in viol})
        report = {"runs": len(res.runs), "violations": len(viol), "violation_kinds": kinds,
                  "bounds": res.report.to_json()}
        csv_text = res.violations_csv()
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(dump_json(report))
        if viol:
            sys.stdout.write(csv_text)
    else:
        (out / "verify.json").write_text(dump_json(report))
        (out / "violations.csv").write_text(csv_text)
    return EXIT_VIOLATION if viol else EXIT_OK


# -- mpp ---------------------------------------------------------------------

def cmd_mpp(args) -> int:
    if args.graph:
        pg = mpp.ProbGraph.load(args.graph)
    else:
        pg = mpp.ProbGraph.from_edges(2, [(1, 0, args.two_node)], [0])
    g = mpp.prob_to_distance(pg)
    oracle = shortest_distances(g)
    prob = mpp.mpp_solve(pg, oracle)
    init = _init_arg(args.init_theta)
    init = 1.0 if init is None else init
    win = Windows.of(args.windows)
    horizon = args.horizon
    rep = mpp.mpp_bounds(pg, win.P, init, oracle)
    if horizon is None:
        horizon = rep.T + win.P
    mult = {}
    for name in ("read", "update", "write"):
        v = getattr(args, f"mult_{name}")
        if v is not None:
            mult[name] = v
    if args.synchronous:
        sched = synchronous_schedule(g, horizon)
    else:
        sched = counting_process_schedule(g, win, horizon, args.seed)
    tr = mpp.run_mpp(pg, sched, init, mult or None, seed=args.seed)
    doc = {
        "prob": [float(x) for x in prob],
        "theta_final": [float(x) for x in tr.final_prob()],
        "bounds": rep.to_json(),
    }
    if mult:
        noise = mpp.mult_noise_spec(mult)
        doc["additive_noise"] = {"read": list(noise.read), "update": list(noise.update), "write": list(noise.write)}
        m0 = analysis.error_metrics(mpp.init_theta_state(g, init), oracle)
        doc["robustness"] = analysis.robustness_bounds(g, oracle, noise, win.P, m0).to_json()
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(dump_json(doc))
    else:
        (out / "mpp.json").write_text(dump_json(doc))
        (out / "trace.csv").write_text(tr.step_csv())
        (out / "final.csv").write_text(tr.final_csv())
    return EXIT_OK


# -- table2 ------------------------------------------------------------------

def cmd_table2(args) -> int:
    tables = experiments.table2()
    if args.json:
        _write(dump_json(tables), args.out)
    else:
        _write(experiments.format_table2(tables), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="abfsim", description="Asynchronous Bellman-Ford simulation and bounds")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate a graph file")
    p.add_argument("kind", choices=("two-node", "line", "buckyball", "geometric", "random"))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--sources", type=int)
    p.add_argument("--box", type=float, nargs=3, default=(6000.0, 8000.0, 10000.0))
    p.add_argument("--p", type=float, default=0.4, help="edge probability for 'random'")
    p.add_argument("--weights", type=int, nargs=2, default=(1, 10))
    p.add_argument("-o", "--out")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("oracle", help="true distances and effective diameter")
    p.add_argument("graph")
    p.add_argument("-o", "--out")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("simulate", help="run a seeded batch")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("bounds", help="convergence / robustness bounds")
    _add_config_flags(p, granularity=False)
    p.set_defaults(fn=cmd_bounds)

    p = sub.add_parser("verify", help="invariant checks over a batch or a saved trace")
    _add_config_flags(p, granularity=False)
    p.add_argument("--trace", help="per-instruction trace CSV to check instead of running a batch")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("mpp", help="most probable path")
    p.add_argument("--graph", help="probability graph JSON (edges carry 'p')")
    p.add_argument("--two-node", type=float, default=0.5, help="edge probability of the two-node example")
    p.add_argument("--init-theta", help="initial probabilities (number, JSON literal or file)")
    p.add_argument("--windows", type=int, nargs=3, default=(1, 1, 1), metavar=("P_R", "P_U", "P_W"))
    p.add_argument("--synchronous", action="store_true")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mult-read", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--mult-update", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--mult-write", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--out", help="output directory")
    p.set_defaults(fn=cmd_mpp)

    p = sub.add_parser("table2", help="replay the three two-node orderings")
    p.add_argument("--json", action="store_true")
    p.add_argument("-o", "--out")
    p.set_defaults(fn=cmd_table2)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, GraphError, ValueError, KeyError, OSError, json.JSONDecodeError,
            jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
