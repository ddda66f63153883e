"""Seeded batches, bound checks and the two-node replay table.

Per-run seeds: run ``r`` of a batch with master seed ``s`` takes child ``r``
of ``numpy.random.SeedSequence(s).spawn(runs)``; the first 64-bit word of
that child's state seeds the schedule and the second seeds the noise.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, generators
from .engine import NoiseSpec, Trace, encode_value, init_state, run, run_extreme
from .graph import Graph, OracleSolution, shortest_distances
from .schedule import POLICIES, Schedule, Windows, counting_process_schedule, from_queues


# rounding allowance for monotonicity checks on real-valued weights
MONOTONE_RTOL = 1e-12


class ConfigError(ValueError):
    pass


GENERATORS = ("two-node", "line", "buckyball", "geometric", "random")


def build_graph(spec: dict) -> Graph:
    """Graph from ``{"file": path}`` or ``{"generator": name, ...params}``."""
    if "file" in spec:
        path = Path(spec["file"])
        if not path.exists():
            raise ConfigError(f"graph.file: {path} does not exist")
        return Graph.load(path)
    name = spec.get("generator")
    if name == "two-node":
        return generators.two_node()
    if name == "line":
        return generators.line(int(spec.get("n", 4)))
    if name == "buckyball":
        return generators.buckyball(int(spec.get("seed", 0)))
    if name == "geometric":
        cfg = generators.GeometricConfig(
            n=int(spec.get("n", 1000)),
            box=tuple(float(x) for x in spec.get("box", (6000.0, 8000.0, 10000.0))),
            k=int(spec.get("k", 5)),
            num_sources=int(spec.get("sources", 10)),
            seed=int(spec.get("seed", 0)),
        )
        return generators.random_geometric(cfg)
    if name == "random":
        return generators.random_digraph(
            int(spec.get("n", 8)), float(spec.get("p", 0.4)), tuple(spec.get("weights", (1, 10))),
            seed=int(spec.get("seed", 0)), n_sources=int(spec.get("sources", 1)),
        )
    raise ConfigError(f"graph.generator: unknown generator {name!r}; choose from {', '.join(GENERATORS)}")


@dataclass
class ExperimentConfig:
    graph: dict
    init: object = "zero-d-inf-buffers"
    windows: tuple = (4, 4, 2)
    ordering: str = "random-permutation"
    noise: dict | None = None
    horizon: int | None = None
    runs: int = 1
    seed: int = 0
    granularity: str = "step"
    conservative: bool = False
    schedule_file: str | None = None

    def __post_init__(self):
        if not isinstance(self.graph, dict) or not ("file" in self.graph or "generator" in self.graph):
            raise ConfigError("graph: need {'file': path} or {'generator': name, ...}")
        try:
            self.windows = Windows.of(self.windows).astuple()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"windows: {exc}") from None
        if self.ordering not in POLICIES and not self.ordering.startswith("fixed:"):
            raise ConfigError(f"ordering: unknown policy {self.ordering!r}")
        if int(self.runs) < 1:
            raise ConfigError("runs: must be at least 1")
        if self.horizon is not None and int(self.horizon) < 0:
            raise ConfigError("horizon: must be nonnegative")
        if self.granularity not in ("step", "instr"):
            raise ConfigError("granularity: must be 'step' or 'instr'")
        if self.noise is not None:
            try:
                NoiseSpec.from_json(self.noise)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"noise: {exc}") from None
        if self.schedule_file is not None and not Path(self.schedule_file).exists():
            raise ConfigError(f"schedule_file: {self.schedule_file} does not exist")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(extra))}")
        if "graph" not in doc:
            raise ConfigError("graph: missing")
        return cls(**doc)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["windows"] = list(self.windows)
        return doc

    @property
    def P(self) -> int:
        return Windows.of(self.windows).P

    def noise_spec(self, seed: int | None = None) -> NoiseSpec | None:
        if self.noise is None:
            return None
        doc = dict(self.noise)
        if seed is not None:
            doc["seed"] = seed
        return NoiseSpec.from_json(doc)


def run_seeds(master: int, runs: int) -> list[tuple[int, int]]:
    out = []
    for child in np.random.SeedSequence(master).spawn(runs):
        a, b = child.generate_state(2, np.uint64)
        out.append((int(a), int(b)))
    return out


@dataclass
class RunResult:
    run: int
    schedule_seed: int
    noise_seed: int
    trace: Trace
    schedule: Schedule
    observed_convergence_time: int | None
    max_delta_plus_after: float
    max_delta_minus_after: float
    violations: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "run": self.run,
            "schedule_seed": self.schedule_seed,
            "noise_seed": self.noise_seed,
            "observed_convergence_time": self.observed_convergence_time,
            "max_delta_plus_after_T_plus": encode_value(self.max_delta_plus_after),
            "max_delta_minus_after_T_minus": encode_value(self.max_delta_minus_after),
            "final_L": encode_value(float(self.trace.L[-1])),
            "violations": len(self.violations),
        }


@dataclass
class BatchResult:
    config: ExperimentConfig
    graph: Graph
    oracle: OracleSolution
    report: analysis.BoundReport
    runs: list

    @property
    def violations(self) -> list:
        return [v for r in self.runs for v in r.violations]

    @property
    def bound_respected(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        o = self.oracle
        return {
            "config": self.config.to_json(),
            "graph": {"n": self.graph.n, "n_edges": self.graph.n_edges, "dstar_max": encode_value(o.dstar_max),
                      "diameter": o.diameter, "diameter_conservative": o.diameter_conservative,
                      "e_min": encode_value(o.e_min)},
            "bounds": self.report.to_json(),
            "runs": [r.summary() for r in self.runs],
            "bound_respected": self.bound_respected,
        }

    def trace_csv(self) -> str:
        lines = []
        for r in self.runs:
            text = r.trace.instr_csv(self.graph) if r.trace.granularity == "instr" else r.trace.step_csv()
            rows = text.splitlines()
            if not lines:
                lines.append("run," + rows[0])
            lines.extend(f"{r.run},{row}" for row in rows[1:])
        return "\n".join(lines) + "\n"

    def violations_csv(self) -> str:
        lines = ["run," + analysis.violations_csv([]).strip()]
        for r in self.runs:
            for row in analysis.violations_csv(r.violations).splitlines()[1:]:
                lines.append(f"{r.run},{row}")
        return "\n".join(lines) + "\n"


def bounds_for(cfg: ExperimentConfig, g: Graph, oracle: OracleSolution) -> analysis.BoundReport:
    m0 = analysis.error_metrics(init_state(g, cfg.init), oracle)
    noise = cfg.noise_spec()
    if noise is None:
        return analysis.convergence_bounds(oracle, cfg.P, m0, conservative=cfg.conservative)
    return analysis.robustness_bounds(g, oracle, noise, cfg.P, m0, conservative=cfg.conservative)


def _max_after(x: np.ndarray, start: int) -> float:
    tail = x[start:]
    return float(tail.max()) if tail.size else 0.0


def _one_run(cfg, g, oracle, report, r, seeds, horizon, verify):
    s_seed, n_seed = seeds
    if cfg.schedule_file is not None:
        sched = Schedule.load(cfg.schedule_file, g, windows=cfg.windows)
    else:
        sched = counting_process_schedule(g, cfg.windows, horizon, s_seed, cfg.ordering)
    noise = cfg.noise_spec(n_seed)
    gran = "instr" if verify else cfg.granularity
    tr = run(g, sched, cfg.init, noise, granularity=gran, oracle=oracle)
    if noise is None:
        viol = analysis.check_convergence(tr, report)
        if verify:
            tol = 0.0 if g.integer_weights else MONOTONE_RTOL * oracle.dstar_max
            viol += analysis.check_monotonicity(tr, tol=tol)
            viol += analysis.check_dmin_increase(tr, oracle, cfg.P, oracle.e_min)
            viol += analysis.check_replay(tr, g)
    else:
        viol = analysis.check_robustness(tr, report)
        if verify:
            plus, minus = run_extreme(g, sched, cfg.init, noise, granularity="instr", oracle=oracle)
            viol += analysis.check_sandwich(tr, plus, minus)
    t_minus = report.T_minus if report.T_minus is not None else 0
    return RunResult(
        r, s_seed, n_seed, tr, sched,
        analysis.observed_convergence_time(tr) if noise is None else None,
        _max_after(tr.delta_plus, report.T_plus),
        _max_after(tr.delta_minus, t_minus),
        viol,
    )


def run_batch(cfg: ExperimentConfig, jobs: int = 1, verify: bool = False) -> BatchResult:
    """Execute every run of ``cfg``; results come back in run order regardless of ``jobs``."""
    g = build_graph(cfg.graph)
    oracle = shortest_distances(g)
    report = bounds_for(cfg, g, oracle)
    horizon = cfg.horizon if cfg.horizon is not None else report.T + cfg.P
    seeds = run_seeds(cfg.seed, cfg.runs)
    args = [(cfg, g, oracle, report, r, seeds[r], horizon, verify) for r in range(cfg.runs)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _one_run(*a), args))
    else:
        results = [_one_run(*a) for a in args]
    if verify and cfg.noise is not None:
        noise = cfg.noise_spec()
        fp = analysis.check_fixed_points(g, noise.eps_min, noise.eps_max)
        if fp and results:
            results[0].violations.extend(fp)
    return BatchResult(cfg, g, oracle, report, results)


# -- two-node replay table ---------------------------------------------------

TABLE2_INIT = {"d": [40, 10], "m": {"2-1": 30}, "din": {"2-1": 20}}
TABLE2_ORDERINGS = (
    (("U", 0), ("W", 1, 0), ("R", 1, 0), ("U", 1)),
    (("W", 1, 0), ("U", 0), ("R", 1, 0), ("U", 1)),
    (("U", 0), ("R", 1, 0), ("W", 1, 0), ("U", 1)),
)
TABLE2_COLUMNS = ("time", "instr", "d2", "d21", "m21", "d1", "error")


def table2() -> list[list[dict]]:
    """Replay each ordering as a single queue; one row per instruction boundary."""
    g = generators.two_node()
    oracle = shortest_distances(g)
    out = []
    for order in TABLE2_ORDERINGS:
        sched = from_queues(g, [list(order)], windows=(0, 1, 0))
        tr = run(g, sched, TABLE2_INIT, granularity="instr", oracle=oracle)
        rows = []
        flat = tr.initial.copy()
        L = np.maximum(tr.instr_metrics[:, 0], tr.instr_metrics[:, 1])
        q = len(order)
        for p in range(q + 1):
            if p:
                flat[tr.instr_index[p - 1]] = tr.instr_value[p - 1]
            lag = q - p
            rows.append({
                "time": "0" if p == 0 else ("1" if lag == 0 else f"1-{lag}δ"),
                "instr": "Initial" if p == 0 else str(sched.queue(1, g)[p - 1]),
                "d2": _cell(flat[1]), "d21": _cell(flat[3]), "m21": _cell(flat[2]), "d1": _cell(flat[0]),
                "error": _cell(L[p]),
            })
        out.append(rows)
    return out


def _cell(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def format_table2(tables) -> str:
    blocks = []
    for rows in tables:
        lines = ["\t".join(TABLE2_COLUMNS)]
        lines += ["\t".join(str(r[c]) for c in TABLE2_COLUMNS) for r in rows]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return encode_value(float(x))
    raise TypeError(f"cannot serialise {type(x).__name__}")

