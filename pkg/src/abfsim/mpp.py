"""Most-probable-path problems via the ``e = -log p`` reduction.

Probability-domain runs execute the distance engine on the transformed graph
and map values back with ``theta = exp(-d)``.  A zero probability is an
infinite distance.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, engine
from .graph import Graph, GraphError, OracleSolution, shortest_distances, validate
from .schedule import Schedule

PROB_GRAPH_SCHEMA = {
    "type": "object",
    "required": ["n", "sources", "edges"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "sources": {"type": "array", "items": {"type": "integer"}},
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "p"],
                "properties": {
                    "from": {"type": "integer"},
                    "to": {"type": "integer"},
                    "p": {"type": "number"},
                },
            },
        },
    },
}


@dataclass(frozen=True, eq=False)
class ProbGraph:
    n: int
    src: np.ndarray
    dst: np.ndarray
    p: np.ndarray
    sources: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        bad = np.flatnonzero(~((p > 0) & (p < 1)))
        if bad.size:
            e = int(bad[0])
            raise GraphError(
                f"edge ({int(self.src[e]) + 1}, {int(self.dst[e]) + 1}) has probability {p[e]}; need 0 < p < 1"
            )

    @classmethod
    def from_edges(cls, n, edges, sources) -> "ProbGraph":
        edges = list(edges)
        src = np.array([e[0] for e in edges], dtype=np.int64)
        dst = np.array([e[1] for e in edges], dtype=np.int64)
        p = np.array([e[2] for e in edges], dtype=np.float64)
        return cls(int(n), src, dst, p, tuple(sorted(int(s) for s in sources)))

    def edges(self):
        return list(zip(self.src.tolist(), self.dst.tolist(), self.p.tolist()))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "sources": [s + 1 for s in self.sources],
            "edges": [{"from": i + 1, "to": j + 1, "p": x} for i, j, x in self.edges()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProbGraph":
        try:
            jsonschema.validate(doc, PROB_GRAPH_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise GraphError(f"malformed graph file: {exc.message}") from None
        pg = cls.from_edges(doc["n"], [(e["from"] - 1, e["to"] - 1, e["p"]) for e in doc["edges"]],
                            [s - 1 for s in doc["sources"]])
        problems = validate(prob_to_distance(pg))
        if problems:
            raise GraphError("; ".join(problems))
        return pg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ProbGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


def prob_to_distance(pg: ProbGraph) -> Graph:
    return Graph.from_edges(pg.n, zip(pg.src.tolist(), pg.dst.tolist(), (-np.log(pg.p)).tolist()), pg.sources)


def distance_to_prob(g: Graph) -> ProbGraph:
    return ProbGraph.from_edges(g.n, zip(g.src.tolist(), g.dst.tolist(), np.exp(-g.w).tolist()), g.sources)


def theta_to_distance(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(np.isnan(theta)) or np.any(theta < 0):
        raise ValueError("probabilities must be nonnegative numbers")
    with np.errstate(divide="ignore"):
        return 0.0 - np.log(theta)


def distance_to_theta(d) -> np.ndarray:
    return np.exp(-np.asarray(d, dtype=np.float64))


def mpp_solve(pg: ProbGraph, oracle: OracleSolution | None = None) -> np.ndarray:
    """Highest probability of reaching the source set from every vertex."""
    g = prob_to_distance(pg)
    if oracle is None:
        problems = validate(g)
        if problems:
            raise GraphError("; ".join(problems))
        oracle = shortest_distances(g)
    return distance_to_theta(oracle.dstar)


def mult_noise_to_additive(interval) -> tuple[float, float]:
    """Multiplicative factor range ``[lo, hi]`` (containing 1) as an additive distance range."""
    lo, hi = (float(x) for x in interval)
    if not 0 < lo <= hi:
        raise ValueError(f"multiplicative noise [{lo}, {hi}] needs 0 < lo <= hi")
    if not lo <= 1.0 <= hi:
        raise ValueError(f"multiplicative noise [{lo}, {hi}] must contain 1")
    return 0.0 - math.log(hi), 0.0 - math.log(lo)


def mult_noise_spec(mult: dict, sampler: str = "uniform", seed: int | None = 0) -> engine.NoiseSpec:
    """``{"read": [lo, hi], ...}`` factor ranges as an additive :class:`NoiseSpec`."""
    ranges = {k: mult_noise_to_additive(mult.get(k, (1.0, 1.0))) for k in ("read", "update", "write")}
    return engine.NoiseSpec(ranges["read"], ranges["update"], ranges["write"], sampler, seed)


def init_theta_state(g: Graph, init_theta) -> engine.NetworkState:
    """Probability-domain initial buffers (same accepted forms as ``engine.init_state``) in distances."""
    return engine.NetworkState.from_flat(g, theta_to_distance(init_state_theta_flat(g, init_theta)))


@dataclass
class MppTrace:
    """A distance-domain trace viewed through ``theta = exp(-d)``."""

    graph: Graph
    dist: engine.Trace

    @property
    def theta_initial(self) -> np.ndarray:
        return distance_to_theta(self.dist.initial)

    @property
    def theta_final(self) -> np.ndarray:
        return distance_to_theta(self.dist.final)

    @property
    def theta_values(self) -> np.ndarray:
        if self.dist.instr_value is None:
            raise ValueError("instruction values need an instruction-granular trace")
        return distance_to_theta(self.dist.instr_value)

    @property
    def theta_states(self) -> np.ndarray | None:
        return None if self.dist.states is None else distance_to_theta(self.dist.states)

    def theta_at(self, t: int) -> np.ndarray:
        return distance_to_theta(self.dist.state_at(self.graph, t).flat())

    def final_prob(self) -> np.ndarray:
        return self.theta_final[: self.graph.n]

    def step_csv(self) -> str:
        """Log-domain error metrics per step; ``d_min`` also as a probability."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "delta_plus", "delta_minus", "L", "L_plus", "d_min", "theta_max_over", "converged"])
        for t in range(self.dist.horizon + 1):
            dp, dm, lo = self.dist.step_metrics[t]
            wr.writerow([t, engine.encode_value(dp), engine.encode_value(dm), engine.encode_value(max(dp, dm)),
                         engine.encode_value(dp + dm), engine.encode_value(lo), repr(math.exp(-lo)),
                         int(dp == 0 and dm == 0)])
        return buf.getvalue()

    def final_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["vertex", "theta", "log_theta"])
        for i, x in enumerate(self.dist.final[: self.graph.n]):
            wr.writerow([i + 1, repr(math.exp(-x)), engine.encode_value(-x) if math.isfinite(x) else "-inf"])
        return buf.getvalue()


def run_mpp(pg: ProbGraph, schedule: Schedule, init_theta, mult_noise: dict | engine.NoiseSpec | None = None,
            granularity: str = "step", keep_states: bool = False, seed: int | None = 0) -> MppTrace:
    g = prob_to_distance(pg)
    init = init_theta_state(g, init_theta)
    noise = mult_noise
    if isinstance(mult_noise, dict):
        noise = mult_noise_spec(mult_noise, seed=seed)
    tr = engine.run(g, schedule, init, noise, granularity=granularity, keep_states=keep_states)
    return MppTrace(g, tr)


def mpp_bounds(pg: ProbGraph, P: int, init_theta, oracle: OracleSolution | None = None) -> analysis.BoundReport:
    """Noiseless bounds on the transformed problem.

    Underestimates are identified in the probability domain (``theta`` above
    its target) so that a start at the exact solution is not mistaken for an
    underestimate by log/exp rounding.
    """
    g = prob_to_distance(pg)
    if oracle is None:
        oracle = shortest_distances(g)
    theta = init_state_theta_flat(g, init_theta)
    target = distance_to_theta(oracle.steady_state)
    over = theta > target
    d_min0 = float(theta_to_distance(theta[over].max())) if over.any() else math.inf
    rep = analysis.convergence_bounds(oracle, P, d_min0)
    # node-only variant: every internal estimate counts, not only underestimates
    d0 = theta_to_distance(theta[: g.n])
    span = oracle.dstar_max - float(d0.min())
    rep.inputs["T_minus_node_formula"] = int(P * max(0, math.ceil(span / oracle.e_min)))
    return rep


def init_state_theta_flat(g: Graph, init_theta) -> np.ndarray:
    if isinstance(init_theta, str):
        raise ValueError("initial probabilities must be given explicitly")
    st = engine.init_state(g, init_theta)
    flat = st.flat()
    if np.any(np.isnan(flat)) or np.any(flat < 0) or np.any(flat > 1):
        raise ValueError("initial probabilities must lie in [0, 1]")
    return flat
