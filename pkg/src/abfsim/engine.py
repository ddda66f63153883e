"""Asynchronous Adaptive Bellman-Ford execution.

The engine replays a :class:`~abfsim.schedule.Schedule` against a graph,
optionally under bounded Read/Update/Write noise, and returns a
:class:`Trace`.  Noise samples are fresh for every executed instruction;
an Update draws one sample per in-edge inside the minimum.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .graph import Graph, GraphError, OracleSolution, e_min, shortest_distances
from .schedule import KIND_LETTERS, READ, UPDATE, WRITE, Instruction, Schedule

SAMPLERS = ("uniform", "always-max", "always-min", "zero")


@dataclass(eq=False)
class NetworkState:
    d: np.ndarray
    m: np.ndarray
    din: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d, self.m, self.din]).astype(np.float64)

    @classmethod
    def from_flat(cls, g: Graph, flat) -> "NetworkState":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (g.state_size,):
            raise ValueError(f"state vector has shape {flat.shape}, expected ({g.state_size},)")
        n, m = g.n, g.n_edges
        return cls(flat[:n].copy(), flat[n:n + m].copy(), flat[n + m:].copy())

    def copy(self) -> "NetworkState":
        return NetworkState(self.d.copy(), self.m.copy(), self.din.copy())

    def __eq__(self, other):
        if not isinstance(other, NetworkState):
            return NotImplemented
        return (
            np.array_equal(self.d, other.d)
            and np.array_equal(self.m, other.m)
            and np.array_equal(self.din, other.din)
        )

    __hash__ = None

    def to_json(self, g: Graph) -> dict:
        def key(e):
            return f"{int(g.src[e]) + 1}-{int(g.dst[e]) + 1}"

        return {
            "d": [encode_value(x) for x in self.d],
            "m": {key(e): encode_value(x) for e, x in enumerate(self.m)},
            "din": {key(e): encode_value(x) for e, x in enumerate(self.din)},
        }


def encode_value(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    x = float(x)
    return int(x) if x.is_integer() else x


def decode_value(x) -> float:
    return float(x) if not isinstance(x, str) else float(x.replace("infinity", "inf"))


def init_state(g: Graph, init) -> NetworkState:
    """Initial buffers.

    ``init`` may be a number (fill everything), ``"zero-d-inf-buffers"``
    (internal estimates 0, both edge buffers +inf), a flat vector of length
    ``n + 2E``, a :class:`NetworkState`, or a dict with ``d``, ``m`` and
    ``din`` entries (lists, or ``{"i-j": v}`` maps with 1-indexed ids).
    """
    n, m = g.n, g.n_edges
    if isinstance(init, NetworkState):
        state = init.copy()
    elif isinstance(init, str):
        if init != "zero-d-inf-buffers":
            raise ValueError(f"unknown initial condition {init!r}")
        state = NetworkState(np.zeros(n), np.full(m, np.inf), np.full(m, np.inf))
    elif isinstance(init, dict):
        state = NetworkState(
            _per_vertex(init["d"], n),
            _per_edge(g, init["m"]),
            _per_edge(g, init["din"]),
        )
    elif np.isscalar(init):
        v = decode_value(init)
        state = NetworkState(np.full(n, v), np.full(m, v), np.full(m, v))
    else:
        return NetworkState.from_flat(g, init)
    if state.d.shape != (n,) or state.m.shape != (m,) or state.din.shape != (m,):
        raise ValueError("initial state does not match graph dimensions")
    return state


def _per_vertex(values, n):
    arr = np.array([decode_value(x) for x in values], dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} vertex values, got {arr.shape[0]}")
    return arr


def _per_edge(g: Graph, values):
    if isinstance(values, dict):
        arr = np.full(g.n_edges, np.nan)
        for k, v in values.items():
            i, j = (int(s) - 1 for s in k.split("-"))
            e = g.edge_index.get((i, j))
            if e is None:
                raise ValueError(f"buffer key {k!r} is not an edge")
            arr[e] = decode_value(v)
        if np.isnan(arr).any():
            raise ValueError("edge buffer map does not cover every edge")
        return arr
    arr = np.array([decode_value(x) for x in values], dtype=np.float64)
    if arr.shape != (g.n_edges,):
        raise ValueError(f"expected {g.n_edges} edge values, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class NoiseSpec:
    """Interval bounds for Read, Update and Write noise plus a sampler."""

    read: tuple[float, float] = (0.0, 0.0)
    update: tuple[float, float] = (0.0, 0.0)
    write: tuple[float, float] = (0.0, 0.0)
    sampler: str = "uniform"
    seed: int | None = 0

    def __post_init__(self):
        for name in ("read", "update", "write"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not lo <= 0.0 <= hi:
                raise ValueError(f"{name} noise interval [{lo}, {hi}] must contain 0")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")

    @property
    def eps_max(self) -> float:
        return self.read[1] + self.update[1] + self.write[1]

    @property
    def eps_min(self) -> float:
        return -(self.read[0] + self.update[0] + self.write[0])

    def check(self, g: Graph) -> None:
        if not e_min(g) - self.eps_min > 0:
            raise GraphError(
                f"noise lower bounds sum to {-self.eps_min}, which cancels the minimum weight {e_min(g)}"
            )

    def with_sampler(self, sampler: str) -> "NoiseSpec":
        return replace(self, sampler=sampler)

    def constants(self) -> np.ndarray | None:
        """Fixed (read, update, write) offsets, or None for a random sampler."""
        if self.sampler == "always-max":
            return np.array([self.read[1], self.update[1], self.write[1]])
        if self.sampler == "always-min":
            return np.array([self.read[0], self.update[0], self.write[0]])
        if self.sampler == "zero":
            return np.zeros(3)
        return None

    def sample(self, rng: np.random.Generator, kind: str, size=None):
        lo, hi = {"R": self.read, "U": self.update, "W": self.write}[kind]
        c = self.constants()
        if c is not None:
            v = c["RUW".index(kind)]
            return v if size is None else np.full(size, v)
        return rng.uniform(lo, hi, size=size)

    def to_json(self) -> dict:
        return {
            "read": list(self.read), "update": list(self.update), "write": list(self.write),
            "sampler": self.sampler, "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NoiseSpec":
        return cls(
            tuple(doc.get("read", (0, 0))), tuple(doc.get("update", (0, 0))), tuple(doc.get("write", (0, 0))),
            doc.get("sampler", "uniform"), doc.get("seed", 0),
        )


def apply_instruction(state: NetworkState, instr, g: Graph, noise: NoiseSpec | None = None, rng=None) -> NetworkState:
    """Return the state after one Read, Update or Write."""
    instr = Instruction(*instr) if not isinstance(instr, Instruction) else instr
    out = state.copy()

    def eps(kind):
        if noise is None:
            return 0.0
        return float(noise.sample(rng if rng is not None else np.random.default_rng(), kind))

    if instr.kind == "U":
        i = instr.i
        if g.is_source[i]:
            out.d[i] = 0.0
        else:
            best = math.inf
            for e in g.nbr_edge[g.nbr_ptr[i]:g.nbr_ptr[i + 1]]:
                v = state.din[e] + g.w[e]
                if noise is not None:
                    v = v + eps("U")
                best = min(best, v)
            out.d[i] = best
        return out
    e = g.edge_index.get((instr.i, instr.j))
    if e is None:
        raise ValueError(f"no edge ({instr.i}, {instr.j})")
    if instr.kind == "W":
        out.m[e] = state.d[instr.j] + (eps("W") if noise is not None else 0.0)
    elif instr.kind == "R":
        out.din[e] = state.m[e] + (eps("R") if noise is not None else 0.0)
    else:
        raise ValueError(f"unknown instruction kind {instr.kind!r}")
    return out


@dataclass(eq=False)
class Trace:
    """Execution record.

    Per-step metrics (over/underestimate and minimum underestimating value
    against ``ref``) exist for every ``t`` in ``0..horizon``; ``t = 0`` is the
    initial state and empty queues carry the previous state forward.  With
    ``granularity == "instr"`` every executed instruction's written value is
    logged too, from which any intermediate state can be rebuilt.
    """

    n: int
    n_edges: int
    ref: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    step_metrics: np.ndarray
    queue_sizes: np.ndarray
    granularity: str = "step"
    states: np.ndarray | None = None
    instr_t: np.ndarray | None = None
    instr_k: np.ndarray | None = None
    instr_kind: np.ndarray | None = None
    instr_target: np.ndarray | None = None
    instr_index: np.ndarray | None = None
    instr_value: np.ndarray | None = None
    schedule_id: int | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return int(self.step_metrics.shape[0] - 1)

    @property
    def delta_plus(self) -> np.ndarray:
        return self.step_metrics[:, 0]

    @property
    def delta_minus(self) -> np.ndarray:
        return self.step_metrics[:, 1]

    @property
    def d_min(self) -> np.ndarray:
        return self.step_metrics[:, 2]

    @property
    def L(self) -> np.ndarray:
        return np.maximum(self.delta_plus, self.delta_minus)

    @property
    def L_plus(self) -> np.ndarray:
        return self.delta_plus + self.delta_minus

    @property
    def converged(self) -> np.ndarray:
        return (self.delta_plus == 0) & (self.delta_minus == 0)

    @cached_property
    def instr_metrics(self) -> np.ndarray:
        """Metrics at every instruction boundary; row 0 is the initial state."""
        if self.granularity != "instr":
            raise ValueError("per-instruction metrics need an instruction-granular trace")
        return _kernels.replay_metrics(self.initial, self.ref, self.instr_index, self.instr_value)

    def terminal_state(self, g: Graph) -> NetworkState:
        return NetworkState.from_flat(g, self.final)

    def state_at(self, g: Graph, t: int) -> NetworkState:
        """State after the whole queue of step ``t``."""
        if self.states is not None:
            return NetworkState.from_flat(g, self.states[t])
        if self.granularity == "instr":
            flat = self.initial.copy()
            sel = self.instr_t <= t
            flat[self.instr_index[sel]] = self.instr_value[sel]
            return NetworkState.from_flat(g, flat)
        raise ValueError("trace keeps neither snapshots nor an instruction log")

    # -- export --------------------------------------------------------
    def step_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "delta_plus", "delta_minus", "L", "L_plus", "d_min", "converged"])
        for t in range(self.horizon + 1):
            dp, dm, lo = self.step_metrics[t]
            wr.writerow([t, _fmt(dp), _fmt(dm), _fmt(max(dp, dm)), _fmt(dp + dm), _fmt(lo),
                         int(dp == 0 and dm == 0)])
        return buf.getvalue()

    def instr_csv(self, g: Graph) -> str:
        rows = self.instr_metrics
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "k", "kind", "i", "j", "new_value", "delta_plus", "delta_minus", "L", "L_plus",
                     "d_min", "converged"])

        def tail(row):
            dp, dm, lo = row
            return [_fmt(dp), _fmt(dm), _fmt(max(dp, dm)), _fmt(dp + dm), _fmt(lo), int(dp == 0 and dm == 0)]

        wr.writerow([0, "", "init", "", "", ""] + tail(rows[0]))
        for p in range(self.instr_index.shape[0]):
            kind = int(self.instr_kind[p])
            x = int(self.instr_target[p])
            if kind == UPDATE:
                i, j = x + 1, ""
            else:
                i, j = int(g.src[x]) + 1, int(g.dst[x]) + 1
            wr.writerow([int(self.instr_t[p]), int(self.instr_k[p]), KIND_LETTERS[kind], i, j,
                         _fmt(self.instr_value[p])] + tail(rows[p + 1]))
        return buf.getvalue()

    def terminal_json(self, g: Graph) -> str:
        return json.dumps(self.terminal_state(g).to_json(g))


def trace_from_instr_csv(g: Graph, text: str, init, oracle: OracleSolution | None = None,
                         run_id: int | None = None) -> Trace:
    """Rebuild an instruction-granular trace from ``Trace.instr_csv`` output.

    Only the instruction columns are read; metric columns are recomputed.  A
    leading ``run`` column (batch output) is filtered to ``run_id`` (default:
    the first run present).
    """
    if oracle is None:
        oracle = shortest_distances(g)
    rows = list(csv.DictReader(io.StringIO(text)))
    missing = {"t", "k", "kind", "i", "j", "new_value"} - set(rows[0] if rows else ())
    if missing:
        raise ValueError(f"trace file lacks column(s): {', '.join(sorted(missing))}")
    if "run" in rows[0]:
        want = rows[0]["run"] if run_id is None else str(run_id)
        rows = [r for r in rows if r["run"] == want]
    rows = [r for r in rows if r["kind"] != "init"]
    kinds = np.array([KIND_LETTERS.index(r["kind"]) for r in rows], dtype=np.int8)
    targets = np.empty(len(rows), dtype=np.int32)
    for p, r in enumerate(rows):
        i = int(r["i"]) - 1
        if kinds[p] == UPDATE:
            targets[p] = i
        else:
            e = g.edge_index.get((i, int(r["j"]) - 1))
            if e is None:
                raise ValueError(f"trace row {p + 1} names a missing edge ({r['i']}, {r['j']})")
            targets[p] = e
    t = np.array([int(r["t"]) for r in rows], dtype=np.int64)
    if t.size and (np.any(np.diff(t) < 0) or t[0] < 1):
        raise ValueError("trace rows are not in step order")
    horizon = int(t[-1]) if t.size else 0
    ptr = np.searchsorted(t, np.arange(horizon + 1), side="right").astype(np.int64)
    s = Schedule(horizon, None, kinds, targets, ptr)
    _check_schedule(g, s)
    values = np.array([decode_value(r["new_value"]) for r in rows], dtype=np.float64)
    initial = init_state(g, init).flat()
    final = initial.copy()
    index = np.where(kinds == UPDATE, 0, np.where(kinds == WRITE, g.n, g.n + g.n_edges)) + targets
    final[index] = values
    rep = _kernels.replay_metrics(initial, oracle.steady_state, index.astype(np.int64), values)
    step_rows = np.concatenate([[0], ptr[1:]])
    tr = Trace(g.n, g.n_edges, oracle.steady_state, initial, final, rep[step_rows].copy(),
               np.concatenate([[0], np.diff(ptr)]), granularity="instr", schedule_id=schedule_fingerprint(s))
    tr.instr_t = t
    tr.instr_k = np.array([int(r["k"]) for r in rows], dtype=np.int64)
    tr.instr_kind = kinds
    tr.instr_target = targets
    tr.instr_index = index.astype(np.int64)
    tr.instr_value = values
    return tr


def _fmt(x: float):
    return encode_value(x)


def schedule_fingerprint(s: Schedule) -> int:
    return hash((s.kinds.tobytes(), s.targets.tobytes(), s.step_ptr.tobytes()))


def _check_schedule(g: Graph, s: Schedule) -> None:
    if not len(s):
        return
    if s.targets.min() < 0:
        raise ValueError("schedule has negative targets")
    for k, lim, what in ((UPDATE, g.n, "vertex"), (WRITE, g.n_edges, "edge"), (READ, g.n_edges, "edge")):
        sel = s.kinds == k
        if sel.any() and s.targets[sel].max() >= lim:
            raise ValueError(f"schedule references a {what} missing from the graph")


def _noise_streams(g: Graph, s: Schedule, noise: NoiseSpec):
    rng = np.random.default_rng(noise.seed)
    upd = s.targets[s.kinds == UPDATE]
    deg = np.diff(g.nbr_ptr)
    n_u = int(deg[upd][~g.is_source[upd]].sum())
    n_r = int((s.kinds == READ).sum())
    n_w = int((s.kinds == WRITE).sum())
    return (
        rng.uniform(*noise.read, size=n_r),
        rng.uniform(*noise.update, size=n_u),
        rng.uniform(*noise.write, size=n_w),
    )


def run(
    g: Graph,
    schedule: Schedule,
    init,
    noise: NoiseSpec | None = None,
    granularity: str = "step",
    oracle: OracleSolution | None = None,
    keep_states: bool = False,
) -> Trace:
    """Execute every queue of ``schedule`` in order, starting from ``init``."""
    if granularity not in ("step", "instr"):
        raise ValueError(f"unknown granularity {granularity!r}")
    _check_schedule(g, schedule)
    if oracle is None:
        oracle = shortest_distances(g)
    state = init_state(g, init).flat()
    initial = state.copy()
    empty = np.zeros(0)
    mode, const, streams = 0, np.zeros(3), (empty, empty, empty)
    if noise is not None:
        noise.check(g)
        const = noise.constants()
        if const is None:
            mode, const, streams = 2, np.zeros(3), _noise_streams(g, schedule, noise)
        else:
            mode = 1
    log = granularity == "instr"
    final, metrics, states, values = _kernels.execute(
        state, schedule.kinds, schedule.targets, schedule.step_ptr, g.n, g.n_edges,
        g.dst, g.w, g.is_source, g.nbr_ptr, g.nbr_edge,
        mode, const, streams[0], streams[1], streams[2], oracle.steady_state, keep_states, log,
    )
    trace = Trace(
        g.n, g.n_edges, oracle.steady_state, initial, final, metrics,
        np.concatenate([[0], np.diff(schedule.step_ptr)]),
        granularity=granularity,
        states=states if keep_states else None,
        schedule_id=schedule_fingerprint(schedule),
    )
    if log:
        t, k = schedule.steps()
        offset = np.where(schedule.kinds == UPDATE, 0, np.where(schedule.kinds == WRITE, g.n, g.n + g.n_edges))
        trace.instr_t = t
        trace.instr_k = k
        trace.instr_kind = schedule.kinds
        trace.instr_target = schedule.targets
        trace.instr_index = (offset + schedule.targets).astype(np.int64)
        trace.instr_value = values
    return trace


def run_extreme(
    g: Graph,
    schedule: Schedule,
    init,
    noise: NoiseSpec,
    granularity: str = "step",
    oracle: OracleSolution | None = None,
    keep_states: bool = False,
) -> tuple[Trace, Trace]:
    """Runs under constant maximal and constant minimal noise on every instruction."""
    if oracle is None:
        oracle = shortest_distances(g)
    plus = run(g, schedule, init, noise.with_sampler("always-max"), granularity, oracle, keep_states)
    minus = run(g, schedule, init, noise.with_sampler("always-min"), granularity, oracle, keep_states)
    return plus, minus
