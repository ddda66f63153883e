"""Error metrics, convergence/robustness bounds and invariant checkers."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .engine import NetworkState, NoiseSpec, Trace, encode_value
from .graph import TCN_RTOL, Graph, OracleSolution, perturb, shortest_distances


class Violation(NamedTuple):
    t: int
    k: int | None
    kind: str
    detail: str


def violations_csv(violations) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "k", "kind", "detail"])
    for v in violations:
        wr.writerow([v.t, "" if v.k is None else v.k, v.kind, v.detail])
    return buf.getvalue()


@dataclass
class ErrorMetrics:
    delta_u_plus: float
    delta_u_minus: float
    delta_w_plus: float
    delta_w_minus: float
    delta_r_plus: float
    delta_r_minus: float
    d_min: float
    under_u: frozenset = field(default_factory=frozenset)
    under_w: frozenset = field(default_factory=frozenset)
    under_r: frozenset = field(default_factory=frozenset)

    @property
    def delta_plus(self) -> float:
        return max(self.delta_u_plus, self.delta_w_plus, self.delta_r_plus)

    @property
    def delta_minus(self) -> float:
        return max(self.delta_u_minus, self.delta_w_minus, self.delta_r_minus)

    @property
    def L(self) -> float:
        return max(self.delta_plus, self.delta_minus)

    @property
    def L_plus(self) -> float:
        return self.delta_plus + self.delta_minus

    @property
    def has_underestimates(self) -> bool:
        return bool(self.under_u or self.under_w or self.under_r)


def _over_under(x: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return 0.0, 0.0
    with np.errstate(invalid="ignore"):
        diff = x - ref
    over = float(np.max(np.where(x > ref, diff, 0.0)))
    under = float(np.max(np.where(x < ref, -diff, 0.0)))
    return over, under


def error_metrics(state: NetworkState, oracle: OracleSolution) -> ErrorMetrics:
    """Per-buffer worst over/underestimates and the minimum underestimating value.

    An entry counts as an underestimate only when strictly below its true value;
    +inf entries are overestimates of unbounded size.
    """
    dstar = oracle.dstar
    dj = dstar[oracle.edge_dst]
    if state.d.shape != dstar.shape or state.m.shape != dj.shape or state.din.shape != dj.shape:
        raise ValueError("state does not match the oracle's graph")
    u = _over_under(state.d, dstar)
    w = _over_under(state.m, dj)
    r = _over_under(state.din, dj)
    su = frozenset(np.flatnonzero(state.d < dstar).tolist())
    sw = frozenset(np.flatnonzero(state.m < dj).tolist())
    sr = frozenset(np.flatnonzero(state.din < dj).tolist())
    lows = [math.inf]
    lows += [float(state.d[i]) for i in su]
    lows += [float(state.m[e]) for e in sw]
    lows += [float(state.din[e]) for e in sr]
    return ErrorMetrics(u[0], u[1], w[0], w[1], r[0], r[1], min(lows), su, sw, sr)


@dataclass
class BoundReport:
    T_plus: int
    T_minus: int | None
    T: int
    B_plus: float = 0.0
    B_minus: float = 0.0
    gain_L: float = 0.0
    gain_L_plus: float = 0.0
    # the same bounds with D instead of D - 1; these also cover edge buffers
    B_plus_full: float = 0.0
    B_minus_full: float = 0.0
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["inputs"] = {k: encode_value(v) if isinstance(v, float) else v for k, v in self.inputs.items()}
        return doc


def _steps(P: int, span: float, rate: float) -> int:
    return int(P * max(0, math.ceil(span / rate)))


def convergence_bounds(oracle: OracleSolution, P: int, initial: ErrorMetrics | float,
                       conservative: bool = False) -> BoundReport:
    """Noiseless bounds: ``P * diameter`` for overestimates, the rising-value time for underestimates.

    ``initial`` is either the initial :class:`ErrorMetrics` or its ``d_min``.
    """
    if P < 1:
        raise ValueError("asynchrony measure must be at least 1")
    d_min0 = initial.d_min if isinstance(initial, ErrorMetrics) else float(initial)
    if d_min0 == -math.inf or math.isnan(d_min0):
        raise ValueError("initial minimum underestimate must be real")
    diam = oracle.diameter_conservative if conservative else oracle.diameter
    t_plus = P * diam
    t_minus = None
    if math.isfinite(d_min0):
        t_minus = _steps(P, oracle.dstar_max - d_min0, oracle.e_min)
    return BoundReport(
        T_plus=t_plus,
        T_minus=t_minus,
        T=t_plus if t_minus is None else max(t_plus, t_minus),
        inputs={"P": P, "diameter": diam, "dstar_max": oracle.dstar_max, "d_min_0": d_min0,
                "e_min": oracle.e_min},
    )


def robustness_bounds(g: Graph, oracle: OracleSolution | None, noise: NoiseSpec, P: int,
                      initial: ErrorMetrics | float, conservative: bool = False) -> BoundReport:
    """Ultimate error levels and the times after which they hold under bounded noise."""
    if P < 1:
        raise ValueError("asynchrony measure must be at least 1")
    noise.check(g)
    d_min0 = initial.d_min if isinstance(initial, ErrorMetrics) else float(initial)
    if d_min0 == -math.inf or math.isnan(d_min0):
        raise ValueError("initial minimum underestimate must be real")
    eps_max, eps_min = noise.eps_max, noise.eps_min
    if oracle is None:
        oracle = shortest_distances(g)
    g_plus, g_minus = perturb(g, eps_min, eps_max)
    o_plus, o_minus = shortest_distances(g_plus), shortest_distances(g_minus)

    def diam(o):
        return o.diameter_conservative if conservative else o.diameter

    D, D_plus, D_minus = diam(oracle), diam(o_plus), diam(o_minus)
    b_plus = (D - 1) * eps_max
    b_minus = (D_minus - 1) * eps_min
    t_plus = P * D_plus
    if math.isfinite(d_min0):
        t_minus = _steps(P, o_minus.dstar_max - d_min0, oracle.e_min - eps_min)
    else:
        # no initial underestimate: the lower comparison run never undershoots its fixed point
        t_minus = 0
    if eps_min == 0:
        gain_L = gain_Lp = b_plus
    elif eps_max == 0:
        gain_L = gain_Lp = b_minus
    elif eps_min == eps_max:
        gain_Lp = (D + D_minus - 2) * eps_max
        gain_L = (max(D, D_minus) - 1) * eps_max
    else:
        gain_Lp = b_plus + b_minus
        gain_L = max(b_plus, b_minus)
    return BoundReport(
        T_plus=t_plus,
        T_minus=t_minus,
        T=max(t_plus, t_minus),
        B_plus=b_plus,
        B_minus=b_minus,
        gain_L=gain_L,
        gain_L_plus=gain_Lp,
        B_plus_full=D * eps_max,
        B_minus_full=D_minus * eps_min,
        inputs={"P": P, "diameter": D, "diameter_plus": D_plus, "diameter_minus": D_minus,
                "dstar_max": oracle.dstar_max, "dstar_max_minus": o_minus.dstar_max,
                "d_min_0": d_min0, "e_min": oracle.e_min, "eps_max": eps_max, "eps_min": eps_min},
    )


def _record_rows(trace: Trace, oracle: OracleSolution | None):
    """(metrics per record, t per record, k per record) at the finest granularity available."""
    if trace.granularity == "instr":
        if oracle is not None and not np.array_equal(oracle.steady_state, trace.ref):
            rows = _kernels.replay_metrics(trace.initial, oracle.steady_state, trace.instr_index, trace.instr_value)
        else:
            rows = trace.instr_metrics
        t = np.concatenate([[0], trace.instr_t])
        k = np.concatenate([[-1], trace.instr_k])
        return rows, t, k
    t = np.arange(trace.horizon + 1)
    return trace.step_metrics, t, np.full(t.shape, -1)


def check_monotonicity(trace: Trace, oracle: OracleSolution | None = None, tol: float = 0.0) -> list[Violation]:
    """Overestimate and underestimate never grow from one record to the next.

    ``tol`` absorbs floating-point rounding of real-valued weights; integer
    weights are checked exactly with the default of zero.
    """
    rows, ts, ks = _record_rows(trace, oracle)
    out = []
    for col, name in ((0, "delta_plus"), (1, "delta_minus")):
        x = rows[:, col]
        with np.errstate(invalid="ignore"):
            bad = np.flatnonzero(x[1:] > x[:-1] + tol) + 1
        for p in bad:
            out.append(Violation(int(ts[p]), None if ks[p] < 0 else int(ks[p]), "monotonicity",
                                 f"{name} rose from {x[p - 1]} to {x[p]}"))
    out.sort(key=lambda v: (v.t, -1 if v.k is None else v.k))
    return out


def check_dmin_increase(trace: Trace, oracle: OracleSolution | None, P: int, e_min: float) -> list[Violation]:
    """Minimum underestimate never falls and gains at least ``e_min`` every ``P`` steps."""
    out = []
    rows, ts, ks = _record_rows(trace, oracle)
    low = rows[:, 2]
    for p in np.flatnonzero(low[1:] < low[:-1]) + 1:
        out.append(Violation(int(ts[p]), None if ks[p] < 0 else int(ks[p]), "dmin-decrease",
                             f"d_min fell from {low[p - 1]} to {low[p]}"))
    if oracle is not None and not np.array_equal(oracle.steady_state, trace.ref):
        step_low = np.empty(trace.horizon + 1)
        step_low[0] = rows[0, 2]
        ends = np.searchsorted(ts, np.arange(1, trace.horizon + 1), side="right") - 1
        step_low[1:] = low[ends]
    else:
        step_low = trace.d_min
    for t in range(trace.horizon + 1 - P):
        a, b = step_low[t], step_low[t + P]
        if math.isfinite(a) and not b >= a + e_min:
            out.append(Violation(t + P, None, "dmin-increase",
                                 f"d_min({t + P})={b} < d_min({t})={a} + e_min={e_min}"))
    return out


def check_sandwich(trace: Trace, trace_plus: Trace, trace_minus: Trace) -> list[Violation]:
    """Componentwise lower-run <= noisy-run <= upper-run at every record."""
    for other in (trace_plus, trace_minus):
        if (
            other.schedule_id != trace.schedule_id
            or other.horizon != trace.horizon
            or not np.array_equal(other.initial, trace.initial)
        ):
            raise ValueError("traces do not share schedule, horizon and initial state")
    out = []

    def compare(lo, mid, hi, t, k, what):
        bad = np.flatnonzero(~((lo <= mid) & (mid <= hi)))
        for e in np.atleast_1d(bad):
            out.append(Violation(int(t if np.isscalar(t) else t[e]), k if k is None or np.isscalar(k) else int(k[e]),
                                 "sandwich", f"{what}: {lo[e]} <= {mid[e]} <= {hi[e]} fails"))

    compare(trace_minus.initial, trace.initial, trace_plus.initial, 0, None, "initial state")
    if all(tr.granularity == "instr" for tr in (trace, trace_plus, trace_minus)):
        compare(trace_minus.instr_value, trace.instr_value, trace_plus.instr_value,
                trace.instr_t, trace.instr_k, "written value")
    elif all(tr.states is not None for tr in (trace, trace_plus, trace_minus)):
        for t in range(1, trace.horizon + 1):
            lo, mid, hi = trace_minus.states[t], trace.states[t], trace_plus.states[t]
            bad = np.flatnonzero(~((lo <= mid) & (mid <= hi)))
            for e in bad:
                out.append(Violation(t, None, "sandwich", f"entry {e}: {lo[e]} <= {mid[e]} <= {hi[e]} fails"))
    else:
        raise ValueError("sandwich check needs instruction logs or per-step snapshots")
    return out


def check_replay(trace: Trace, g: Graph) -> list[Violation]:
    """Re-execute the logged instructions noiselessly and compare every written value."""
    if trace.granularity != "instr":
        raise ValueError("replay needs an instruction-granular trace")
    ptr = np.searchsorted(trace.instr_t, np.arange(trace.horizon + 1), side="right").astype(np.int64)
    empty = np.zeros(0)
    _, _, _, expected = _kernels.execute(
        trace.initial.copy(), trace.instr_kind, trace.instr_target, ptr, g.n, g.n_edges, g.dst, g.w,
        g.is_source, g.nbr_ptr, g.nbr_edge, 0, np.zeros(3), empty, empty, empty, trace.ref, False, True,
    )
    out = []
    for p in np.flatnonzero(expected != trace.instr_value):
        out.append(Violation(int(trace.instr_t[p]), int(trace.instr_k[p]), "replay",
                             f"logged value {trace.instr_value[p]} but the update law gives {expected[p]}"))
    return out


def current_constraining_nodes(state: NetworkState, g: Graph, i: int) -> set[int]:
    if g.is_source[i]:
        raise ValueError(f"vertex {i} is a source; constraining nodes are undefined")
    out = set()
    for e in g.nbr_edge[g.nbr_ptr[i]:g.nbr_ptr[i + 1]]:
        a, b = float(state.d[i]), float(g.w[e] + state.din[e])
        same = a == b if g.integer_weights else (a == b or math.isclose(a, b, rel_tol=TCN_RTOL))
        if same:
            out.add(int(g.dst[e]))
    return out


def observed_convergence_time(trace: Trace, oracle: OracleSolution | None = None) -> int | None:
    """First step from which the state equals the fixed point through the horizon."""
    conv = trace.converged
    if oracle is not None and not np.array_equal(oracle.steady_state, trace.ref):
        raise ValueError("trace was measured against a different fixed point")
    if not conv[-1]:
        return None
    not_conv = np.flatnonzero(~conv)
    return 0 if not_conv.size == 0 else int(not_conv[-1] + 1)


def check_convergence(trace: Trace, report: BoundReport) -> list[Violation]:
    """Noiseless bounds: no overestimate from T_plus on, no underestimate from T_minus on."""
    out = []
    for t in range(report.T_plus, trace.horizon + 1):
        if trace.delta_plus[t] > 0:
            out.append(Violation(t, None, "overestimate-bound", f"delta_plus={trace.delta_plus[t]} after T_plus"))
    t_minus = 0 if report.T_minus is None else report.T_minus
    for t in range(t_minus, trace.horizon + 1):
        if trace.delta_minus[t] > 0:
            out.append(Violation(t, None, "underestimate-bound", f"delta_minus={trace.delta_minus[t]} after T_minus"))
    return out


def check_robustness(trace: Trace, report: BoundReport) -> list[Violation]:
    out = []
    for t in range(report.T_plus, trace.horizon + 1):
        if not trace.delta_plus[t] <= report.B_plus:
            out.append(Violation(t, None, "robust-overestimate",
                                 f"delta_plus={trace.delta_plus[t]} > B_plus={report.B_plus}"))
    for t in range(report.T_minus or 0, trace.horizon + 1):
        if not trace.delta_minus[t] <= report.B_minus:
            out.append(Violation(t, None, "robust-underestimate",
                                 f"delta_minus={trace.delta_minus[t]} > B_minus={report.B_minus}"))
    return out


def fixed_point_gaps(g: Graph, eps_min: float, eps_max: float) -> dict:
    """Largest shift of true distances when every weight moves by ``+eps_max`` / ``-eps_min``."""
    base = shortest_distances(g)
    g_plus, g_minus = perturb(g, eps_min, eps_max)
    o_plus, o_minus = shortest_distances(g_plus), shortest_distances(g_minus)
    return {
        "gap_plus": float(np.max(o_plus.dstar - base.dstar)),
        "gap_minus": float(np.max(base.dstar - o_minus.dstar)),
        "bound_plus": (base.diameter - 1) * eps_max,
        "bound_minus": (o_minus.diameter - 1) * eps_min,
        "scale": base.dstar_max,
    }


def check_fixed_points(g: Graph, eps_min: float, eps_max: float, rtol: float = 1e-12) -> list[Violation]:
    """Compare shifted fixed points against their diameter bounds, up to float rounding."""
    r = fixed_point_gaps(g, eps_min, eps_max)
    slack = rtol * max(1.0, r["scale"] + (r["bound_plus"] or 0.0))
    out = []
    if r["gap_plus"] > r["bound_plus"] + slack:
        out.append(Violation(0, None, "fixed-point-plus", f"{r['gap_plus']} > {r['bound_plus']}"))
    if r["gap_minus"] > r["bound_minus"] + slack:
        out.append(Violation(0, None, "fixed-point-minus", f"{r['gap_minus']} > {r['bound_minus']}"))
    return out
