import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abfsim import analysis, generators
from abfsim.analysis import (
    check_dmin_increase, check_monotonicity, check_sandwich, convergence_bounds, current_constraining_nodes,
    error_metrics, observed_convergence_time, robustness_bounds,
)
from abfsim.engine import NetworkState, NoiseSpec, Trace, init_state, run, run_extreme, trace_from_instr_csv
from abfsim.graph import Graph, GraphError, perturb, shortest_distances
from abfsim.schedule import counting_process_schedule, from_queues, synchronous_schedule

from oracles import brute_force_distances

TWO_NODE_INIT = {"d": [40, 10], "m": {"2-1": 30}, "din": {"2-1": 20}}
TOP = [("U", 0), ("W", 1, 0), ("R", 1, 0), ("U", 1)]
BUCKY_INIT = "zero-d-inf-buffers"
NOISE = NoiseSpec((0, 2), (-0.3, 0), (-0.1, 0.1))


# -- error metrics -----------------------------------------------------------

def test_metrics_of_two_node_initial_state():
    g = generators.two_node()
    m = error_metrics(init_state(g, TWO_NODE_INIT), shortest_distances(g))
    assert (m.delta_plus, m.delta_minus, m.L, m.L_plus, m.d_min) == (40, 0, 40, 40, math.inf)
    assert (m.delta_u_plus, m.delta_w_plus, m.delta_r_plus) == (40, 30, 20)
    assert not m.has_underestimates


def test_metrics_at_fixed_point():
    g = generators.buckyball(0)
    o = shortest_distances(g)
    m = error_metrics(NetworkState.from_flat(g, o.steady_state), o)
    assert (m.delta_plus, m.delta_minus, m.L, m.L_plus, m.d_min) == (0, 0, 0, 0, math.inf)


def test_metrics_of_zero_estimates_with_empty_buffers():
    g = generators.buckyball(1)
    o = shortest_distances(g)
    m = error_metrics(init_state(g, BUCKY_INIT), o)
    assert m.delta_plus == math.inf
    assert m.delta_minus == o.dstar_max
    assert m.d_min == 0
    assert m.under_u == frozenset(i for i in range(60) if i not in g.sources)
    assert not m.under_w and not m.under_r


@given(st.integers(0, 300), st.integers(0, 2**20))
def test_L_is_sup_norm_when_finite(seed, s2):
    g = generators.random_digraph(6, 0.5, seed=seed)
    o = shortest_distances(g)
    flat = np.random.default_rng(s2).uniform(-5, 60, g.state_size)
    m = error_metrics(NetworkState.from_flat(g, flat), o)
    assert m.L == np.max(np.abs(flat - o.steady_state))


def test_metrics_agree_with_kernel():
    g = generators.buckyball(2)
    o = shortest_distances(g)
    s = counting_process_schedule(g, (4, 4, 2), 30, 1)
    tr = run(g, s, BUCKY_INIT, oracle=o, keep_states=True)
    for t in (0, 5, 12, 30):
        m = error_metrics(NetworkState.from_flat(g, tr.states[t]), o)
        assert [m.delta_plus, m.delta_minus, m.d_min] == tr.step_metrics[t].tolist()


# -- bounds ------------------------------------------------------------------

@pytest.mark.parametrize("seed,diam,dmax", [(0, 8, 50), (1, 7, 60), (2, 9, 52), (3, 8, 40), (4, 9, 59)])
def test_noiseless_bounds_on_buckyball(seed, diam, dmax):
    g = generators.buckyball(seed)
    o = shortest_distances(g)
    assert (o.diameter, o.dstar_max, o.e_min) == (diam, dmax, 1)
    rep = convergence_bounds(o, 10, error_metrics(init_state(g, BUCKY_INIT), o))
    assert rep.T_plus == 10 * diam
    assert rep.T_minus == 10 * dmax
    assert rep.T == max(rep.T_plus, rep.T_minus)


def test_two_node_bound_without_underestimates():
    g = generators.two_node()
    o = shortest_distances(g)
    rep = convergence_bounds(o, 1, error_metrics(init_state(g, TWO_NODE_INIT), o))
    assert (rep.T_plus, rep.T_minus, rep.T) == (2, None, 2)


def test_fixed_point_start_has_no_underestimate_bound():
    g = generators.buckyball(5)
    o = shortest_distances(g)
    rep = convergence_bounds(o, 7, error_metrics(NetworkState.from_flat(g, o.steady_state), o))
    assert rep.T_minus is None and rep.T == rep.T_plus == 7 * o.diameter


def test_bounds_reject_bad_inputs():
    o = shortest_distances(generators.two_node())
    with pytest.raises(ValueError):
        convergence_bounds(o, 1, -math.inf)
    with pytest.raises(ValueError):
        convergence_bounds(o, 0, 0.0)


def test_conservative_bounds_use_longest_chain():
    g = Graph.from_edges(4, [(1, 0, 1), (2, 1, 1), (3, 2, 1), (3, 0, 3)], [0])
    o = shortest_distances(g)
    assert convergence_bounds(o, 2, math.inf).T_plus == 6
    assert convergence_bounds(o, 2, math.inf, conservative=True).T_plus == 8


def test_zero_noise_reduces_to_noiseless():
    g = generators.buckyball(3)
    o = shortest_distances(g)
    m0 = error_metrics(init_state(g, BUCKY_INIT), o)
    a = convergence_bounds(o, 5, m0)
    b = robustness_bounds(g, o, NoiseSpec(), 5, m0)
    assert (b.B_plus, b.B_minus, b.gain_L, b.gain_L_plus) == (0, 0, 0, 0)
    assert (b.T_plus, b.T_minus, b.T) == (a.T_plus, a.T_minus, a.T)


def test_robustness_bounds_buckyball_example():
    g = generators.buckyball(2)
    o = shortest_distances(g)
    rep = robustness_bounds(g, o, NOISE, 5, error_metrics(init_state(g, BUCKY_INIT), o))
    gp, gm = perturb(g, 0.4, 2.1)
    d_plus, d_minus = shortest_distances(gp).diameter, shortest_distances(gm).diameter
    assert (o.diameter, d_plus, d_minus) == (9, 8, 9)
    assert rep.B_plus == pytest.approx(8 * 2.1)
    assert rep.B_minus == pytest.approx((d_minus - 1) * 0.4)
    assert rep.T_plus == 5 * d_plus == 40
    assert rep.T_minus == 5 * math.ceil(shortest_distances(gm).dstar_max / (1 - 0.4)) == 410
    # diameter times the noise aggregate, reported alongside
    assert rep.B_plus_full == pytest.approx(18.9) and rep.B_minus_full == pytest.approx(3.6)


def test_update_noise_only_on_small_graph():
    g = generators.random_digraph(8, 0.4, (1, 10), seed=21)
    o = shortest_distances(g)
    noise = NoiseSpec(update=(0, 0.5))
    rep = robustness_bounds(g, o, noise, 3, math.inf)
    assert rep.B_plus == (o.diameter - 1) * 0.5
    assert rep.B_minus == 0
    gp, _ = perturb(g, 0, 0.5)
    exact = brute_force_distances(g.n, gp.edges(), g.sources)
    gap = max(a - b for a, b in zip(exact, o.dstar))
    assert gap <= rep.B_plus + 1e-12


@pytest.mark.parametrize("noise,kind", [
    (NoiseSpec(update=(0, 0.5), write=(0, 0.25)), "nonneg"),
    (NoiseSpec(update=(-0.5, 0), read=(-0.25, 0)), "nonpos"),
    (NoiseSpec(update=(-0.5, 0.5)), "symmetric"),
    (NoiseSpec((0, 2), (-0.3, 0), (-0.1, 0.1)), "asymmetric"),
])
def test_gain_fields(noise, kind):
    g = generators.buckyball(1)
    o = shortest_distances(g)
    rep = robustness_bounds(g, o, noise, 4, 0.0)
    D, Dm = rep.inputs["diameter"], rep.inputs["diameter_minus"]
    if kind == "nonneg":
        assert rep.gain_L == rep.gain_L_plus == (D - 1) * noise.eps_max
    elif kind == "nonpos":
        assert rep.gain_L == rep.gain_L_plus == (Dm - 1) * noise.eps_min
    elif kind == "symmetric":
        assert rep.gain_L_plus == (D + Dm - 2) * noise.eps_max
        assert rep.gain_L == (max(D, Dm) - 1) * noise.eps_max
    else:
        assert rep.gain_L_plus == rep.B_plus + rep.B_minus
        assert rep.gain_L == max(rep.B_plus, rep.B_minus)


def test_noise_violating_weight_floor_rejected():
    g = generators.two_node()
    with pytest.raises(GraphError):
        robustness_bounds(g, None, NoiseSpec(update=(-2, 0), read=(-1, 0)), 1, 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_error_levels_independent_of_window_length(seed):
    g = generators.buckyball(seed)
    o = shortest_distances(g)
    a = robustness_bounds(g, o, NOISE, 5, 0.0)
    b = robustness_bounds(g, o, NOISE, 18, 0.0)
    assert (a.B_plus, a.B_minus, a.gain_L, a.gain_L_plus) == (b.B_plus, b.B_minus, b.gain_L, b.gain_L_plus)
    assert a.T_plus != b.T_plus


def test_report_json_is_plain():
    g = generators.two_node()
    o = shortest_distances(g)
    doc = convergence_bounds(o, 1, math.inf).to_json()
    text = json.dumps(doc, allow_nan=False)
    assert json.loads(text)["inputs"]["d_min_0"] == "inf"
    assert doc["T_minus"] is None


# -- checkers ----------------------------------------------------------------

def _two_node_top():
    g = generators.two_node()
    return g, run(g, from_queues(g, [TOP]), TWO_NODE_INIT, granularity="instr")


def test_monotonicity_on_two_node_replay():
    g, tr = _two_node_top()
    assert check_monotonicity(tr) == []
    assert tr.instr_metrics[:, 0].tolist() == [40, 30, 20, 7, 0]


def test_monotonicity_at_fixed_point():
    g = generators.buckyball(0)
    o = shortest_distances(g)
    tr = run(g, counting_process_schedule(g, (4, 4, 2), 20, 0), o.steady_state, granularity="instr", oracle=o)
    assert check_monotonicity(tr) == []
    assert np.all(tr.instr_metrics[:, :2] == 0)


def test_monotonicity_flags_hand_built_jump():
    g = generators.two_node()
    text = "t,k,kind,i,j,new_value\n1,0,U,2,,5\n"
    tr = trace_from_instr_csv(g, text, [0, 3, 0, 0])
    v = check_monotonicity(tr)
    assert len(v) == 1
    assert (v[0].t, v[0].k, v[0].kind) == (1, 0, "monotonicity")
    assert analysis.violations_csv(v).splitlines()[1] == "1,0,monotonicity,delta_plus rose from 0.0 to 2.0"


def test_monotonicity_tolerance_only_absorbs_rounding():
    g = generators.two_node()
    tr = trace_from_instr_csv(g, "t,k,kind,i,j,new_value\n1,0,U,2,,3.000000000000001\n", [0, 3, 0, 0])
    assert len(check_monotonicity(tr)) == 1
    assert check_monotonicity(tr, tol=1e-12) == []
    jump = trace_from_instr_csv(g, "t,k,kind,i,j,new_value\n1,0,U,2,,3.5\n", [0, 3, 0, 0])
    assert len(check_monotonicity(jump, tol=1e-12)) == 1


@pytest.mark.parametrize("seed", range(20))
def test_dmin_rises_on_buckyball(seed):
    g = generators.buckyball(seed % 5)
    o = shortest_distances(g)
    s = counting_process_schedule(g, (4, 4, 2), 200, 1000 + seed)
    tr = run(g, s, BUCKY_INIT, oracle=o, granularity="instr")
    assert check_dmin_increase(tr, o, 10, o.e_min) == []
    assert check_monotonicity(tr) == []


def test_dmin_vacuous_without_underestimates():
    g, tr = _two_node_top()
    assert np.isinf(tr.d_min).all()
    assert check_dmin_increase(tr, None, 1, 3) == []


def test_dmin_flags_stalled_trace():
    g = generators.two_node()
    zeros = np.zeros(4)
    metrics = np.array([[0, 5, 0], [0, 4, 1], [0, 4, 1], [0, 3, 2], [0, 2, 3]], dtype=float)
    tr = Trace(2, 1, zeros, zeros, zeros, metrics, np.zeros(5, dtype=int))
    v = check_dmin_increase(tr, None, 1, 1)
    assert [(x.t, x.kind) for x in v] == [(2, "dmin-increase")]


def test_sandwich_with_zero_noise():
    g = generators.buckyball(0)
    s = counting_process_schedule(g, (2, 2, 1), 50, 0)
    tr = run(g, s, BUCKY_INIT, NoiseSpec(), granularity="instr")
    p, m = run_extreme(g, s, BUCKY_INIT, NoiseSpec(), granularity="instr")
    assert check_sandwich(tr, p, m) == []


@pytest.mark.parametrize("seed", range(20))
def test_sandwich_under_bounded_noise(seed):
    g = generators.buckyball(seed % 5)
    s = counting_process_schedule(g, (2, 2, 1), 150, seed)
    noise = NoiseSpec((0, 2), (-0.3, 0), (-0.1, 0.1), seed=seed)
    tr = run(g, s, BUCKY_INIT, noise, granularity="instr")
    p, m = run_extreme(g, s, BUCKY_INIT, noise, granularity="instr")
    assert check_sandwich(tr, p, m) == []


def test_sandwich_from_snapshots_and_corruption():
    g = generators.buckyball(1)
    s = counting_process_schedule(g, (2, 2, 1), 40, 3)
    noise = NoiseSpec((0, 2), (-0.3, 0), (-0.1, 0.1), seed=3)
    tr = run(g, s, BUCKY_INIT, noise, granularity="instr")
    p, m = run_extreme(g, s, BUCKY_INIT, noise, granularity="instr")
    finite = np.flatnonzero(np.isfinite(p.instr_value))
    p.instr_value[finite[len(finite) // 2]] -= 100.0
    v = check_sandwich(tr, p, m)
    assert len(v) == 1 and v[0].kind == "sandwich"
    k = finite[len(finite) // 2]
    assert (v[0].t, v[0].k) == (int(tr.instr_t[k]), int(tr.instr_k[k]))
    snaps = [run(g, s, BUCKY_INIT, x, keep_states=True) for x in
             (noise, noise.with_sampler("always-max"), noise.with_sampler("always-min"))]
    assert check_sandwich(*snaps) == []


def test_sandwich_requires_shared_schedule():
    g = generators.buckyball(0)
    a = run(g, counting_process_schedule(g, (2, 2, 1), 10, 0), BUCKY_INIT, granularity="instr")
    b = run(g, counting_process_schedule(g, (2, 2, 1), 10, 1), BUCKY_INIT, granularity="instr")
    with pytest.raises(ValueError):
        check_sandwich(a, b, a)
    c = run(g, counting_process_schedule(g, (2, 2, 1), 10, 0), BUCKY_INIT)
    with pytest.raises(ValueError):
        check_sandwich(c, c, c)


def test_constraining_nodes():
    g = generators.buckyball(0)
    o = shortest_distances(g)
    star = NetworkState.from_flat(g, o.steady_state)
    for i in range(g.n):
        if g.is_source[i]:
            with pytest.raises(ValueError):
                current_constraining_nodes(star, g, i)
            continue
        tcn = {int(g.dst[e]) for e in g.nbr_edge[g.nbr_ptr[i]:g.nbr_ptr[i + 1]] if o.tcn[e]}
        assert current_constraining_nodes(star, g, i) == tcn
    g2, tr = _two_node_top()
    assert current_constraining_nodes(tr.terminal_state(g2), g2, 1) == {0}
    assert current_constraining_nodes(init_state(g2, TWO_NODE_INIT), g2, 1) == set()


def test_observed_convergence_time():
    g = generators.two_node()
    o = shortest_distances(g)
    assert observed_convergence_time(run(g, synchronous_schedule(g, 3), o.steady_state)) == 0
    # one more step of Write + Read after the converging ordering: still converged from t = 1
    tr = run(g, from_queues(g, [TOP, [("W", 1, 0), ("R", 1, 0)]]), TWO_NODE_INIT)
    assert observed_convergence_time(tr) == 1
    bk = generators.buckyball(0)
    short = run(bk, counting_process_schedule(bk, (4, 4, 2), 5, 0), BUCKY_INIT)
    assert observed_convergence_time(short) is None


@pytest.mark.parametrize("seed", range(10))
def test_fixed_point_gap_bounds(seed):
    g = generators.random_digraph(12, 0.3, (1, 10), seed=seed, integer=seed % 2 == 0)
    lo = min(0.9, 0.5 * g.w.min())
    assert analysis.check_fixed_points(g, lo, 2.5) == []
    gaps = analysis.fixed_point_gaps(g, lo, 2.5)
    assert gaps["gap_plus"] >= 0 and gaps["gap_minus"] >= 0


def test_convergence_and_robustness_checkers_flag_excess():
    g = generators.two_node()
    o = shortest_distances(g)
    middle = [("W", 1, 0), ("U", 0), ("R", 1, 0), ("U", 1)]
    tr = run(g, from_queues(g, [middle, []]), TWO_NODE_INIT)
    rep = convergence_bounds(o, 1, math.inf)
    rep.T_plus = 1  # deliberately too small
    v = analysis.check_convergence(tr, rep)
    assert [x.t for x in v] == [1, 2]
    noisy = analysis.BoundReport(T_plus=0, T_minus=0, T=0, B_plus=39.0, B_minus=0.0)
    assert [x.t for x in analysis.check_robustness(tr, noisy)] == [0, 1, 2]
