"""Hot loops: queue execution and incremental error metrics.

State is one flat float64 vector ``[d (n), m (E), din (E)]``.  Noise modes:
0 noiseless, 1 constant offsets ``(read, update, write)``, 2 sampled values
consumed in order from three pre-drawn streams.
"""
import numpy as np

from ._accel import jit

INF = np.inf


@jit
def state_metrics(state, ref):
    """(overestimate, underestimate, min underestimating value) of ``state``."""
    over = 0.0
    under = 0.0
    low = INF
    for k in range(state.shape[0]):
        x = state[k]
        r = ref[k]
        if x > r:
            gap = x - r
            if gap > over:
                over = gap
        elif x < r:
            gap = r - x
            if gap > under:
                under = gap
            if x < low:
                low = x
    return over, under, low


@jit
def execute(
    state, kinds, targets, step_ptr, n, m, dst, w, is_source, nbr_ptr, nbr_edge,
    noise_mode, const_eps, noise_r, noise_u, noise_w, ref, keep_states, log_values,
):
    horizon = step_ptr.shape[0] - 1
    size = state.shape[0]
    metrics = np.empty((horizon + 1, 3))
    states = np.empty((horizon + 1 if keep_states else 0, size))
    values = np.empty(kinds.shape[0] if log_values else 0)
    over, under, low = state_metrics(state, ref)
    metrics[0, 0] = over
    metrics[0, 1] = under
    metrics[0, 2] = low
    if keep_states:
        states[0, :] = state
    cr = 0
    cu = 0
    cw = 0
    for t in range(1, horizon + 1):
        for p in range(step_ptr[t - 1], step_ptr[t]):
            kind = kinds[p]
            x = targets[p]
            if kind == 0:
                idx = x
                if is_source[x]:
                    val = 0.0
                else:
                    val = INF
                    for q in range(nbr_ptr[x], nbr_ptr[x + 1]):
                        e = nbr_edge[q]
                        v = state[n + m + e] + w[e]
                        if noise_mode == 1:
                            v = v + const_eps[1]
                        elif noise_mode == 2:
                            v = v + noise_u[cu]
                            cu += 1
                        if v < val:
                            val = v
            elif kind == 1:
                idx = n + x
                val = state[dst[x]]
                if noise_mode == 1:
                    val = val + const_eps[2]
                elif noise_mode == 2:
                    val = val + noise_w[cw]
                    cw += 1
            else:
                idx = n + m + x
                val = state[n + x]
                if noise_mode == 1:
                    val = val + const_eps[0]
                elif noise_mode == 2:
                    val = val + noise_r[cr]
                    cr += 1
            state[idx] = val
            if log_values:
                values[p] = val
        over, under, low = state_metrics(state, ref)
        metrics[t, 0] = over
        metrics[t, 1] = under
        metrics[t, 2] = low
        if keep_states:
            states[t, :] = state
    return state, metrics, states, values


@jit
def _leaf(x, r):
    if x > r:
        return x - r, 0.0, INF
    if x < r:
        return 0.0, r - x, x
    return 0.0, 0.0, INF


@jit
def replay_metrics(initial, ref, indices, values):
    """Metrics before and after every logged write, via three segment trees."""
    size = initial.shape[0]
    cap = 1
    while cap < size:
        cap *= 2
    over = np.zeros(2 * cap)
    under = np.zeros(2 * cap)
    low = np.full(2 * cap, INF)
    for k in range(size):
        a, b, c = _leaf(initial[k], ref[k])
        over[cap + k] = a
        under[cap + k] = b
        low[cap + k] = c
    for node in range(cap - 1, 0, -1):
        over[node] = max(over[2 * node], over[2 * node + 1])
        under[node] = max(under[2 * node], under[2 * node + 1])
        low[node] = min(low[2 * node], low[2 * node + 1])
    out = np.empty((indices.shape[0] + 1, 3))
    out[0, 0] = over[1]
    out[0, 1] = under[1]
    out[0, 2] = low[1]
    for p in range(indices.shape[0]):
        k = indices[p]
        a, b, c = _leaf(values[p], ref[k])
        node = cap + k
        over[node] = a
        under[node] = b
        low[node] = c
        node //= 2
        while node >= 1:
            over[node] = max(over[2 * node], over[2 * node + 1])
            under[node] = max(under[2 * node], under[2 * node + 1])
            low[node] = min(low[2 * node], low[2 * node + 1])
            node //= 2
        out[p + 1, 0] = over[1]
        out[p + 1, 1] = under[1]
        out[p + 1, 2] = low[1]
    return out
