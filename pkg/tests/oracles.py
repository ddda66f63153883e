"""Slow, independent reference implementations used only by the tests.

Nothing here imports the package's kernels; graphs are plain edge lists
``[(i, j, w), ...]`` meaning ``i`` reads from ``j`` over weight ``w``.
"""
from __future__ import annotations

import math
from collections import deque


def brute_force_distances(n, edges, sources):
    """Minimum path weight to the source set over all simple paths."""
    out = {i: [] for i in range(n)}
    for i, j, w in edges:
        out[i].append((j, w))
    src = set(sources)
    best = [math.inf] * n

    def dfs(start, v, acc, seen):
        if v in src:
            best[start] = min(best[start], acc)
            return
        for j, w in out[v]:
            if j not in seen:
                seen.add(j)
                dfs(start, j, acc + w, seen)
                seen.remove(j)

    for s in range(n):
        dfs(s, s, 0.0, {s})
    return best


def brute_force_max_product(n, edges, sources):
    """Highest product of edge probabilities over simple paths to the source set."""
    out = {i: [] for i in range(n)}
    for i, j, p in edges:
        out[i].append((j, p))
    src = set(sources)
    best = [0.0] * n

    def dfs(start, v, acc, seen):
        if v in src:
            best[start] = max(best[start], acc)
            return
        for j, p in out[v]:
            if j not in seen:
                seen.add(j)
                dfs(start, j, acc * p, seen)
                seen.remove(j)

    for s in range(n):
        dfs(s, s, 1.0, {s})
    return best


def max_product_fixed_point(n, edges, sources, sweeps=None):
    """Probability-domain relaxation: theta_i = max_j p_ij * theta_j, sources pinned at 1."""
    theta = [1.0 if i in set(sources) else 0.0 for i in range(n)]
    for _ in range(sweeps or n + 1):
        new = list(theta)
        for i in range(n):
            if i in set(sources):
                continue
            new[i] = max((p * theta[j] for a, j, p in edges if a == i), default=0.0)
        theta = new
    return theta


def min_node_count_in_tcg(n, edges, sources, dstar):
    """Per-vertex fewest nodes on a route to the sources using only tight edges."""
    tight = {i: [] for i in range(n)}
    for i, j, w in edges:
        if dstar[i] == dstar[j] + w:
            tight[i].append(j)
    src = set(sources)
    counts = []
    for s in range(n):
        seen = {s}
        q = deque([(s, 1)])
        found = None
        while q:
            v, c = q.popleft()
            if v in src:
                found = c
                break
            for j in tight[v]:
                if j not in seen:
                    seen.add(j)
                    q.append((j, c + 1))
        counts.append(found)
    return counts


def synchronous_iteration(n, edges, sources, din0, steps):
    """Direct iteration of the neighbour-only Bellman-Ford map on vertex estimates.

    ``din0`` maps each edge ``(i, j)`` to the inbox value seen by the first
    sweep; after that every inbox holds the previous sweep's ``d_j``.
    Returns the list of ``d`` vectors for steps 1..steps.
    """
    src = set(sources)
    nbrs = {i: [] for i in range(n)}
    for i, j, w in edges:
        nbrs[i].append((j, w))
    inbox = dict(din0)
    history = []
    for _ in range(steps):
        d = []
        for i in range(n):
            if i in src:
                d.append(0.0)
            else:
                d.append(min((inbox[(i, j)] + w for j, w in nbrs[i]), default=math.inf))
        inbox = {(i, j): d[j] for i, j, _ in edges}
        history.append(d)
    return history


def reference_execute(n, edges, sources, state, queues, eps=(0.0, 0.0, 0.0)):
    """Dict-based engine with constant (read, update, write) offsets.

    ``state`` is ``{"d": list, "m": {(i, j): v}, "din": {(i, j): v}}``;
    ``queues`` is a list of instruction lists like ``("U", i)`` or
    ``("W", i, j)``.  Returns the state after each instruction.
    """
    er, eu, ew = eps
    src = set(sources)
    w = {(i, j): x for i, j, x in edges}
    d = list(state["d"])
    m = dict(state["m"])
    din = dict(state["din"])
    snaps = []
    for q in queues:
        for ins in q:
            if ins[0] == "U":
                i = ins[1]
                if i in src:
                    d[i] = 0.0
                else:
                    d[i] = min((din[e] + w[e] + eu for e in w if e[0] == i), default=math.inf)
            elif ins[0] == "W":
                m[(ins[1], ins[2])] = d[ins[2]] + ew
            else:
                din[(ins[1], ins[2])] = m[(ins[1], ins[2])] + er
            snaps.append({"d": list(d), "m": dict(m), "din": dict(din)})
    return snaps
