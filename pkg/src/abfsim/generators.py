"""Seeded graph constructors."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, reaches_sources, validate

# Truncated icosahedron, vertices labelled by descending z then azimuth of the
# standard (0, ±1, ±3φ)-family embedding.  90 undirected adjacencies.
BUCKYBALL_ADJACENCY = (
    (0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6), (2, 10), (3, 7), (3, 11), (4, 8),
    (4, 12), (5, 9), (5, 13), (6, 9), (6, 14), (7, 8), (7, 15), (8, 16), (9, 17), (10, 11),
    (10, 18), (11, 19), (12, 13), (12, 20), (13, 21), (14, 22), (14, 27), (15, 23), (15, 24), (16, 24),
    (16, 25), (17, 26), (17, 27), (18, 22), (18, 28), (19, 23), (19, 29), (20, 25), (20, 30), (21, 26),
    (21, 31), (22, 32), (23, 33), (24, 34), (25, 35), (26, 36), (27, 37), (28, 29), (28, 38), (29, 39),
    (30, 31), (30, 40), (31, 41), (32, 38), (32, 42), (33, 39), (33, 43), (34, 43), (34, 44), (35, 40),
    (35, 44), (36, 41), (36, 45), (37, 42), (37, 45), (38, 46), (39, 47), (40, 48), (41, 49), (42, 50),
    (43, 51), (44, 52), (45, 53), (46, 47), (46, 54), (47, 55), (48, 49), (48, 56), (49, 57), (50, 53),
    (50, 54), (51, 52), (51, 55), (52, 56), (53, 57), (54, 58), (55, 58), (56, 59), (57, 59), (58, 59),
)
BUCKYBALL_SHA256 = "55059664e83f199046cab6a8616c9f7914f099bb0bf6810d3226a903f99f546b"
BUCKYBALL_SOURCES = (18, 36, 56)  # 19, 37, 57 when 1-indexed


def adjacency_digest(pairs) -> str:
    text = ";".join(f"{a}-{b}" for a, b in sorted(pairs))
    return hashlib.sha256(text.encode()).hexdigest()


def two_node() -> Graph:
    """Vertex 2 reads from source 1 over an edge of weight 3."""
    return Graph.from_edges(2, [(1, 0, 3)], [0])


def line(n: int) -> Graph:
    """Chain ``n -> n-1 -> ... -> 1`` with unit weights and source 1."""
    if n < 2:
        raise ValueError("line needs at least two vertices")
    return Graph.from_edges(n, [(i, i - 1, 1) for i in range(1, n)], [0])


def buckyball(seed: int, low: int = 1, high: int = 20) -> Graph:
    """Truncated-icosahedron graph with independent integer weights per direction."""
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a, b in BUCKYBALL_ADJACENCY] + [(b, a) for a, b in BUCKYBALL_ADJACENCY]
    pairs.sort()
    w = rng.integers(low, high + 1, size=len(pairs))
    return Graph.from_edges(60, [(a, b, int(x)) for (a, b), x in zip(pairs, w)], BUCKYBALL_SOURCES)


def random_digraph(n: int, edge_prob: float, weight_range=(1, 10), seed: int = 0, n_sources: int = 1,
                   integer: bool = True, max_tries: int = 1000) -> Graph:
    """Erdős–Rényi digraph, resampled until every vertex reaches the sources."""
    if n < 2:
        raise ValueError("need at least two vertices")
    if not 0 < edge_prob <= 1:
        raise ValueError("edge_prob must be in (0, 1]")
    lo, hi = weight_range
    rng = np.random.default_rng(seed)
    sources = list(range(n_sources))
    for _ in range(max_tries):
        mask = rng.random((n, n)) < edge_prob
        np.fill_diagonal(mask, False)
        src, dst = np.nonzero(mask)
        if integer:
            w = rng.integers(lo, hi + 1, size=src.size)
        else:
            w = rng.uniform(lo, hi, size=src.size)
        g = Graph.from_edges(n, zip(src.tolist(), dst.tolist(), w.tolist()), sources)
        if reaches_sources(g).all():
            return g
    raise GraphError(f"no graph with a path to the sources after {max_tries} draws; raise edge_prob")


@dataclass(frozen=True)
class GeometricConfig:
    n: int = 1000
    box: tuple[float, float, float] = (6000.0, 8000.0, 10000.0)
    k: int = 5
    num_sources: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError("need 0 < k < n")
        if not 1 <= self.num_sources <= self.n:
            raise ValueError("need 1 <= num_sources <= n")
        if len(self.box) != 3 or min(self.box) <= 0:
            raise ValueError("box needs three positive extents")


def random_geometric(cfg: GeometricConfig) -> Graph:
    """Agents uniform in a box, each linked to its ``k`` nearest neighbours.

    Weights are Euclidean distances; the first ``num_sources`` agents form the
    source set.  Distance ties go to the lower vertex id.
    """
    rng = np.random.default_rng(cfg.seed)
    pos = rng.uniform(0.0, 1.0, size=(cfg.n, 3)) * np.asarray(cfg.box, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :cfg.k]
    edges = [(i, int(j), float(dist[i, j])) for i in range(cfg.n) for j in nearest[i]]
    g = Graph.from_edges(cfg.n, edges, range(cfg.num_sources), positions=pos)
    problems = validate(g)
    if problems:
        raise GraphError(f"seed {cfg.seed} gives an invalid graph ({problems[0]}); try another seed")
    return g
