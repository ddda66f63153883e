"""Directed weighted graphs with a source set, and the exact shortest-path oracle.

Edge ``(i, j)`` means agent ``i`` reads from its neighbour ``j``: paths run
``i -> j`` towards the sources while distance information flows ``j -> i``.
Vertices are 0-indexed here; JSON files use 1-indexed ids.
"""
from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import jsonschema
import numpy as np

TCN_RTOL = 1e-9

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["n", "sources", "edges"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "sources": {"type": "array", "items": {"type": "integer"}},
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "w"],
                "properties": {
                    "from": {"type": "integer"},
                    "to": {"type": "integer"},
                    "w": {"type": "number"},
                },
            },
        },
        "positions": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
}


class GraphError(ValueError):
    """Raised when a graph violates a standing assumption."""


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    src: np.ndarray
    dst: np.ndarray
    w: np.ndarray
    sources: tuple[int, ...]
    positions: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n, edges, sources, positions=None) -> "Graph":
        """Build from ``[(i, j, weight), ...]`` with 0-indexed vertices."""
        edges = list(edges)
        src = np.array([e[0] for e in edges], dtype=np.int32)
        dst = np.array([e[1] for e in edges], dtype=np.int32)
        w = np.array([e[2] for e in edges], dtype=np.float64)
        pos = None if positions is None else np.asarray(positions, dtype=np.float64)
        return cls(int(n), src, dst, w, tuple(sorted(set(int(s) for s in sources))), pos)

    def with_weights(self, w) -> "Graph":
        return Graph(self.n, self.src, self.dst, np.asarray(w, dtype=np.float64), self.sources, self.positions)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def state_size(self) -> int:
        return self.n + 2 * self.n_edges

    @cached_property
    def is_source(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=np.bool_)
        mask[[s for s in self.sources if 0 <= s < self.n]] = True
        return mask

    @cached_property
    def _csr(self):
        order = np.argsort(self.src, kind="stable").astype(np.int32)
        counts = np.bincount(self.src, minlength=self.n)
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr, order

    @property
    def nbr_ptr(self) -> np.ndarray:
        """CSR offsets into :attr:`nbr_edge`, one slice per reading vertex."""
        return self._csr[0]

    @property
    def nbr_edge(self) -> np.ndarray:
        """Edge ids grouped by reading vertex ``i`` (the in-neighbours of ``i``)."""
        return self._csr[1]

    def neighbours(self, i: int) -> np.ndarray:
        ptr, order = self._csr
        return self.dst[order[ptr[i]:ptr[i + 1]]]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): e for e, (i, j) in enumerate(zip(self.src, self.dst))}

    @cached_property
    def integer_weights(self) -> bool:
        return bool(np.all(np.isfinite(self.w)) and np.all(self.w == np.round(self.w)))

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(x)) for i, j, x in zip(self.src, self.dst, self.w)]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.sources == other.sources
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.w, other.w)
        )

    __hash__ = None

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        doc = {
            "n": self.n,
            "sources": [s + 1 for s in self.sources],
            "edges": [{"from": i + 1, "to": j + 1, "w": _num(x)} for i, j, x in self.edges()],
        }
        if self.positions is not None:
            doc["positions"] = self.positions.tolist()
        return doc

    @classmethod
    def from_json(cls, doc: dict, check: bool = True) -> "Graph":
        try:
            jsonschema.validate(doc, GRAPH_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise GraphError(f"malformed graph file: {exc.message}") from None
        g = cls.from_edges(
            doc["n"],
            [(e["from"] - 1, e["to"] - 1, e["w"]) for e in doc["edges"]],
            [s - 1 for s in doc["sources"]],
            positions=doc.get("positions"),
        )
        if check:
            problems = validate(g)
            if problems:
                raise GraphError("; ".join(problems))
        return g

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path, check: bool = True) -> "Graph":
        return cls.from_json(json.loads(Path(path).read_text()), check=check)


def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def reaches_sources(g: Graph) -> np.ndarray:
    """Mask of vertices with a directed path to the source set."""
    seen = g.is_source.copy()
    readers: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in zip(g.src, g.dst):
        if 0 <= i < g.n and 0 <= j < g.n:
            readers[j].append(int(i))
    queue = deque(np.flatnonzero(seen).tolist())
    while queue:
        j = queue.popleft()
        for i in readers[j]:
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return seen


def validate(g: Graph) -> list[str]:
    """List every assumption violation in ``g``; an empty list means valid."""
    out = []
    if g.n < 1:
        return ["vertex count must be positive"]
    if not g.sources:
        out.append("empty source set")
    for s in g.sources:
        if not 0 <= s < g.n:
            out.append(f"source {s} out of range")
    seen = set()
    for e, (i, j, x) in enumerate(g.edges()):
        if not (0 <= i < g.n and 0 <= j < g.n):
            out.append(f"edge {e} ({i}, {j}) references a missing vertex")
            continue
        if i == j:
            out.append(f"self-loop at vertex {i}")
        if (i, j) in seen:
            out.append(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        if not x > 0:
            out.append(f"non-positive weight {x} on edge ({i}, {j})")
    if g.sources and not any("out of range" in p or "missing vertex" in p for p in out):
        for v in np.flatnonzero(~reaches_sources(g)):
            out.append(f"vertex {v} has no path to the source set")
    return out


def e_min(g: Graph) -> float:
    if g.n_edges == 0:
        raise GraphError("graph has no edges")
    return float(g.w.min())


@dataclass(frozen=True, eq=False)
class OracleSolution:
    dstar: np.ndarray
    tcn: np.ndarray  # per-edge mask: dst is a true constraining node of src
    hops: np.ndarray  # fewest nodes on a true-constraining route to S
    hops_longest: np.ndarray  # most nodes on any true-constraining chain to S
    e_min: float
    n: int
    edge_dst: np.ndarray = field(repr=False)

    @property
    def dstar_max(self) -> float:
        return float(self.dstar.max())

    @property
    def diameter(self) -> int:
        return int(self.hops.max())

    @property
    def diameter_conservative(self) -> int:
        return int(self.hops_longest.max())

    @cached_property
    def steady_state(self) -> np.ndarray:
        """Flat ``[d*, d*_j per edge (outbox), d*_j per edge (inbox)]``."""
        buf = self.dstar[self.edge_dst]
        return np.concatenate([self.dstar, buf, buf])

    def tcg_edges(self, g: Graph) -> list[tuple[int, int]]:
        return [(int(g.src[e]), int(g.dst[e])) for e in np.flatnonzero(self.tcn)]


def _dijkstra_to_sources(g: Graph) -> np.ndarray:
    readers: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for i, j, x in g.edges():
        readers[j].append((i, x))
    dist = np.full(g.n, math.inf)
    heap = []
    for s in g.sources:
        dist[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    done = np.zeros(g.n, dtype=bool)
    while heap:
        dj, j = heapq.heappop(heap)
        if done[j]:
            continue
        done[j] = True
        for i, x in readers[j]:
            # same operand order as the engine's Update: inbox + weight
            cand = dj + x
            if cand < dist[i]:
                dist[i] = cand
                heapq.heappush(heap, (cand, i))
    return dist


def _same(a: float, b: float, exact: bool) -> bool:
    if exact:
        return a == b
    return math.isclose(a, b, rel_tol=TCN_RTOL, abs_tol=0.0) or a == b


def shortest_distances(g: Graph) -> OracleSolution:
    """Exact distances to the source set plus the true constraining graph."""
    problems = validate(g)
    if problems:
        raise GraphError("; ".join(problems))
    dstar = _dijkstra_to_sources(g)
    exact = g.integer_weights
    tcn = np.zeros(g.n_edges, dtype=bool)
    for e, (i, j, x) in enumerate(g.edges()):
        if not g.is_source[i]:
            tcn[e] = _same(dstar[i], x + dstar[j], exact)

    # TCN edges strictly decrease d*, so increasing-d* order is topological
    hops = np.zeros(g.n, dtype=np.int64)
    longest = np.zeros(g.n, dtype=np.int64)
    ptr, order = g.nbr_ptr, g.nbr_edge
    for i in np.argsort(dstar, kind="stable"):
        if g.is_source[i]:
            hops[i] = longest[i] = 1
            continue
        es = [e for e in order[ptr[i]:ptr[i + 1]] if tcn[e]]
        below = [int(g.dst[e]) for e in es]
        hops[i] = 1 + min(hops[j] for j in below)
        longest[i] = 1 + max(longest[j] for j in below)
    return OracleSolution(dstar, tcn, hops, longest, e_min(g), g.n, g.dst.copy())


def perturb(g: Graph, eps_min: float, eps_max: float) -> tuple[Graph, Graph]:
    """Graphs with every weight raised by ``eps_max`` / lowered by ``eps_min``."""
    if eps_min < 0 or eps_max < 0:
        raise ValueError("noise aggregates must be nonnegative")
    if eps_min >= e_min(g):
        raise GraphError(f"eps_min={eps_min} must be below the minimum edge weight {e_min(g)}")
    return g.with_weights(g.w + eps_max), g.with_weights(g.w - eps_min)
