"""Event streams and per-step execution queues.

A schedule stores every queue back to back: ``kinds[p]`` / ``targets[p]`` is
instruction ``p``, and step ``t`` (1-based) owns ``p`` in
``step_ptr[t-1]:step_ptr[t]``.  Targets are vertex ids for Updates and edge
ids for Writes and Reads.  An instruction's position inside its step is the
fast-time-scale index ``k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .graph import Graph

UPDATE, WRITE, READ = 0, 1, 2
KIND_LETTERS = "UWR"
POLICIES = ("random-permutation", "sort-UWR", "sort-RUW")


class Instruction(NamedTuple):
    kind: str
    i: int
    j: int | None = None

    def __str__(self):
        name = {"U": "Update", "W": "Write", "R": "Read"}[self.kind]
        if self.kind == "U":
            return f"{name}({self.i + 1})"
        return f"{name}({self.i + 1},{self.j + 1})"


@dataclass(frozen=True)
class Windows:
    read: int
    update: int
    write: int

    def __post_init__(self):
        if self.update < 1:
            raise ValueError("update window must be at least 1")
        if self.read < 0 or self.write < 0:
            raise ValueError("read/write windows must be nonnegative")

    @classmethod
    def of(cls, w) -> "Windows":
        if isinstance(w, Windows):
            return w
        r, u, wr = w
        return cls(int(r), int(u), int(wr))

    @property
    def P(self) -> int:
        return self.read + self.update + self.write

    def astuple(self) -> tuple[int, int, int]:
        return (self.read, self.update, self.write)


def asynchrony_measure(windows) -> int:
    return Windows.of(windows).P


@dataclass(frozen=True, eq=False)
class Schedule:
    horizon: int
    windows: Windows
    kinds: np.ndarray
    targets: np.ndarray
    step_ptr: np.ndarray

    def __len__(self):
        return int(self.kinds.shape[0])

    def step_slice(self, t: int) -> slice:
        return slice(int(self.step_ptr[t - 1]), int(self.step_ptr[t]))

    def queue_size(self, t: int) -> int:
        return int(self.step_ptr[t] - self.step_ptr[t - 1])

    def queue(self, t: int, g: Graph) -> list[Instruction]:
        sl = self.step_slice(t)
        return [_instruction(g, k, x) for k, x in zip(self.kinds[sl], self.targets[sl])]

    def steps(self):
        """Per-instruction step index ``t`` (1-based) and queue position ``k``."""
        sizes = np.diff(self.step_ptr)
        t = np.repeat(np.arange(1, self.horizon + 1), sizes)
        k = np.arange(len(self)) - np.repeat(self.step_ptr[:-1], sizes)
        return t, k

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.windows == other.windows
            and np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.step_ptr, other.step_ptr)
        )

    __hash__ = None

    # -- JSON Lines ----------------------------------------------------
    def dumps(self, g: Graph) -> str:
        lines = []
        for t in range(1, self.horizon + 1):
            q = []
            for ins in self.queue(t, g):
                if ins.kind == "U":
                    q.append(["U", ins.i + 1])
                else:
                    q.append([ins.kind, ins.i + 1, ins.j + 1])
            row = {"t": t, "q": q}
            if t == 1:
                row["windows"] = list(self.windows.astuple())
            lines.append(json.dumps(row, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def save(self, path, g: Graph) -> None:
        Path(path).write_text(self.dumps(g))

    @classmethod
    def loads(cls, text: str, g: Graph, windows=None) -> "Schedule":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        rows.sort(key=lambda r: r["t"])
        if windows is None:
            windows = rows[0].get("windows", (0, 1, 0)) if rows else (0, 1, 0)
        horizon = rows[-1]["t"] if rows else 0
        queues: list[list[Instruction]] = [[] for _ in range(horizon)]
        for r in rows:
            for item in r["q"]:
                kind = item[0]
                if kind == "U":
                    queues[r["t"] - 1].append(Instruction("U", item[1] - 1))
                else:
                    queues[r["t"] - 1].append(Instruction(kind, item[1] - 1, item[2] - 1))
        return from_queues(g, queues, windows)

    @classmethod
    def load(cls, path, g: Graph, windows=None) -> "Schedule":
        return cls.loads(Path(path).read_text(), g, windows)


def _instruction(g: Graph, kind: int, target: int) -> Instruction:
    if kind == UPDATE:
        return Instruction("U", int(target))
    return Instruction(KIND_LETTERS[kind], int(g.src[target]), int(g.dst[target]))


def from_queues(g: Graph, queues, windows=(0, 1, 0)) -> Schedule:
    """Build a schedule from explicit per-step instruction lists (0-indexed)."""
    kinds, targets, ptr = [], [], [0]
    for q in queues:
        for ins in q:
            ins = Instruction(*ins) if not isinstance(ins, Instruction) else ins
            if ins.kind == "U":
                if not 0 <= ins.i < g.n:
                    raise ValueError(f"Update references missing vertex {ins.i}")
                kinds.append(UPDATE)
                targets.append(ins.i)
            else:
                e = g.edge_index.get((ins.i, ins.j))
                if e is None:
                    raise ValueError(f"{ins.kind} references missing edge ({ins.i}, {ins.j})")
                kinds.append(KIND_LETTERS.index(ins.kind))
                targets.append(e)
        ptr.append(len(kinds))
    return Schedule(
        len(queues),
        Windows.of(windows),
        np.array(kinds, dtype=np.int8),
        np.array(targets, dtype=np.int32),
        np.array(ptr, dtype=np.int64),
    )


def synchronous_schedule(g: Graph, horizon: int) -> Schedule:
    n, m = g.n, g.n_edges
    one_k = np.concatenate([np.full(n, UPDATE), np.full(m, WRITE), np.full(m, READ)]).astype(np.int8)
    one_t = np.concatenate([np.arange(n), np.arange(m), np.arange(m)]).astype(np.int32)
    size = n + 2 * m
    return Schedule(
        horizon,
        Windows(0, 1, 0),
        np.tile(one_k, horizon),
        np.tile(one_t, horizon),
        np.arange(horizon + 1, dtype=np.int64) * size,
    )


def _class_rank(windows: Windows, policy: str) -> np.ndarray:
    """Sort rank per kind (indexed U, W, R) for a queue-ordering policy."""
    if policy == "random-permutation":
        if windows.write == 0:
            return np.array([0, 1, 2])
        if windows.read == 0:
            return np.array([0, 0, 1])
        return np.array([0, 0, 0])
    if policy.startswith("sort-") or policy.startswith("fixed:"):
        order = policy.split("-", 1)[1] if policy.startswith("sort-") else policy.split(":", 1)[1]
        if sorted(order) != sorted("UWR"):
            raise ValueError(f"bad class order in policy {policy!r}")
        rank = np.array([order.index(c) for c in "UWR"])
        # P_W = 0: U < W < R; P_R = 0: reads come last
        if windows.write == 0 and not (rank[0] < rank[1] < rank[2]):
            raise ValueError(f"policy {policy!r} breaks the zero write-window ordering")
        if windows.read == 0 and rank[2] != 2:
            raise ValueError(f"policy {policy!r} breaks the zero read-window ordering")
        return rank
    raise ValueError(f"unknown ordering policy {policy!r}")


def counting_process_schedule(
    g: Graph, windows, horizon: int, seed: int, ordering: str = "random-permutation"
) -> Schedule:
    """Counting-process event streams: each process waits U{1..window} steps.

    A zero read or write window means that event fires on every step.
    Ordering policies: ``random-permutation``, ``sort-UWR``, ``sort-RUW``, or
    ``fixed:XYZ`` for an explicit class order; ties inside a class go by id.
    """
    win = Windows.of(windows)
    rank = _class_rank(win, ordering)
    shuffle = ordering == "random-permutation"
    rng = np.random.default_rng(seed)
    n, m = g.n, g.n_edges

    def first(size, width):
        return rng.integers(1, width + 1, size=size) if width >= 1 else None

    nxt_u = first(n, win.update)
    nxt_w = first(m, win.write)
    nxt_r = first(m, win.read)
    all_edges = np.arange(m, dtype=np.int32)

    kinds, targets, ptr = [], [], [0]
    for t in range(1, horizon + 1):
        u = np.flatnonzero(nxt_u == t).astype(np.int32)
        nxt_u[u] += rng.integers(1, win.update + 1, size=u.size)
        if nxt_w is None:
            w = all_edges
        else:
            w = np.flatnonzero(nxt_w == t).astype(np.int32)
            nxt_w[w] += rng.integers(1, win.write + 1, size=w.size)
        if nxt_r is None:
            r = all_edges
        else:
            r = np.flatnonzero(nxt_r == t).astype(np.int32)
            nxt_r[r] += rng.integers(1, win.read + 1, size=r.size)
        k = np.concatenate([np.full(u.size, UPDATE), np.full(w.size, WRITE), np.full(r.size, READ)]).astype(np.int8)
        x = np.concatenate([u, w, r])
        if shuffle and k.size:
            perm = rng.permutation(k.size)
            k, x = k[perm], x[perm]
        order = np.argsort(rank[k], kind="stable")
        kinds.append(k[order])
        targets.append(x[order])
        ptr.append(ptr[-1] + k.size)
    return Schedule(
        horizon,
        win,
        np.concatenate(kinds) if kinds else np.zeros(0, np.int8),
        np.concatenate(targets).astype(np.int32) if targets else np.zeros(0, np.int32),
        np.array(ptr, dtype=np.int64),
    )


def _coverage_gaps(fired: np.ndarray, width: int, label: str, names) -> list[str]:
    """First failing window for each column of the (T, items) fired matrix."""
    horizon = fired.shape[0]
    if horizon < width or fired.shape[1] == 0:
        return []
    cs = np.vstack([np.zeros((1, fired.shape[1]), dtype=np.int64), np.cumsum(fired, axis=0)])
    counts = cs[width:] - cs[:-width]  # row s covers steps s+1 .. s+width
    out = []
    bad_cols = np.flatnonzero((counts == 0).any(axis=0))
    for c in bad_cols:
        s = int(np.argmax(counts[:, c] == 0))
        out.append(f"{label} {names(c)} missing from window [{s + 1}, {s + width}]")
    return out


def validate_windows(s: Schedule, g: Graph) -> list[str]:
    """Check window coverage, queue sizes, duplicates and ordering conventions."""
    out = []
    n, m = g.n, g.n_edges
    if len(s) and (s.targets.min() < 0 or any(
        s.targets[s.kinds == k].max(initial=-1) >= lim for k, lim in ((UPDATE, n), (WRITE, m), (READ, m))
    )):
        return ["schedule references vertices or edges missing from the graph"]
    t_of, _ = s.steps()
    fired = {k: np.zeros((s.horizon, n if k == UPDATE else m), dtype=np.int64) for k in (UPDATE, WRITE, READ)}
    for k in (UPDATE, WRITE, READ):
        sel = s.kinds == k
        np.add.at(fired[k], (t_of[sel] - 1, s.targets[sel]), 1)
    bound = n + 2 * m
    for t in range(1, s.horizon + 1):
        if s.queue_size(t) > bound:
            out.append(f"step {t}: queue holds {s.queue_size(t)} > {bound} instructions")
    for k in (UPDATE, WRITE, READ):
        dup_t, dup_x = np.nonzero(fired[k] > 1)
        for t, x in zip(dup_t, dup_x):
            out.append(f"step {t + 1}: duplicate {KIND_LETTERS[k]} on target {x}")

    def vname(c):
        return str(int(c))

    def ename(c):
        return f"({int(g.src[c])}, {int(g.dst[c])})"

    win = s.windows
    out += _coverage_gaps(fired[UPDATE] > 0, win.update, "vertex", vname)
    out += _coverage_gaps(fired[WRITE] > 0, max(1, win.write), "write edge", ename)
    out += _coverage_gaps(fired[READ] > 0, max(1, win.read), "read edge", ename)

    for t in range(1, s.horizon + 1):
        k = s.kinds[s.step_slice(t)]
        pos = {c: np.flatnonzero(k == c) for c in (UPDATE, WRITE, READ)}
        if win.write == 0 and pos[WRITE].size:
            if pos[UPDATE].size and pos[WRITE].min() < pos[UPDATE].max():
                out.append(f"step {t}: a Write precedes an Update with zero write window")
            if pos[READ].size and pos[WRITE].max() > pos[READ].min():
                out.append(f"step {t}: a Write follows a Read with zero write window")
        if win.read == 0 and pos[READ].size:
            others = np.flatnonzero(k != READ)
            if others.size and pos[READ].min() < others.max():
                out.append(f"step {t}: a Read precedes a non-Read with zero read window")
    return out
