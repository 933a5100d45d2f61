"""The quenched biased walk on a realized tree.

Excursions are delimited by visits to the vertex above the root.  The walk
starts at the root at time 0, so the first excursion ends at the first visit
to ``PARENT_OF_ROOT`` and may have length 1; later excursions start there and
step deterministically back to the root.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Collection, Sequence

import numpy as np

from .environment import PARENT_OF_ROOT, ROOT, TreeArena

DEFAULT_STEP_CAP = 10 ** 9
_BLOCK = 1 << 16


@dataclass(frozen=True)
class WalkState:
    vertex: int = ROOT
    n: int = 0
    max_v: float = 0.0
    max_depth: int = 0
    hits: int = 0


@dataclass(frozen=True)
class ExcursionRecord:
    index: int
    length: int
    max_v: float
    max_depth: int
    hit: bool | None = None
    probe_visits: int = 0


@dataclass
class ExcursionRun:
    records: list[ExcursionRecord]
    truncated: bool
    total_steps: int
    rho: list[int] = field(default_factory=list)

    def hit_frequency(self):
        from .stats import mean_estimate
        return mean_estimate(np.array([r.hit for r in self.records], dtype=float))

    def probe_counts(self) -> np.ndarray:
        return np.array([r.probe_visits for r in self.records], dtype=float)


@dataclass(frozen=True)
class TrajectorySummary:
    n_steps: int
    max_v: float
    max_depth: int
    final_v: float
    final_depth: int
    rho_count: int
    checkpoints: dict = field(default_factory=dict)

    @property
    def ratio_v(self) -> float:
        return self.max_v / math.log(self.n_steps) ** 2 if self.n_steps > 1 else math.nan

    @property
    def ratio_depth(self) -> float:
        return self.max_depth / math.log(self.n_steps) ** 3 if self.n_steps > 1 else math.nan


def _depth(arena: TreeArena, v: int) -> int:
    return -1 if v == PARENT_OF_ROOT else arena.depth[v]


def _potential(arena: TreeArena, v: int) -> float:
    return 0.0 if v == PARENT_OF_ROOT else arena.V[v]


def next_vertex(arena: TreeArena, v: int, u: float) -> int:
    """Move from ``v`` using the uniform ``u`` (unused at ``PARENT_OF_ROOT``)."""
    if v == PARENT_OF_ROOT:
        return ROOT
    cum = arena.cum[v]
    if cum is None:
        arena.expand(v)
        cum = arena.cum[v]
    i = bisect_right(cum, u)
    if i == 0:
        return arena.parent[v]
    return arena.first_child[v] + i - 1


def step(arena: TreeArena, state: WalkState, rng: np.random.Generator) -> WalkState:
    """One step of the walk.  No uniform is consumed at ``PARENT_OF_ROOT``."""
    v = state.vertex
    w = ROOT if v == PARENT_OF_ROOT else next_vertex(arena, v, rng.random())
    return replace(
        state,
        vertex=w,
        n=state.n + 1,
        max_v=max(state.max_v, _potential(arena, w)),
        max_depth=max(state.max_depth, _depth(arena, w)),
        hits=state.hits + (w == PARENT_OF_ROOT),
    )


def run_excursions(arena: TreeArena, n_excursions: int, rng: np.random.Generator,
                   probe_r: float | None = None, probes: Collection[int] | None = None,
                   step_cap: int = DEFAULT_STEP_CAP) -> ExcursionRun:
    """Simulate until the ``n_excursions``-th visit to ``PARENT_OF_ROOT``.

    ``probe_r`` sets each record's ``hit`` flag (excursion reached potential
    ``>= probe_r``); ``probes`` is a set of vertices whose distinct visits are
    counted per excursion.
    """
    if n_excursions < 1:
        raise ValueError("n_excursions must be >= 1")
    probe_set = frozenset(probes) if probes else frozenset()
    track = bool(probe_set)
    V, depth, parent, first_child, cum = arena.V, arena.depth, arena.parent, arena.first_child, arena.cum
    expand = arena.expand
    buf = rng.random(_BLOCK).tolist()
    bi = 0
    records: list[ExcursionRecord] = []
    rho: list[int] = []
    n = 0
    v = ROOT
    truncated = False
    start = 0
    for k in range(n_excursions):
        mv = 0.0
        md = 0
        seen: set[int] = set()
        if track and v in probe_set:
            seen.add(v)
        if v == PARENT_OF_ROOT:
            v = ROOT
            n += 1
            if track and v in probe_set:
                seen.add(v)
        while True:
            if n >= step_cap:
                truncated = True
                break
            c = cum[v]
            if c is None:
                expand(v)
                c = cum[v]
            if bi == _BLOCK:
                buf = rng.random(_BLOCK).tolist()
                bi = 0
            u = buf[bi]
            bi += 1
            n += 1
            i = bisect_right(c, u)
            if i == 0:
                v = parent[v]
                if v == PARENT_OF_ROOT:
                    break
            else:
                v = first_child[v] + i - 1
                x = V[v]
                if x > mv:
                    mv = x
                d = depth[v]
                if d > md:
                    md = d
            if track and v in probe_set:
                seen.add(v)
        if truncated:
            break
        rho.append(n)
        records.append(ExcursionRecord(k, n - start, mv, md,
                                       None if probe_r is None else mv >= probe_r, len(seen)))
        start = n
    return ExcursionRun(records, truncated, n, rho)


def run_steps(arena: TreeArena, n_steps: int, rng: np.random.Generator,
              checkpoints: Sequence[int] = ()) -> TrajectorySummary:
    """Run ``n_steps`` steps from the root and summarize the maxima.

    ``checkpoints`` (each <= ``n_steps``) record ``(max V, max depth)`` after
    that many steps of the same trajectory.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    marks = sorted(set(int(c) for c in checkpoints if 1 <= c <= n_steps))
    V, depth, parent, first_child, cum = arena.V, arena.depth, arena.parent, arena.first_child, arena.cum
    expand = arena.expand
    out = {}
    n = 0
    v = ROOT
    mv = 0.0
    md = 0
    hits = 0
    bi = _BLOCK
    buf: list[float] = []
    for stop in marks + [n_steps]:
        while n < stop:
            n += 1
            if v == PARENT_OF_ROOT:
                v = ROOT
                continue
            c = cum[v]
            if c is None:
                expand(v)
                c = cum[v]
            if bi == _BLOCK:
                buf = rng.random(_BLOCK).tolist()
                bi = 0
            i = bisect_right(c, buf[bi])
            bi += 1
            if i == 0:
                v = parent[v]
                if v == PARENT_OF_ROOT:
                    hits += 1
            else:
                v = first_child[v] + i - 1
                x = V[v]
                if x > mv:
                    mv = x
                d = depth[v]
                if d > md:
                    md = d
        out[stop] = (mv, md)
    fv = _potential(arena, v)
    fd = _depth(arena, v)
    cps = {m: out[m] for m in marks}
    return TrajectorySummary(n_steps, mv, md, fv, fd, hits, cps)
