"""Exact quenched probabilities on a realized arena.

The walk is the electrical network with conductance ``exp(-V(x))`` on the
edge from ``x`` to its parent and conductance 1 on the edge from the root to
``PARENT_OF_ROOT``.  Absorption probabilities are computed with the
scale-free recursion

    ĝ(v) = Σ_children exp(-ΔV(c)) · ĝ(c) / (1 + ĝ(c)),

where ``ĝ(v) = e^{V(v)} · C_eff(v → A)``; an absorbing vertex has ``ĝ = ∞``
(contributing 1) and a dropped branch has ``ĝ = 0``.  Since every term is
bounded by ``Λ(v)``, the recursion never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .environment import PARENT_OF_ROOT, ROOT, ArenaUsageError, TreeArena
from .stats import log_sum_exp, ols


class GridError(ValueError):
    pass


def _phi(g: float) -> float:
    return 1.0 if g == math.inf else g / (1.0 + g)


# ---------------------------------------------------------------------------
# path formulas


def log_path_sum(arena: TreeArena, x: int) -> float:
    """``log Σ_{u ∈ [[∅, x]]} e^{V(u)}``."""
    return log_sum_exp(arena.V[u] for u in arena.path(x))


def hit_prob_vertex(arena: TreeArena, x: int) -> float:
    """``P_ω(T_x < T_{←∅})`` for a walk started at the root."""
    return math.exp(-log_path_sum(arena, x))


def hit_prob_from(arena: TreeArena, y: int, x: int) -> float:
    """Probability of reaching ``x`` before ``←∅`` when started at ``y ∈ [[∅, x]]``."""
    if not arena.is_ancestor(y, x):
        raise ArenaUsageError(f"vertex {y} is not on the path from the root to {x}")
    return math.exp(min(0.0, log_path_sum(arena, y) - log_path_sum(arena, x)))


# ---------------------------------------------------------------------------
# stopping lines


@dataclass(frozen=True)
class LineMember:
    handle: int
    V: float
    depth: int
    overshoot: float


@dataclass
class StoppingLine:
    r: float
    members: list[LineMember]
    frontier: list[int] = field(default_factory=list)
    depth_cap: int | None = None
    explored: int = 0
    extinct: bool = False

    @property
    def truncated(self) -> bool:
        return bool(self.frontier)

    @property
    def handles(self) -> list[int]:
        return [m.handle for m in self.members]

    def __len__(self) -> int:
        return len(self.members)

    def dump(self) -> str:
        lines = ["vertex, V, depth, overshoot"]
        lines += [f"{m.handle}, {m.V!r}, {m.depth}, {m.overshoot!r}" for m in self.members]
        return "\n".join(lines) + "\n"


def stopping_line(arena: TreeArena, r: float, depth_cap: int = 10_000) -> StoppingLine:
    """First-passage vertices over level ``r`` (``V ≥ r`` with every strict ancestor below ``r``).

    Vertices at depth ``depth_cap`` that are still below ``r`` are reported
    as the unresolved frontier and not expanded.
    """
    if not r > 0:
        raise ValueError("the level r must be positive")
    members: list[LineMember] = []
    frontier: list[int] = []
    V, depth = arena.V, arena.depth
    stack = [ROOT]
    explored = 0
    while stack:
        v = stack.pop()
        if depth[v] >= depth_cap:
            frontier.append(v)
            continue
        explored += 1
        for c in arena.expand(v):
            x = V[c]
            if x >= r:
                members.append(LineMember(c, x, depth[c], x - r))
            else:
                stack.append(c)
    members.sort(key=lambda m: m.handle)
    frontier.sort()
    return StoppingLine(r, members, frontier, depth_cap, explored,
                        extinct=not members and not frontier)


def check_stopping_line(arena: TreeArena, line: StoppingLine) -> list[str]:
    """Independent re-validation of antichain and first-passage properties."""
    problems = []
    hs = set(line.handles)
    for m in line.members:
        path = arena.path(m.handle)
        if arena.V[m.handle] < line.r:
            problems.append(f"{m.handle}: V below level")
        for u in path[:-1]:
            if arena.V[u] >= line.r:
                problems.append(f"{m.handle}: ancestor {u} already at level")
            if u in hs:
                problems.append(f"{m.handle}: ancestor {u} is also a member")
    return problems


# ---------------------------------------------------------------------------
# absorption


def _spanned_children(arena: TreeArena, targets: Iterable[int]) -> tuple[dict[int, list[int]], set[int]]:
    kids: dict[int, list[int]] = {}
    marked: set[int] = set()
    for t in targets:
        arena._check(t)
        marked.add(t)
        v = t
        while v != ROOT:
            p = arena.parent[v]
            lst = kids.setdefault(p, [])
            if v in lst:
                break
            lst.append(v)
            v = p
    return kids, marked


def absorb_prob(arena: TreeArena, absorbing: Iterable[int]) -> float:
    """``P_ω(T_A < T_{←∅})`` for the walk started at the root.

    Branches of the realized tree that contain no vertex of ``A`` are treated
    as carrying no conductance to ``A``.
    """
    absorbing = list(absorbing)
    if not absorbing:
        return 0.0
    kids, marked = _spanned_children(arena, absorbing)
    if ROOT in marked:
        return 1.0
    for a in marked:
        v = arena.parent[a]
        while v != PARENT_OF_ROOT:
            if v in marked:
                raise ArenaUsageError(f"absorbing set is not an antichain: {v} is an ancestor of {a}")
            v = arena.parent[v]
    dV = arena.dV
    ghat: dict[int, float] = {}
    # children lists were built bottom-up; evaluate in decreasing depth
    order = sorted(kids, key=lambda v: arena.depth[v], reverse=True)
    for v in order:
        s = 0.0
        for c in kids[v]:
            s += math.exp(-dV[c]) * (1.0 if c in marked else _phi(ghat[c]))
        ghat[v] = s
    return _phi(ghat[ROOT])


@dataclass(frozen=True)
class GammaPoint:
    r: float
    lower: float
    upper: float
    line_size: int
    depth_cap: int
    truncated: bool
    explored: int = 0

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def point(self) -> float:
        """Geometric midpoint of the bracket (the value itself when exact)."""
        if self.lower == self.upper:
            return self.lower
        if self.lower <= 0:
            return self.upper
        return math.sqrt(self.lower * self.upper)


def gamma_bracket(arena: TreeArena, r: float, depth_cap: int = 10_000) -> GammaPoint:
    """``γ_r = P_ω(T_{H_r} < T_{←∅})`` bracketed by the depth-cap frontier.

    Lower: unresolved frontier dropped.  Upper: frontier made absorbing.
    """
    line = stopping_line(arena, r, depth_cap)
    lo = absorb_prob(arena, line.handles)
    hi = absorb_prob(arena, line.handles + line.frontier) if line.truncated else lo
    return GammaPoint(r, lo, hi, len(line), depth_cap, line.truncated, line.explored)


@dataclass
class GammaCurve:
    points: list[GammaPoint]
    slope: float
    slope_lower: float
    slope_upper: float

    @property
    def monotone(self) -> bool:
        pts = self.points
        return all(b.lower <= a.lower and b.upper <= a.upper for a, b in zip(pts, pts[1:]))


def fit_tail_slope(rs: Sequence[float], values: Sequence[float]) -> float:
    """OLS slope of ``log γ_r`` against ``-(2r)^{1/2}``."""
    pairs = [(-math.sqrt(2.0 * r), math.log(v)) for r, v in zip(rs, values) if v > 0]
    if len(pairs) < 2:
        return math.nan
    return ols([p[0] for p in pairs], [p[1] for p in pairs])[0]


def curve_from_points(points: list[GammaPoint]) -> GammaCurve:
    rs = [p.r for p in points]
    return GammaCurve(points, fit_tail_slope(rs, [p.point for p in points]),
                      fit_tail_slope(rs, [p.lower for p in points]),
                      fit_tail_slope(rs, [p.upper for p in points]))


def gamma_r_curve(arena: TreeArena, r_list: Sequence[float], depth_cap: int = 10_000,
                  engine: str = "arena", **sweep_kw) -> GammaCurve:
    """γ_r brackets over an increasing list of levels plus the tail-slope diagnostic.

    ``engine="sweep"`` recomputes the same realization with the vectorized
    generation-wise solver and ``engine="compiled"`` with the depth-first
    kernel (TwoPoint only); both scale to levels where the tree below ``r``
    holds billions of vertices.  ``"auto"`` picks the fastest available.
    """
    rs = list(r_list)
    if any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_list must be strictly increasing")
    if engine == "auto":
        from .sweep import compiled_available
        engine = "compiled" if compiled_available(arena.law) else "sweep"
    if engine == "arena":
        pts = [gamma_bracket(arena, r, depth_cap) for r in rs]
    elif engine == "sweep":
        from .sweep import gamma_sweep
        pts = [gamma_sweep(arena.law, arena.seed, arena.replica, r, depth_cap, **sweep_kw) for r in rs]
    elif engine == "compiled":
        from .sweep import gamma_depth_first
        pts = [gamma_depth_first(arena.law, arena.seed, arena.replica, r, depth_cap) for r in rs]
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return curve_from_points(pts)


# ---------------------------------------------------------------------------
# restricted stopping line and the first moment of Z_r


@dataclass(frozen=True)
class LadderGrid:
    r: float
    chi: float = 0.75
    theta: float = 0.6
    eps: float = 0.5
    eps1: float = 0.1
    beta: float = 10.0

    def __post_init__(self):
        if not self.r > 0:
            raise GridError("r must be positive")
        if not 0.5 < self.theta < self.chi < 1.0:
            raise GridError(f"need 1/2 < theta < chi < 1, got theta={self.theta}, chi={self.chi}")
        if not self.eps > 0 or not self.eps1 > 0:
            raise GridError("eps and eps1 must be positive")
        if self.beta < 0:
            raise GridError("beta must be >= 0")
        if self.k < 1:
            raise GridError(f"k = floor(r^(1-chi)) is 0 for r={self.r}, chi={self.chi}")

    @property
    def k(self) -> int:
        return int(math.floor(self.r ** (1.0 - self.chi)))

    def h(self, m: int) -> float:
        return self.r * m / self.k

    def lam(self, m: int) -> float:
        k = self.k
        return math.sqrt(2.0 * self.r) * math.sqrt((k - m + 1) / k)

    @property
    def levels(self) -> list[float]:
        return [self.h(m) for m in range(self.k + 1)]

    @property
    def widths(self) -> list[float]:
        return [self.lam(m) for m in range(1, self.k + 1)]

    @property
    def depth_limit(self) -> int:
        return int(math.floor(math.exp(self.eps1 * math.sqrt(self.r))))

    @property
    def lambda_cap(self) -> float:
        return math.exp(self.eps * math.sqrt(self.r))

    @property
    def overshoot_cap(self) -> float:
        return self.r ** self.theta

    def admissible(self, c1: float) -> bool:
        """The depth-budget exponent must satisfy ``eps1 < c1 * eps``."""
        return self.eps1 < c1 * self.eps


def first_passage_index(values: Sequence[float], s: float) -> int | None:
    for i, x in enumerate(values):
        if x >= s:
            return i
    return None


def restricted_conditions(arena: TreeArena, x: int, grid: LadderGrid) -> dict[str, bool]:
    """Evaluate the five filters defining the restricted line at a member ``x`` of ``H_r``."""
    path = arena.path(x)
    vals = [arena.V[u] for u in path]
    n = len(path) - 1
    k = grid.k
    hits = [first_passage_index(vals, grid.h(m)) for m in range(k + 1)]
    hits[k] = n
    overshoot_ok = all(arena.dV[path[hits[m]]] <= grid.overshoot_cap for m in range(1, k))
    floor_ok = min(vals) >= -grid.beta
    depth_ok = n < grid.depth_limit
    corridor_ok = True
    running = -math.inf
    m = 1
    for j in range(n):
        running = max(running, vals[j])
        while m < k and j >= hits[m]:
            m += 1
        if running - vals[j] > grid.lam(m):
            corridor_ok = False
            break
    cap = grid.lambda_cap
    lambda_ok = all(arena.Lambda[u] <= cap for u in path[:-1])
    return {"overshoot": overshoot_ok, "floor": floor_ok, "depth": depth_ok,
            "corridor": corridor_ok, "lambda": lambda_ok}


@dataclass
class RestrictedLine:
    grid: LadderGrid
    line: StoppingLine
    members: list[int]
    first_moment: float


def restricted_line(arena: TreeArena, grid: LadderGrid, depth_cap: int = 10_000) -> RestrictedLine:
    """Filter ``H_r`` to its restricted subset and return ``E_ω(Z_r)`` exactly."""
    line = stopping_line(arena, grid.r, depth_cap)
    keep = [m.handle for m in line.members if all(restricted_conditions(arena, m.handle, grid).values())]
    first = math.fsum(hit_prob_vertex(arena, x) for x in keep)
    return RestrictedLine(grid, line, keep, first)


# ---------------------------------------------------------------------------
# embedded Galton-Watson tree and the K_s census


@dataclass
class CensusRow:
    n: int
    s: float
    k_count: int
    surviving_g: int
    holds: bool


@dataclass
class Census:
    L: int
    alpha: float
    c4: float
    generations: list[list[int]]
    rows: list[CensusRow]

    @property
    def sizes(self) -> list[int]:
        return [len(g) for g in self.generations]

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.rows)


def _block_descendants(arena: TreeArena, y: int, L: int, gain: float, log_cap: float) -> list[int]:
    """Vertices ``L`` generations below ``y`` satisfying the three block conditions."""
    base = arena.V[y]
    out = []
    stack = [(y, 0, 0.0)]
    while stack:
        v, d, logprod = stack.pop()
        if d == L:
            if arena.V[v] - base >= gain:
                out.append(v)
            continue
        kids = arena.expand(v)
        lp = logprod + math.log1p(arena.Lambda[v])
        if lp > log_cap:
            continue
        for c in kids:
            if arena.V[c] - base < 2.0 * gain:
                stack.append((c, d + 1, lp))
    out.sort()
    return out


def count_k_set(arena: TreeArena, s: float, L: int, alpha: float, c4: float) -> int:
    """``#K_s``: members of ``H_s`` with bounded Λ-product, depth and potential."""
    log_cap = 2.0 * c4 * L ** (1.0 - alpha) * s
    depth_cap = 2.0 * L ** (1.0 - alpha) * s
    count = 0
    stack = [(ROOT, 0.0)]
    while stack:
        v, logprod = stack.pop()
        if arena.depth[v] + 1 > depth_cap:
            continue
        kids = arena.expand(v)
        lp = logprod + math.log1p(arena.Lambda[v])
        if lp > log_cap:
            continue
        for c in kids:
            x = arena.V[c]
            if x >= s:
                if x <= 4.0 * s:
                    count += 1
            else:
                stack.append((c, lp))
    return count


def embedded_tree_census(arena: TreeArena, L: int, alpha: float, c4: float, n_levels: int) -> Census:
    """Realize the embedded tree ``G^(L)`` for ``n_levels`` generations and test the census inequality.

    For each ``n ≥ 1`` with ``2n + 2 ≤ n_levels`` and ``s`` at both ends and the middle of
    ``[2nL^α, 2(n+1)L^α]``, compares ``#K_s`` with the number of generation-``n``
    vertices having a descendant in generation ``2n + 2``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if L < 1 or c4 <= 0:
        raise ValueError("need L >= 1 and c4 > 0")
    gain = L ** alpha
    log_cap = c4 * L
    gens: list[list[int]] = [[ROOT]]
    parent_in_g: list[dict[int, int]] = [{}]
    for _ in range(n_levels):
        nxt, par = [], {}
        for y in gens[-1]:
            for z in _block_descendants(arena, y, L, gain, log_cap):
                nxt.append(z)
                par[z] = y
        gens.append(nxt)
        parent_in_g.append(par)
    rows = []
    for n in range(1, n_levels + 1):
        if 2 * n + 2 > n_levels:
            break
        # ancestors in G_n of the generation-(2n+2) vertices
        anc = set(gens[2 * n + 2])
        for level in range(2 * n + 2, n, -1):
            anc = {parent_in_g[level][z] for z in anc}
        surviving = len(anc)
        for s in (2 * n * gain, (2 * n + 1) * gain, 2 * (n + 1) * gain):
            k = count_k_set(arena, s, L, alpha, c4)
            rows.append(CensusRow(n, s, k, surviving, k >= surviving))
    return Census(L, alpha, c4, gens, rows)
