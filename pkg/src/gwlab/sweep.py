"""Vectorized generation-wise solver for the level-``r`` absorption probability.

Realizes the same tree as :class:`~gwlab.environment.TreeArena` (the
randomness is keyed by genealogy) but only the part strictly below level
``r``, one generation at a time with numpy, and stores per vertex just the
parent index and the conductance weight ``exp(-ΔV)``.  When the stored part
outgrows ``budget`` entries, the current generation is split into chunks
whose subtrees are solved independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as krng
from .environment import EnvironmentLaw
from .quenched import GammaPoint

DEFAULT_BUDGET = 4_000_000
_SPLIT = 16


@dataclass
class _Tally:
    explored: int = 0
    members: int = 0
    frontier: int = 0


def children_arrays(law: EnvironmentLaw, keys: np.ndarray, V: np.ndarray):
    """Return ``(owner, dV, V_child, child_keys)`` for every child of the given vertices."""
    n = keys.size
    counts = law.counts_from_uniforms(krng.uniform_array(keys, 0))
    owner = np.repeat(np.arange(n, dtype=np.int64), counts)
    starts = np.cumsum(counts) - counts
    rank = (np.arange(owner.size, dtype=np.int64) - starts[owner]).astype(np.uint64)
    ckeys = keys[owner]
    dv = law.displacements_from_uniforms(krng.uniform_array(ckeys, rank + np.uint64(1)))
    return owner, dv, V[owner] + dv, krng.child_key_array(ckeys, rank)


def _phi(g: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return np.where(np.isinf(g), 1.0, g / (1.0 + g))


def _solve(law, r, keys, V, depth, depth_cap, budget, tally):
    """Scale-free conductances ``(lower, upper)`` for vertices sharing one depth."""
    n = keys.size
    if n > max(1, budget // 4):
        step = -(-n // _SPLIT)
        parts = [_solve(law, r, keys[i:i + step], V[i:i + step], depth, depth_cap, budget, tally)
                 for i in range(0, n, step)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    levels = []
    stored = 0
    d = depth
    while True:
        m = keys.size
        if m == 0:
            lo = hi = np.zeros(0)
            break
        if d >= depth_cap:
            tally.frontier += m
            lo, hi = np.zeros(m), np.full(m, math.inf)
            break
        tally.explored += m
        owner, dv, cv, ck = children_arrays(law, keys, V)
        hit = cv >= r
        tally.members += int(hit.sum())
        w = np.exp(-dv)
        msum = np.bincount(owner[hit], weights=w[hit], minlength=m)
        alive = ~hit
        levels.append((msum, owner[alive].astype(np.int32), w[alive]))
        keys, V = ck[alive], cv[alive]
        d += 1
        stored += m + keys.size
        wide = keys.size > max(1, budget // 4)
        if (wide or stored > budget) and keys.size > 1 and d < depth_cap:
            lo, hi = _solve(law, r, keys, V, d, depth_cap, budget, tally)
            break
    for msum, owner, w in reversed(levels):
        m = msum.size
        lo = msum + np.bincount(owner, weights=w * _phi(lo), minlength=m)
        hi = msum + np.bincount(owner, weights=w * _phi(hi), minlength=m)
    return lo, hi


def gamma_sweep(law: EnvironmentLaw, seed: int, replica: int, r: float, depth_cap: int = 10_000,
                budget: int = DEFAULT_BUDGET) -> GammaPoint:
    """Bracket of the probability of reaching level ``r`` before returning above the root."""
    if not r > 0:
        raise ValueError("the level r must be positive")
    tally = _Tally()
    keys = np.array([krng.root_key(seed, replica)], dtype=np.uint64)
    lo, hi = _solve(law, r, keys, np.zeros(1), 0, depth_cap, budget, tally)
    g_lo, g_hi = float(lo[0]), float(hi[0])
    glo = g_lo / (1.0 + g_lo)
    ghi = 1.0 if math.isinf(g_hi) else g_hi / (1.0 + g_hi)
    return GammaPoint(r, glo, ghi, tally.members, depth_cap, tally.frontier > 0, tally.explored)


# ---------------------------------------------------------------------------
# compiled depth-first variant for the two-point law
#
# Walks the same keyed tree depth first with O(depth) memory.  Only laws with
# a deterministic offspring count and two displacement values qualify, so no
# special functions are needed inside the kernel and the realized tree is
# bit-identical to the arena's.

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _build_kernel():
    u64 = np.uint64
    golden, m1, m2 = u64(krng._GOLDEN), u64(krng._M1), u64(krng._M2)
    child_c, draw_c = u64(krng._CHILD), u64(krng._DRAW)
    s30, s27, s31, s12 = u64(30), u64(27), u64(31), u64(12)
    inv52 = krng._INV52

    @numba.njit(cache=True)
    def mix(z):
        z = z + golden
        z = (z ^ (z >> s30)) * m1
        z = (z ^ (z >> s27)) * m2
        return z ^ (z >> s31)

    @numba.njit(cache=True)
    def kernel(root, n_children, a, p, r, depth_cap):
        keys = np.zeros(depth_cap + 1, dtype=np.uint64)
        V = np.zeros(depth_cap + 1)
        W = np.zeros(depth_cap + 1)
        nxt = np.zeros(depth_cap + 1, dtype=np.int64)
        lo = np.zeros(depth_cap + 1)
        hi = np.zeros(depth_cap + 1)
        w_up, w_down = np.exp(-a), np.exp(a)
        keys[0] = root
        explored, members, frontier = 1, 0, 0
        d = 0
        while True:
            j = nxt[d]
            if j < n_children:
                nxt[d] = j + 1
                k = keys[d]
                z = mix(k ^ (u64(j + 2) * draw_c))
                u = (float(z >> s12) + 0.5) * inv52
                if u < p:
                    cv, w = V[d] + a, w_up
                else:
                    cv, w = V[d] - a, w_down
                if cv >= r:
                    members += 1
                    lo[d] += w
                    hi[d] += w
                elif d + 1 >= depth_cap:
                    frontier += 1
                    hi[d] += w
                else:
                    d += 1
                    keys[d] = mix(k + u64(j + 1) * child_c)
                    V[d] = cv
                    W[d] = w
                    nxt[d] = 0
                    lo[d] = 0.0
                    hi[d] = 0.0
                    explored += 1
            else:
                if d == 0:
                    break
                gl, gh = lo[d], hi[d]
                d -= 1
                lo[d] += W[d + 1] * (gl / (1.0 + gl))
                hi[d] += W[d + 1] * (gh / (1.0 + gh))
        return lo[0], hi[0], explored, members, frontier

    return kernel


_KERNEL = None


def compiled_available(law: EnvironmentLaw) -> bool:
    return numba is not None and law.family == "TwoPoint"


def gamma_depth_first(law: EnvironmentLaw, seed: int, replica: int, r: float,
                      depth_cap: int = 10_000) -> GammaPoint:
    """Same bracket as :func:`gamma_sweep`, computed by the compiled depth-first kernel."""
    global _KERNEL
    if not compiled_available(law):
        raise ValueError("the compiled kernel needs numba and the TwoPoint law")
    if not r > 0:
        raise ValueError("the level r must be positive")
    if depth_cap <= 0:
        return GammaPoint(r, 0.0, 1.0, 0, depth_cap, True, 0)
    if _KERNEL is None:
        _KERNEL = _build_kernel()
    root = np.uint64(krng.root_key(seed, replica))
    g_lo, g_hi, explored, members, frontier = _KERNEL(root, 2, law.a, law.p, float(r), int(depth_cap))
    return GammaPoint(r, g_lo / (1.0 + g_lo), g_hi / (1.0 + g_hi), int(members), depth_cap,
                      frontier > 0, int(explored))
