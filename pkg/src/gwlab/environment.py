"""Boundary-case environment laws and lazily realized trees.

A law describes the joint distribution of the offspring count and the
potential displacements ``ΔV`` of the children of one vertex.  The walk on
the realized tree moves from ``x`` to its parent with probability
``1 / (1 + Λ(x))`` and to a child ``y`` with probability
``exp(-ΔV(y)) / (1 + Λ(x))`` where ``Λ(x) = Σ_children exp(-ΔV)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats as sps

from . import rng as krng
from .stats import Estimate, mean_estimate

FIXED_GAUSSIAN = "FixedGaussian"
TWO_POINT = "TwoPoint"
POISSON_GAUSSIAN = "PoissonGaussian"
FAMILIES = (FIXED_GAUSSIAN, TWO_POINT, POISSON_GAUSSIAN)

PARENT_OF_ROOT = -1
ROOT = 0

TWO_POINT_JUMP = math.log(2.0 + math.sqrt(3.0))
TWO_POINT_P = (2.0 + math.sqrt(3.0)) / 4.0

DEFAULT_DELTAS = (0.1, 0.25, 0.5)


class LawError(ValueError):
    """Raised when law parameters violate a defining constraint."""


@dataclass(frozen=True)
class EnvironmentLaw:
    family: str
    b: int | None = None
    lam: float | None = None
    mu: float = 0.0
    s2: float = 0.0
    a: float = 0.0
    p: float = 0.0
    _poisson_cdf: tuple = field(default=(), repr=False, compare=False)

    @property
    def mean_offspring(self) -> float:
        if self.family == TWO_POINT:
            return 2.0
        if self.family == FIXED_GAUSSIAN:
            return float(self.b)
        return float(self.lam)

    @property
    def sigma2(self) -> float:
        return closed_form_moments(self)[2]

    @property
    def s(self) -> float:
        return math.sqrt(self.s2)

    def to_config(self) -> dict[str, str]:
        cfg = {"family": self.family}
        if self.family == FIXED_GAUSSIAN:
            cfg["b"] = str(self.b)
        elif self.family == POISSON_GAUSSIAN:
            cfg["lambda"] = repr(self.lam)
        return cfg

    # sampling from uniforms: shared by the lazy arena and the vectorized sweeps

    def count_from_uniform(self, u: float) -> int:
        if self.family == TWO_POINT:
            return 2
        if self.family == FIXED_GAUSSIAN:
            return self.b
        return bisect.bisect_right(self._poisson_cdf, u)

    def counts_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        if self.family == TWO_POINT:
            return np.full(u.shape, 2, dtype=np.int64)
        if self.family == FIXED_GAUSSIAN:
            return np.full(u.shape, self.b, dtype=np.int64)
        return np.searchsorted(np.asarray(self._poisson_cdf), u, side="right").astype(np.int64)

    def displacement_from_uniform(self, u: float) -> float:
        if self.family == TWO_POINT:
            return self.a if u < self.p else -self.a
        return self.mu + self.s * float(special.ndtri(u))

    def displacements_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        if self.family == TWO_POINT:
            return np.where(u < self.p, self.a, -self.a)
        return self.mu + self.s * special.ndtri(u)

    # direct sampling of first generations (fresh trees, numpy generator)

    def sample_generation(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(counts, displacements)`` for ``size`` independent parents.

        Displacements are concatenated parent by parent.
        """
        if self.family == TWO_POINT:
            counts = np.full(size, 2, dtype=np.int64)
            dv = np.where(rng.random(2 * size) < self.p, self.a, -self.a)
        else:
            if self.family == FIXED_GAUSSIAN:
                counts = np.full(size, self.b, dtype=np.int64)
            else:
                counts = rng.poisson(self.lam, size).astype(np.int64)
            dv = rng.normal(self.mu, self.s, int(counts.sum()))
        return counts, dv


def _poisson_cdf_table(lam: float) -> tuple:
    # cdf values strictly below 1 - 2^-53; searching u in this table inverts the cdf
    table = []
    pmf = math.exp(-lam)
    cdf = pmf
    k = 0
    while cdf < 1.0 - 2.0 ** -53 and k < 10_000:
        table.append(cdf)
        k += 1
        pmf *= lam / k
        cdf += pmf
    return tuple(table)


def make_law(family: str, **params) -> EnvironmentLaw:
    """Build a law whose free parameters satisfy the boundary case analytically.

    ``FixedGaussian`` takes ``b`` (integer >= 2); ``PoissonGaussian`` takes
    ``lam`` (> 1); ``TwoPoint`` takes nothing.  Gaussian families get
    ``mu = s2 = 2 log(mean offspring)``.
    """
    if family == TWO_POINT:
        extra = set(params) - {"a", "p"}
        if extra:
            raise LawError(f"TwoPoint takes no parameters, got {sorted(extra)}")
        return EnvironmentLaw(TWO_POINT, b=2, a=TWO_POINT_JUMP, p=TWO_POINT_P)
    if family == FIXED_GAUSSIAN:
        b = params.get("b", 2)
        if isinstance(b, float) and b.is_integer():
            b = int(b)
        if not isinstance(b, (int, np.integer)) or isinstance(b, bool):
            raise LawError(f"FixedGaussian needs an integer branching number, got b={b!r}")
        b = int(b)
        if b < 1:
            raise LawError(f"FixedGaussian needs b >= 1 children, got b={b}")
        if b == 1:
            raise LawError("not supercritical: FixedGaussian with b=1 has mean offspring 1")
        m = 2.0 * math.log(b)
        return EnvironmentLaw(FIXED_GAUSSIAN, b=b, mu=m, s2=m)
    if family == POISSON_GAUSSIAN:
        lam = float(params.get("lam", params.get("lambda", 2.0)))
        if not lam > 1.0:
            raise LawError(f"not supercritical: PoissonGaussian needs lambda > 1, got {lam}")
        m = 2.0 * math.log(lam)
        return EnvironmentLaw(POISSON_GAUSSIAN, lam=lam, mu=m, s2=m, _poisson_cdf=_poisson_cdf_table(lam))
    raise LawError(f"unknown family {family!r}; expected one of {FAMILIES}")


def law_from_config(cfg: dict) -> EnvironmentLaw:
    family = cfg.get("family", TWO_POINT)
    kw = {}
    if "b" in cfg:
        kw["b"] = int(cfg["b"])
    if "lambda" in cfg:
        kw["lam"] = float(cfg["lambda"])
    if family != FIXED_GAUSSIAN:
        kw.pop("b", None)
    if family != POISSON_GAUSSIAN:
        kw.pop("lam", None)
    return make_law(family, **kw)


# ---------------------------------------------------------------------------
# boundary-case verification


@dataclass
class BoundaryReport:
    method: str
    m0: float
    m1: float
    sigma2: float
    delta_report: dict[float, tuple[float, float, float]]
    m0_se: float = 0.0
    m1_se: float = 0.0
    sigma2_se: float = 0.0
    samples: int = 0

    def estimates(self) -> dict[str, Estimate]:
        tag = "direct-monte-carlo" if self.method == "monte_carlo" else "exact-enumeration"
        if tag == "exact-enumeration":
            return {k: Estimate(v, 0.0, 0, tag) for k, v in
                    (("m0", self.m0), ("m1", self.m1), ("sigma2", self.sigma2))}
        return {
            "m0": Estimate(self.m0, self.m0_se, self.samples, tag),
            "m1": Estimate(self.m1, self.m1_se, self.samples, tag),
            "sigma2": Estimate(self.sigma2, self.sigma2_se, self.samples, tag),
        }


def _gaussian_mgf(law: EnvironmentLaw, t: float) -> float:
    return math.exp(t * law.mu + 0.5 * t * t * law.s2)


def closed_form_moments(law: EnvironmentLaw) -> tuple[float, float, float]:
    if law.family == TWO_POINT:
        a, p = law.a, law.p
        up, down = p * math.exp(-a), (1.0 - p) * math.exp(a)
        return 2.0 * (up + down), 2.0 * a * (up - down), 2.0 * a * a * (up + down)
    n = law.mean_offspring
    e = _gaussian_mgf(law, -1.0)
    shift = law.mu - law.s2
    return n * e, n * shift * e, n * e * (shift * shift + law.s2)


def _count_moment(law: EnvironmentLaw, power: float) -> float:
    if law.family == TWO_POINT:
        return 2.0 ** power
    if law.family == FIXED_GAUSSIAN:
        return float(law.b) ** power
    k = np.arange(0, int(law.lam + 40 * math.sqrt(law.lam) + 60))
    return float((sps.poisson.pmf(k, law.lam) * k.astype(float) ** power).sum())


def _closed_form_delta(law: EnvironmentLaw, delta: float) -> tuple[float, float, float]:
    if law.family == TWO_POINT:
        a, p = law.a, law.p
        e1 = 2.0 * (p * math.exp(-(1 + delta) * a) + (1 - p) * math.exp((1 + delta) * a))
        e2 = 2.0 * (p * math.exp(delta * a) + (1 - p) * math.exp(-delta * a))
    else:
        n = law.mean_offspring
        e1 = n * _gaussian_mgf(law, -(1.0 + delta))
        e2 = n * _gaussian_mgf(law, delta)
    return e1, e2, _count_moment(law, 1.0 + delta)


def _quadrature_moments(law: EnvironmentLaw, deltas) -> tuple[tuple[float, float, float], dict]:
    if law.family == TWO_POINT:
        # the displacement law is atomic: quadrature is a two-term sum
        def expect(f):
            return 2.0 * (law.p * f(law.a) + (1.0 - law.p) * f(-law.a))
    else:
        n = law.mean_offspring
        dist = sps.norm(law.mu, law.s)
        lo, hi = law.mu - 40 * law.s, law.mu + 40 * law.s

        def expect(f):
            val, _ = integrate.quad(lambda v: f(v) * dist.pdf(v), lo, hi, limit=400,
                                    points=[law.mu - law.s2, law.mu], epsabs=1e-14, epsrel=1e-13)
            return n * val
    m0 = expect(lambda v: math.exp(-v))
    m1 = expect(lambda v: v * math.exp(-v))
    s2 = expect(lambda v: v * v * math.exp(-v))
    rep = {}
    for d in deltas:
        rep[d] = (expect(lambda v, d=d: math.exp(-(1 + d) * v)),
                  expect(lambda v, d=d: math.exp(d * v)),
                  _count_moment(law, 1.0 + d))
    return (m0, m1, s2), rep


def verify_boundary_case(law: EnvironmentLaw, method: str = "closed_form", n_samples: int = 100_000,
                         rng: np.random.Generator | None = None,
                         deltas: Sequence[float] = DEFAULT_DELTAS) -> BoundaryReport:
    """Evaluate ``E Σ e^{-V}``, ``E Σ V e^{-V}``, ``σ²`` and the integrability probes."""
    if method == "closed_form":
        m0, m1, s2 = closed_form_moments(law)
        rep = {d: _closed_form_delta(law, d) for d in deltas}
        return BoundaryReport(method, m0, m1, s2, rep)
    if method == "quadrature":
        (m0, m1, s2), rep = _quadrature_moments(law, deltas)
        return BoundaryReport(method, m0, m1, s2, rep)
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    counts, dv = law.sample_generation(rng, n_samples)
    owner = np.repeat(np.arange(n_samples), counts)

    def per_tree(values):
        return np.bincount(owner, weights=values, minlength=n_samples)

    w = np.exp(-dv)
    e0, e1, e2 = (mean_estimate(per_tree(w)), mean_estimate(per_tree(dv * w)),
                  mean_estimate(per_tree(dv * dv * w)))
    rep = {}
    for d in deltas:
        rep[d] = (float(per_tree(np.exp(-(1 + d) * dv)).mean()),
                  float(per_tree(np.exp(d * dv)).mean()),
                  float((counts.astype(float) ** (1 + d)).mean()))
    return BoundaryReport(method, e0.value, e1.value, e2.value, rep, e0.stderr, e1.stderr,
                          e2.stderr, n_samples)


# ---------------------------------------------------------------------------
# lazily realized tree


@dataclass(frozen=True)
class VertexRecord:
    handle: int
    parent: int
    V: float
    dV: float
    depth: int
    children: tuple[int, ...]
    Lambda: float | None
    expanded: bool


class ArenaUsageError(RuntimeError):
    pass


class TreeArena:
    """Realized environment, expanded one vertex at a time.

    Vertex ``0`` is the root ``∅``; ``PARENT_OF_ROOT`` (``-1``) stands for the
    extra vertex above it.  Children of a vertex receive consecutive handles.
    The randomness of a vertex is a function of ``(seed, replica, genealogy)``
    only, so expansion order never changes the realized tree.
    """

    def __init__(self, law: EnvironmentLaw, seed: int = 0, replica: int = 0):
        self.law = law
        self.seed = seed
        self.replica = replica
        self.parent: list[int] = [PARENT_OF_ROOT]
        self.V: list[float] = [0.0]
        self.dV: list[float] = [0.0]
        self.depth: list[int] = [0]
        self.key: list[int] = [krng.root_key(seed, replica)]
        self.first_child: list[int] = [-1]
        self.n_children: list[int] = [0]
        self.Lambda: list[float] = [0.0]
        # cumulative transition thresholds (parent first), filled on expansion
        self.cum: list[tuple | None] = [None]
        self.generation_counts: list[int] = [1]

    def __len__(self) -> int:
        return len(self.V)

    def is_expanded(self, v: int) -> bool:
        return self.cum[v] is not None

    def _check(self, v: int) -> None:
        if not 0 <= v < len(self.V):
            raise ArenaUsageError(f"vertex {v} is not realized in this arena")

    def expand(self, v: int) -> range:
        """Realize the children of ``v`` (idempotent) and return their handles."""
        if v == PARENT_OF_ROOT:
            return range(ROOT, ROOT + 1)
        self._check(v)
        if self.cum[v] is not None:
            f = self.first_child[v]
            return range(f, f + self.n_children[v]) if f >= 0 else range(0)
        law = self.law
        key = self.key[v]
        n = law.count_from_uniform(krng.uniform(key, 0))
        base = self.V[v]
        d = self.depth[v] + 1
        first = len(self.V)
        lam = 0.0
        weights = []
        for i in range(n):
            dv = law.displacement_from_uniform(krng.uniform(key, i + 1))
            self.parent.append(v)
            self.V.append(base + dv)
            self.dV.append(dv)
            self.depth.append(d)
            self.key.append(krng.child_key(key, i))
            self.first_child.append(-1)
            self.n_children.append(0)
            self.Lambda.append(0.0)
            self.cum.append(None)
            w = math.exp(-dv)
            weights.append(w)
            lam += w
        if d >= len(self.generation_counts):
            self.generation_counts.append(0)
        self.generation_counts[d] += n
        self.first_child[v] = first if n else -1
        self.n_children[v] = n
        self.Lambda[v] = lam
        z = 1.0 + lam
        acc = 1.0 / z
        cum = [acc]
        for w in weights:
            acc += w / z
            cum.append(acc)
        if n:
            cum[-1] = 2.0  # absorbs round-off so the last child always catches u < 1
        else:
            cum[0] = 2.0
        self.cum[v] = tuple(cum)
        return range(first, first + n)

    def children(self, v: int) -> range:
        if v == PARENT_OF_ROOT:
            return range(ROOT, ROOT + 1)
        self._check(v)
        f = self.first_child[v]
        return range(f, f + self.n_children[v]) if f >= 0 else range(0)

    def record(self, v: int) -> VertexRecord:
        self._check(v)
        exp = self.cum[v] is not None
        return VertexRecord(v, self.parent[v], self.V[v], self.dV[v], self.depth[v],
                            tuple(self.children(v)), self.Lambda[v] if exp else None, exp)

    def path(self, v: int) -> list[int]:
        """Handles on ``[[∅, v]]`` from the root down."""
        self._check(v)
        out = []
        while v != PARENT_OF_ROOT:
            out.append(v)
            v = self.parent[v]
        out.reverse()
        return out

    def is_ancestor(self, y: int, x: int) -> bool:
        """True when ``y`` lies on ``[[∅, x]]`` (ancestor or self)."""
        self._check(x)
        self._check(y)
        dy = self.depth[y]
        while self.depth[x] > dy:
            x = self.parent[x]
        return x == y

    def recomputed_lambda(self, v: int) -> float:
        return math.fsum(math.exp(-self.dV[c]) for c in self.children(v))

    def expand_to_depth(self, depth: int, max_vertices: int | None = None) -> None:
        """Breadth-first expansion of every vertex above ``depth``."""
        frontier = [ROOT]
        for _ in range(depth):
            nxt = []
            for v in frontier:
                nxt.extend(self.expand(v))
                if max_vertices is not None and len(self) >= max_vertices:
                    return
            frontier = nxt

    def dump(self, path: str | Path | None = None) -> str:
        lines = ["vertex_id, parent_id, V, dV"]
        for v in range(len(self.V)):
            lines.append(f"{v}, {self.parent[v]}, {self.V[v]!r}, {self.dV[v]!r}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def transition_probs(arena: TreeArena, v: int) -> tuple[float, list[tuple[int, float]]]:
    """Return ``(p_parent, [(child, p_child), ...])`` at an expanded vertex."""
    if v == PARENT_OF_ROOT:
        return 0.0, [(ROOT, 1.0)]
    arena._check(v)
    if not arena.is_expanded(v):
        raise ArenaUsageError(f"vertex {v} must be expanded before asking for its transitions")
    z = 1.0 + arena.Lambda[v]
    kids = [(c, math.exp(-arena.dV[c]) / z) for c in arena.children(v)]
    return 1.0 / z, kids


def expand_vertex(arena: TreeArena, v: int) -> list[int]:
    return list(arena.expand(v))


def read_dump(text: str) -> list[tuple[int, int, float, float]]:
    rows = []
    for line in text.splitlines()[1:]:
        if not line.strip():
            continue
        a, b, c, d = (t.strip() for t in line.split(","))
        rows.append((int(a), int(b), float(c), float(d)))
    return rows


def first_generation_weights(law: EnvironmentLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    """Samples of ``W_1 = Σ_{|x|=1} e^{-V(x)}`` over fresh realizations."""
    counts, dv = law.sample_generation(rng, size)
    owner = np.repeat(np.arange(size), counts)
    return np.bincount(owner, weights=np.exp(-dv), minlength=size)


def moment_exponent_probe(law: EnvironmentLaw, grid: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
                          n_samples: int = 200_000, rng: np.random.Generator | None = None,
                          dominance: float = 0.05) -> float:
    """Largest ``c`` on ``grid`` whose empirical ``E[W_1^{1+c}]`` is not dominated by one sample.

    A moment counts as finite when the largest single term contributes less
    than ``dominance`` of the sample sum; returns 0 if no grid point passes.
    """
    rng = rng if rng is not None else np.random.default_rng()
    w = first_generation_weights(law, rng, n_samples)
    best = 0.0
    for c in sorted(grid):
        terms = w ** (1.0 + c)
        total = terms.sum()
        if total > 0 and terms.max() < dominance * total:
            best = c
        else:
            break
    return best
