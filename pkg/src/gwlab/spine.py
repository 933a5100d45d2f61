"""The size-biased measure Q and many-to-one estimators.

Under Q the spine increments ``ΔS_i`` and companion sums
``η_i = Σ_{children y of w_{i-1}} f(ΔV(y))`` are i.i.d., so a spine is a
one-dimensional random walk decorated with one sibling family per step.

Two samplers are provided:

* ``exact`` draws the Q-law directly.  For TwoPoint the one-step law is
  enumerated over the four ordered child configurations.  For the Gaussian
  families the tilt by ``e^{-ΔV}`` moves the spine child to ``N(μ - s², s²)``
  and size-biases the offspring count (``N - 1 ~ Poisson(λ)`` for Poisson).
* ``reweight`` draws the base law, picks the spine child with probability
  ``e^{-ΔV}/W_1`` and carries the weight ``W_1``; estimators self-normalize.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .environment import POISSON_GAUSSIAN, TWO_POINT, EnvironmentLaw
from .stats import DIRECT_MC, EXACT, Q_MC, Estimate, mean_estimate, self_normalized

EXACT_MODE = "exact"
REWEIGHT_MODE = "reweight"
DEFAULT_LINE_CAP = 10 ** 6

F_REGISTRY: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp_neg": lambda dv: np.exp(-dv),
    "one": lambda dv: np.ones_like(dv),
    "positive_part": lambda dv: np.maximum(dv, 0.0),
}


@dataclass(frozen=True)
class SpineStep:
    dS: float
    siblings: tuple[float, ...]
    weight: float = 1.0


@dataclass
class SpineSample:
    """A batch of spines sampled for ``n`` steps.

    ``dS`` and each entry of ``eta`` have shape ``(size, n)``; ``log_weight``
    is the log of the accumulated reweighting factor (zero for exact draws,
    ``-inf`` for a spine whose base-law parent was childless).
    """

    dS: np.ndarray
    eta: dict[str, np.ndarray]
    log_weight: np.ndarray
    mode: str = EXACT_MODE

    @property
    def S(self) -> np.ndarray:
        return np.cumsum(self.dS, axis=1)

    @property
    def terminal(self) -> np.ndarray:
        return self.dS.sum(axis=1)


# ---------------------------------------------------------------------------
# the one-step Q law


def two_point_q_table(law: EnvironmentLaw) -> list[tuple[float, tuple[float, ...], float]]:
    """Enumerated one-step Q law ``[(ΔS, sibling displacements, probability)]`` for TwoPoint."""
    a, p = law.a, law.p
    out = []
    for config in itertools.product((a, -a), repeat=2):
        prob = math.prod(p if v > 0 else 1.0 - p for v in config)
        for i, v in enumerate(config):
            out.append((v, config[:i] + config[i + 1:], prob * math.exp(-v)))
    return out


def _q_step_exact(law: EnvironmentLaw, rng: np.random.Generator, size: int):
    """Exact Q draws: spine displacement and sibling displacements (ragged)."""
    if law.family == TWO_POINT:
        table = two_point_q_table(law)
        probs = np.array([t[2] for t in table])
        cdf = np.cumsum(probs / probs.sum())
        idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(table) - 1)
        ds = np.array([t[0] for t in table])[idx]
        sib = np.array([t[1][0] for t in table])[idx]
        return ds, np.ones(size, dtype=np.int64), sib
    ds = rng.normal(law.mu - law.s2, law.s, size)
    if law.family == POISSON_GAUSSIAN:
        n_sib = rng.poisson(law.lam, size).astype(np.int64)
    else:
        n_sib = np.full(size, law.b - 1, dtype=np.int64)
    sib = rng.normal(law.mu, law.s, int(n_sib.sum()))
    return ds, n_sib, sib


def _q_step_reweight(law: EnvironmentLaw, rng: np.random.Generator, size: int):
    counts, dv = law.sample_generation(rng, size)
    owner = np.repeat(np.arange(size), counts)
    w = np.exp(-dv)
    W = np.bincount(owner, weights=w, minlength=size)
    # pick the spine child with probability e^{-ΔV}/W_1 within each family
    starts = np.cumsum(counts) - counts
    cum = np.cumsum(w)
    before = np.concatenate(([0.0], cum))[starts]
    pick = np.searchsorted(cum, before + rng.random(size) * W, side="right")
    pick = np.clip(pick, starts, starts + np.maximum(counts, 1) - 1)
    alive = counts > 0
    ds = np.zeros(size)
    ds[alive] = dv[pick[alive]]
    keep = np.ones(dv.size, dtype=bool)
    keep[pick[alive]] = False
    n_sib = np.maximum(counts - 1, 0)
    return ds, n_sib, dv[keep], W


def sample_spine_step(law: EnvironmentLaw, rng: np.random.Generator, mode: str = EXACT_MODE) -> SpineStep:
    """One Q step: the spine increment, its siblings' displacements and a weight."""
    if mode == EXACT_MODE:
        ds, n_sib, sib = _q_step_exact(law, rng, 1)
        return SpineStep(float(ds[0]), tuple(float(v) for v in sib), 1.0)
    if mode == REWEIGHT_MODE:
        ds, n_sib, sib, W = _q_step_reweight(law, rng, 1)
        return SpineStep(float(ds[0]), tuple(float(v) for v in sib), float(W[0]))
    raise ValueError(f"unknown mode {mode!r}")


def sample_spines(law: EnvironmentLaw, n: int, size: int, rng: np.random.Generator,
                  mode: str = EXACT_MODE, fs: Sequence[str] = ("exp_neg",)) -> SpineSample:
    """``size`` independent spines of length ``n`` with companion sums for each registered ``f``."""
    dS = np.empty((size, n))
    eta = {name: np.empty((size, n)) for name in fs}
    logw = np.zeros(size)
    for i in range(n):
        if mode == EXACT_MODE:
            ds, n_sib, sib = _q_step_exact(law, rng, size)
        elif mode == REWEIGHT_MODE:
            ds, n_sib, sib, W = _q_step_reweight(law, rng, size)
            with np.errstate(divide="ignore"):
                logw += np.log(W)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        dS[:, i] = ds
        owner = np.repeat(np.arange(size), n_sib)
        for name in fs:
            f = F_REGISTRY[name]
            eta[name][:, i] = f(ds) + np.bincount(owner, weights=f(sib), minlength=size)
    return SpineSample(dS, eta, logw, mode)


def _finish(values: np.ndarray, log_weight: np.ndarray, mode: str, discards: int = 0) -> Estimate:
    if mode == EXACT_MODE:
        return mean_estimate(values, Q_MC, discards)
    w = np.exp(log_weight - np.max(log_weight))
    return self_normalized(values, w, Q_MC, discards)


# ---------------------------------------------------------------------------
# many-to-one


def many_to_one(law: EnvironmentLaw, n: int, g: Callable | None = None, n_samples: int = 100_000,
                rng: np.random.Generator | None = None, mode: str = EXACT_MODE,
                log_g: Callable | None = None, use_eta: bool = False) -> Estimate:
    """Estimate ``E[Σ_{|x|=n} g(V(x_1), …, V(x_n))]`` as ``E_Q[e^{S_n} g(S_1, …, S_n)]``.

    ``g`` (or ``log_g``) maps an ``(m, n)`` array of spine paths to ``m``
    values; with ``use_eta`` it also receives the ``exp_neg`` companion sums.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    sp = sample_spines(law, n, n_samples, rng, mode)
    S = sp.S
    args = (S, sp.eta["exp_neg"]) if use_eta else (S,)
    if log_g is not None:
        vals = np.exp(S[:, -1] + log_g(*args))
    else:
        vals = np.exp(S[:, -1]) * (1.0 if g is None else g(*args))
    return _finish(np.broadcast_to(vals, (n_samples,)).astype(float), sp.log_weight, mode)


def sign_index(paths: np.ndarray) -> np.ndarray:
    """Encode each ±jump path as an integer: bit ``i`` is set when step ``i + 1`` goes up."""
    d = np.diff(paths, axis=1, prepend=0.0)
    bits = (d > 0).astype(np.int64)
    return (bits << np.arange(paths.shape[1], dtype=np.int64)).sum(axis=1)


def two_point_path_sum(law: EnvironmentLaw, n: int, table: Sequence[float]) -> float:
    """Exact ``E[Σ_{|x|=n} g(x)]`` for the two-point law with ``g`` tabulated by :func:`sign_index`.

    Every vertex has two children with independent ±a jumps, so the sum
    expands over the ``2^n`` jump sequences weighted by ``2^n`` times their
    probability.
    """
    if law.family != TWO_POINT:
        raise ValueError("enumeration needs the TwoPoint law")
    if len(table) != 1 << n:
        raise ValueError(f"table must have 2^{n} entries")
    total = 0.0
    for idx in range(1 << n):
        ups = bin(idx).count("1")
        total += law.p ** ups * (1.0 - law.p) ** (n - ups) * table[idx]
    return total * 2.0 ** n


@dataclass
class LineRun:
    """First-passage spines: terminal values, hitting indices and (optionally) paths."""

    terminal: np.ndarray
    index: np.ndarray
    crossing: np.ndarray
    log_weight: np.ndarray
    completed: np.ndarray
    paths: list[np.ndarray] | None = None

    @property
    def discards(self) -> int:
        return int((~self.completed).sum())


def q_increments(law: EnvironmentLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    """Spine increments alone under the exact Q law (no sibling draws)."""
    if law.family == TWO_POINT:
        return np.where(rng.random(size) < 0.5 * _up_mass(law), law.a, -law.a)
    return rng.normal(law.mu - law.s2, law.s, size)


def _up_mass(law: EnvironmentLaw) -> float:
    table = two_point_q_table(law)
    total = sum(t[2] for t in table)
    return 2.0 * sum(t[2] for t in table if t[0] > 0) / total


def run_to_level(law: EnvironmentLaw, r: float, size: int, rng: np.random.Generator,
                 mode: str = EXACT_MODE, step_cap: int = DEFAULT_LINE_CAP,
                 keep_paths: bool = False, block: int = 64, max_cells: int = 4_000_000) -> LineRun:
    """Run ``size`` spines until ``S ≥ r`` or ``step_cap`` steps.

    Surviving spines advance in vectorized blocks whose length grows with
    the elapsed time, so the heavy tail of the hitting time costs
    logarithmically many rounds.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if mode not in (EXACT_MODE, REWEIGHT_MODE):
        raise ValueError(f"unknown mode {mode!r}")
    S = np.zeros(size)
    logw = np.zeros(size)
    index = np.zeros(size, dtype=np.int64)
    crossing = np.zeros(size)
    done = np.zeros(size, dtype=bool)
    chunks: list[list[np.ndarray]] | None = [[] for _ in range(size)] if keep_paths else None
    active = np.arange(size)
    t = 0
    while active.size and t < step_cap:
        m = active.size
        k = max(1, min(max(block, t // 2), step_cap - t, max_cells // m))
        if mode == EXACT_MODE:
            steps = q_increments(law, rng, m * k).reshape(m, k)
            lw = np.zeros((m, k))
        else:
            ds, _, _, W = _q_step_reweight(law, rng, m * k)
            steps = ds.reshape(m, k)
            with np.errstate(divide="ignore"):
                lw = np.log(W).reshape(m, k)
        path = S[active, None] + np.cumsum(steps, axis=1)
        over = path >= r
        hit = over.any(axis=1)
        first = np.where(hit, over.argmax(axis=1), k - 1)
        rows = np.arange(m)
        cw = np.cumsum(lw, axis=1)
        logw[active] += cw[rows, first]
        S[active] = path[rows, first]
        if keep_paths:
            for i in range(m):
                chunks[active[i]].append(path[i, :first[i] + 1])
        fin = active[hit]
        index[fin] = t + first[hit] + 1
        crossing[fin] = steps[rows[hit], first[hit]]
        done[fin] = True
        dead = np.isneginf(logw[active]) & ~hit
        done_dead = active[dead]
        active = active[~hit & ~dead]
        t += k
        if done_dead.size:
            index[done_dead] = t
    completed = done & np.isfinite(logw)
    # a reweighted spine with a childless parent carries weight zero: it completes trivially
    completed |= np.isneginf(logw)
    paths = [np.concatenate(c) if c else np.zeros(0) for c in chunks] if keep_paths else None
    return LineRun(S, index, crossing, logw, completed, paths)


def many_to_one_line(law: EnvironmentLaw, r: float, g: Callable | None = None, n_samples: int = 100_000,
                     rng: np.random.Generator | None = None, mode: str = EXACT_MODE,
                     log_g: Callable | None = None, terminal_only: bool = False,
                     step_cap: int = DEFAULT_LINE_CAP, discard_policy: str = "zero") -> Estimate:
    """Estimate ``E[Σ_{x ∈ H_r} g(V(x_1), …, V(x_{|x|}))]`` as ``E_Q[e^{S_H} g(S_1, …, S_H)]``.

    ``g``/``log_g`` receive one path array per sample, or the vector of
    terminal values when ``terminal_only``.  Spines still below ``r`` after
    ``step_cap`` steps are discarded: ``discard_policy="zero"`` scores them 0
    (the truncated sum over ``|x| ≤ step_cap``), ``"drop"`` averages over
    completed spines only.  Either way the count is reported.
    """
    if discard_policy not in ("zero", "drop"):
        raise ValueError("discard_policy must be 'zero' or 'drop'")
    rng = rng if rng is not None else np.random.default_rng()
    run = run_to_level(law, r, n_samples, rng, mode, step_cap, keep_paths=not terminal_only)
    ok = run.completed & np.isfinite(run.log_weight)
    term = run.terminal
    if terminal_only:
        arg = term
        lg = log_g(arg) if log_g is not None else None
        gv = g(arg) if (g is not None and log_g is None) else None
    else:
        lg = np.array([log_g(p) if o else 0.0 for p, o in zip(run.paths, ok)]) if log_g is not None else None
        gv = np.array([g(p) if o else 0.0 for p, o in zip(run.paths, ok)]) if (g is not None and log_g is None) else None
    if lg is not None:
        vals = np.exp(term + lg)
    else:
        vals = np.exp(term) * (1.0 if gv is None else gv)
    vals = np.where(ok, vals, 0.0)
    sel = run.completed if discard_policy == "drop" else np.ones(n_samples, dtype=bool)
    return _finish(vals[sel], run.log_weight[sel], mode, run.discards)


# ---------------------------------------------------------------------------
# diagnostics


def overshoot_moment(law: EnvironmentLaw, c: float, b_grid: Sequence[float], n_samples: int = 100_000,
                     rng: np.random.Generator | None = None, step_cap: int = DEFAULT_LINE_CAP,
                     mode: str = EXACT_MODE) -> dict[float, Estimate]:
    """Per-level estimates of ``E_Q[exp(c · ΔS_{H_b})]``, the crossing jump at first passage."""
    if c < 0:
        raise ValueError("c must be >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    out = {}
    for b in b_grid:
        if c == 0:
            out[b] = Estimate(1.0, 0.0, 0, EXACT)
            continue
        run = run_to_level(law, b, n_samples, rng, mode, step_cap)
        ok = run.completed & np.isfinite(run.log_weight)
        vals = np.exp(c * run.crossing[ok])
        out[b] = _finish(vals, run.log_weight[ok], mode, run.discards)
    return out


def moment_growth_flag(law: EnvironmentLaw, c: float, b: float, sizes: Sequence[int],
                       rng: np.random.Generator) -> bool:
    """True when the estimate keeps rising with the sample size (a divergence symptom)."""
    vals = [overshoot_moment(law, c, [b], n, rng)[b].value for n in sizes]
    return all(y > 1.05 * x for x, y in zip(vals, vals[1:]))


def mu_L(law: EnvironmentLaw, L: int, alpha: float, c4: float, n_samples: int = 100_000,
         rng: np.random.Generator | None = None, mode: str = EXACT_MODE,
         indicators: bool = True) -> Estimate:
    """Q-estimate of the mean first-generation size of the embedded block tree.

    ``E_Q[e^{S_L} 1{S_L ≥ L^α} 1{max_{i≤L} S_i < 2L^α} 1{∏(1 + η_j) ≤ e^{c4 L}}]``
    with ``η_j`` the total ``e^{-ΔV}`` weight of the children of ``w_{j-1}``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if c4 <= 0 or L < 1:
        raise ValueError("need L >= 1 and c4 > 0")
    rng = rng if rng is not None else np.random.default_rng()
    sp = sample_spines(law, L, n_samples, rng, mode)
    S = sp.S
    vals = np.exp(S[:, -1])
    if indicators:
        gain = L ** alpha
        top = np.maximum(S.max(axis=1), 0.0)
        logprod = np.log1p(sp.eta["exp_neg"]).sum(axis=1)
        vals = vals * ((S[:, -1] >= gain) & (top < 2.0 * gain) & (logprod <= c4 * L))
    return _finish(vals, sp.log_weight, mode)


def c4_threshold(law: EnvironmentLaw, delta1: float = 1.0, n_samples: int = 200_000,
                 rng: np.random.Generator | None = None) -> Estimate:
    """Estimate of ``log(1 + E_Q[η^δ]) / δ``; admissible ``c4`` must exceed it."""
    rng = rng if rng is not None else np.random.default_rng()
    sp = sample_spines(law, 1, n_samples, rng)
    e = mean_estimate(sp.eta["exp_neg"][:, 0] ** delta1, Q_MC)
    v = math.log1p(e.value) / delta1
    return Estimate(v, e.stderr / (1.0 + e.value) / delta1, e.samples, Q_MC)


@dataclass
class MartingaleCheck:
    estimate: Estimate
    heavy_tail: bool
    extinct_fraction: float = 0.0


def martingale_check(law: EnvironmentLaw, n: int, n_samples: int = 10_000,
                     rng: np.random.Generator | None = None) -> MartingaleCheck:
    """``E[W_n]`` by direct simulation of fresh trees (expected to be 1)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return MartingaleCheck(Estimate(1.0, 0.0, 0, EXACT), False)
    rng = rng if rng is not None else np.random.default_rng()
    owner = np.arange(n_samples)
    V = np.zeros(n_samples)
    for _ in range(n):
        counts, dv = law.sample_generation(rng, owner.size)
        owner = np.repeat(owner, counts)
        V = np.repeat(V, counts) + dv
    W = np.bincount(owner, weights=np.exp(-V), minlength=n_samples)
    est = mean_estimate(W, DIRECT_MC)
    half = n_samples // 2
    heavy = False
    if half >= 2:
        a, b = W[:half].std(ddof=1), W[half:].std(ddof=1)
        heavy = bool(max(a, b) > 2.0 * max(min(a, b), 1e-300))
    return MartingaleCheck(est, heavy, float((W == 0).mean()))
