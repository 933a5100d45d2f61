"""One-dimensional centered random walks: exits, corridors, ladder heights.

Exact oracles live on the ±1 lattice, where first passage has no overshoot:
two-sided exit probabilities come from a rational linear solve, and the
drawdown-corridor probability from a dynamic program over (running max,
drawdown).  Continuous step laws get Monte Carlo estimates, plus a
Nyström discretization of the exit problem for the Gaussian law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, special

from .environment import EnvironmentLaw
from .stats import DIRECT_MC, EXACT, Estimate, mean_estimate

SIMPLE_LATTICE = "SimpleLattice"
GAUSSIAN = "Gaussian"
SPINE_MARGINAL = "SpineMarginal"

WITH_FLOOR = "with_floor"
NO_FLOOR = "no_floor"
DP_STATE_BUDGET = 10 ** 8

FIXTURE_PATH = Path(__file__).with_name("fixtures") / "rw1d_reference.txt"


class BudgetError(RuntimeError):
    """Raised when an exact computation would exceed its state budget."""


@dataclass(frozen=True)
class StepLaw1D:
    family: str
    scale: float = 1.0
    env: EnvironmentLaw | None = None

    def __post_init__(self):
        if self.family not in (SIMPLE_LATTICE, GAUSSIAN, SPINE_MARGINAL):
            raise ValueError(f"unknown step family {self.family!r}")
        if self.family == SPINE_MARGINAL and self.env is None:
            raise ValueError("SpineMarginal needs an environment law")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def lattice(self) -> bool:
        return self.family == SIMPLE_LATTICE

    @property
    def variance(self) -> float:
        if self.family == SPINE_MARGINAL:
            return self.env.sigma2
        return self.scale ** 2

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.family == SIMPLE_LATTICE:
            return np.where(rng.random(size) < 0.5, 1.0, -1.0)
        if self.family == GAUSSIAN:
            return rng.normal(0.0, self.scale, size)
        from .spine import q_increments
        n = int(np.prod(size))
        return q_increments(self.env, rng, n).reshape(size)


def simple_lattice() -> StepLaw1D:
    return StepLaw1D(SIMPLE_LATTICE)


def gaussian(scale: float = 1.0) -> StepLaw1D:
    return StepLaw1D(GAUSSIAN, scale)


def spine_marginal(env: EnvironmentLaw) -> StepLaw1D:
    return StepLaw1D(SPINE_MARGINAL, env=env)


def _run_blocks(law: StepLaw1D, size: int, rng: np.random.Generator, stop, step_cap: int,
                block: int = 64, max_cells: int = 4_000_000):
    """Advance ``size`` walks from 0 until ``stop(path, running_max)`` fires.

    ``stop`` returns an integer code per cell (0 = continue).  Returns the
    code, the stopping index, the value at the stop, the crossing jump and the
    running max just before the stop; unresolved walks get code 0.
    """
    S = np.zeros(size)
    top = np.zeros(size)
    code = np.zeros(size, dtype=np.int8)
    index = np.zeros(size, dtype=np.int64)
    value = np.zeros(size)
    jump = np.zeros(size)
    active = np.arange(size)
    t = 0
    while active.size and t < step_cap:
        m = active.size
        k = max(1, min(max(block, t // 2), step_cap - t, max_cells // m))
        steps = law.sample(rng, (m, k))
        path = S[active, None] + np.cumsum(steps, axis=1)
        tops = np.maximum(np.maximum.accumulate(path, axis=1), top[active, None])
        prev_top = np.concatenate([top[active, None], tops[:, :-1]], axis=1)
        c = stop(path, prev_top)
        fired = c != 0
        anyf = fired.any(axis=1)
        first = np.where(anyf, fired.argmax(axis=1), k - 1)
        rows = np.arange(m)
        S[active] = path[rows, first]
        top[active] = tops[rows, first]
        fin = active[anyf]
        code[fin] = c[rows[anyf], first[anyf]]
        index[fin] = t + first[anyf] + 1
        value[fin] = path[rows[anyf], first[anyf]]
        jump[fin] = steps[rows[anyf], first[anyf]]
        active = active[~anyf]
        t += k
    return code, index, value, jump


# ---------------------------------------------------------------------------
# two-sided exit


def gamblers_ruin(a: int, b: int) -> Fraction:
    """Closed form ``b / (a + b)`` for the ±1 walk from 0 (``a, b ≥ 1``)."""
    return Fraction(b, a + b)


def lattice_exit_exact(a: int, b: int) -> Fraction:
    """``P{H_a < H⁻_{-b}}`` for the ±1 walk by an exact rational linear solve.

    ``h(x) = (h(x+1) + h(x-1))/2`` on ``-b < x < a`` with ``h = 1`` at or
    above ``a`` and ``h = 0`` at or below ``-b``; the first step from 0 is
    taken explicitly since both hitting times count from time 1.
    """
    if a < 0 or b < 0 or a + b == 0:
        raise ValueError("need a, b >= 0 with a + b > 0")

    def h(x: int) -> Fraction:
        if x >= a:
            return Fraction(1)
        if x <= -b:
            return Fraction(0)
        # interior states -b+1 .. a-1, Thomas algorithm in exact arithmetic
        lo, hi = -b + 1, a - 1
        n = hi - lo + 1
        # unknowns u_i = h(lo + i): -u_{i-1}/2 + u_i - u_{i+1}/2 = 0, boundary terms moved right
        cp = [Fraction(0)] * n
        dp = [Fraction(0)] * n
        for i in range(n):
            rhs = Fraction(1, 2) if i == n - 1 else Fraction(0)
            denom = 1 - (Fraction(-1, 2) * cp[i - 1] if i else 0)
            cp[i] = Fraction(-1, 2) / denom
            dp[i] = (rhs - (Fraction(-1, 2) * dp[i - 1] if i else 0)) / denom
        u = [Fraction(0)] * n
        u[-1] = dp[-1]
        for i in range(n - 2, -1, -1):
            u[i] = dp[i] - cp[i] * u[i + 1]
        return u[x - lo]

    return (h(1) + h(-1)) / 2


@dataclass
class ExitResult:
    estimate: Estimate
    exact: Fraction | None = None


def exit_prob(law: StepLaw1D, a: float, b: float, n_samples: int = 100_000,
              rng: np.random.Generator | None = None, step_cap: int = 10 ** 7) -> ExitResult:
    """``P{H_a < H⁻_{-b}}`` by Monte Carlo; exact value attached on the lattice for integer levels."""
    if a < 0 or b < 0 or a + b <= 0:
        raise ValueError("need a, b >= 0 with a + b > 0")
    rng = rng if rng is not None else np.random.default_rng()

    def stop(path, _):
        return np.where(path >= a, 1, np.where(path <= -b, 2, 0)).astype(np.int8)

    code, *_ = _run_blocks(law, n_samples, rng, stop, step_cap)
    unresolved = int((code == 0).sum())
    est = mean_estimate((code[code != 0] == 1).astype(float), DIRECT_MC, unresolved)
    exact = None
    if law.lattice and float(a).is_integer() and float(b).is_integer():
        exact = lattice_exit_exact(int(a), int(b))
    return ExitResult(est, exact)


def _gauss_legendre_panels(lo: float, hi: float, h: float, order: int = 8):
    n_panels = max(1, int(math.ceil((hi - lo) / h)))
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def gaussian_exit_nystrom(a: float, b: float, scale: float = 1.0, h: float = 1.0,
                          order: int = 8, reach: float = 8.0) -> float:
    """``P{H_a < H⁻_{-b}}`` for ``N(0, scale²)`` steps via a Nyström solve.

    The harmonic function ``u(x) = P_x{H_a < H⁻_{-b}}`` satisfies
    ``u(x) = Φ̄((a - x)/σ) + ∫_{-b}^{a} u(y) φ_σ(y - x) dy`` inside the
    interval; the kernel is truncated at ``reach`` standard deviations, which
    makes the system banded.
    """
    if a <= 0 or b <= 0:
        raise ValueError("the Nyström solver needs a, b > 0")
    x, w = _gauss_legendre_panels(-b, a, h, order)
    n = x.size
    band = int(math.ceil(reach * scale / h)) * order + order
    band = min(band, n - 1)
    ab = np.zeros((2 * band + 1, n))
    for k in range(-band, band + 1):
        i = np.arange(max(0, -k), min(n, n - k))
        j = i + k
        kern = np.exp(-0.5 * ((x[j] - x[i]) / scale) ** 2) / (scale * math.sqrt(2 * math.pi)) * w[j]
        ab[band - k, j] = (1.0 if k == 0 else 0.0) - kern
    rhs = special.ndtr(-(a - x) / scale)
    u = linalg.solve_banded((band, band), ab, rhs)
    # one more step from the start point 0, which need not be a node
    k0 = np.exp(-0.5 * (x / scale) ** 2) / (scale * math.sqrt(2 * math.pi)) * w
    return float(special.ndtr(-a / scale) + k0 @ u)


def exit_band_sweep(law: StepLaw1D, grid: Sequence[int] = tuple(range(1, 21)), n_samples: int = 4_000,
                    rng: np.random.Generator | None = None) -> dict:
    """``sup |(a + b) P̂ - b|`` over an ``(a, b)`` grid, with the cell that attains it."""
    rng = rng if rng is not None else np.random.default_rng()
    worst, arg, cells = 0.0, None, {}
    for a in grid:
        for b in grid:
            e = exit_prob(law, a, b, n_samples, rng).estimate
            dev = abs((a + b) * e.value - b)
            cells[(a, b)] = (e.value, e.stderr)
            if dev > worst:
                worst, arg = dev, (a, b)
    return {"band": worst, "argmax": arg, "cells": cells}


# ---------------------------------------------------------------------------
# drawdown corridor


def _allowed(lam: float, M: int, mode: str) -> int:
    """Number of admissible drawdown values at running max ``M``."""
    L = int(math.ceil(lam))
    return min(L, M + 1) if mode == WITH_FLOOR else L


def corridor_block_product(r: int, lam: float, mode: str = NO_FLOOR) -> Fraction:
    """Closed product over ladder levels: each new maximum is reached before the
    drawdown exhausts its ``L`` admissible values with probability ``L/(L+1)``."""
    out = Fraction(1)
    for M in range(r):
        L = _allowed(lam, M, mode)
        out *= Fraction(L, L + 1)
    return out


def corridor_lattice_dp(r: int, lam: float, mode: str = NO_FLOOR,
                        budget: int = DP_STATE_BUDGET) -> float:
    """Exact corridor probability for the ±1 walk by dynamic programming.

    States are (running max ``M``, drawdown ``D``).  For each ``M`` the walk
    moves in ``D`` until it either makes a new maximum or the drawdown reaches
    the forbidden value; the escape probability solves a tridiagonal system.
    Returns ``log P``.
    """
    if r < 1 or lam < 1:
        raise ValueError("need r >= 1 and lambda >= 1")
    if mode not in (WITH_FLOOR, NO_FLOOR):
        raise ValueError(f"unknown mode {mode!r}")
    r = int(r)
    states = r * int(math.ceil(lam))
    if states > budget:
        raise BudgetError(f"corridor DP needs {states} states for (r={r}, lambda={lam}); budget {budget}")
    logp = 0.0
    for M in range(r):
        L = _allowed(lam, M, mode)
        # f(D) = P(new max before drawdown L | drawdown D), D = 0..L-1
        # f(D) = (f(D-1) + f(D+1))/2 with f(-1) = 1 and f(L) = 0
        n = L
        ab = np.zeros((3, n))
        ab[0, 1:] = -0.5
        ab[1, :] = 1.0
        ab[2, :-1] = -0.5
        rhs = np.zeros(n)
        rhs[0] = 0.5
        f = linalg.solve_banded((1, 1), ab, rhs)
        logp += math.log(f[0])
    return logp


def corridor_path_enumeration(r: int, lam: float, mode: str = NO_FLOOR,
                              max_len: int = 2_000) -> tuple[Fraction, Fraction]:
    """Bracket ``[resolved, resolved + unresolved]`` from exhaustive ±1 path counting.

    Paths are grouped by (position, running max) and counted with exact
    integers; each length-``n`` path carries probability ``2^-n``.
    """
    L = int(math.ceil(lam))
    counts = {(0, 0): 1}
    good = Fraction(0)
    n = 0
    while counts and n < max_len:
        n += 1
        nxt: dict[tuple[int, int], int] = {}
        for (s, m), c in counts.items():
            for step in (1, -1):
                t = s + step
                top = max(m, t)
                if t >= r:
                    good += Fraction(c, 2 ** n)
                    continue
                if top - t >= L:
                    continue
                if mode == WITH_FLOOR and t < 0:
                    continue
                nxt[(t, top)] = nxt.get((t, top), 0) + c
        counts = nxt
    rest = Fraction(sum(counts.values()), 2 ** n)
    return good, good + rest


def corridor_prob(law: StepLaw1D, r: float, lam: float, mode: str = NO_FLOOR, method: str = "lattice_dp",
                  n_samples: int = 100_000, rng: np.random.Generator | None = None,
                  step_cap: int = 10 ** 7) -> Estimate:
    """Probability that the drawdown stays below ``lam`` (and ``S ≥ 0`` with the floor) up to ``H_r``."""
    if r < 1 or lam < 1:
        raise ValueError("need r >= 1 and lambda >= 1")
    if mode not in (WITH_FLOOR, NO_FLOOR):
        raise ValueError(f"unknown mode {mode!r}")
    if method == "lattice_dp":
        if not law.lattice or not float(r).is_integer():
            raise ValueError("lattice_dp needs the SimpleLattice law and an integer r")
        return Estimate(math.exp(corridor_lattice_dp(int(r), lam, mode)), 0.0, 0, EXACT)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rng = rng if rng is not None else np.random.default_rng()

    def stop(path, prev_top):
        top = np.maximum(prev_top, path)
        out = np.where(path >= r, 1, 0)
        bad = top - path >= lam
        if mode == WITH_FLOOR:
            bad |= path < 0
        return np.where(out == 1, 1, np.where(bad, 2, 0)).astype(np.int8)

    code, *_ = _run_blocks(law, n_samples, rng, stop, step_cap)
    unresolved = int((code == 0).sum())
    return mean_estimate((code[code != 0] == 1).astype(float), DIRECT_MC, unresolved)


def corridor_exponent(log_p: float, r: float, lam: float) -> float:
    """``-(λ/r) log P``, close to 1 when the main term ``r/λ`` dominates."""
    return -lam / r * log_p


# ---------------------------------------------------------------------------
# ladder heights and overshoots


@dataclass
class LadderStats:
    mean_height: Estimate
    overshoot: dict[float, tuple[float, float, float]]


def ladder_heights(law: StepLaw1D, n_samples: int, rng: np.random.Generator, strict: bool = True,
                   step_cap: int = 10 ** 4) -> tuple[np.ndarray, int]:
    """First ascending ladder heights; walks not laddering within ``step_cap`` are dropped (count returned)."""

    def stop(path, _):
        return ((path > 0) if strict else (path >= 0)).astype(np.int8)

    code, _, value, _ = _run_blocks(law, n_samples, rng, stop, step_cap)
    return value[code == 1], int((code == 0).sum())


def ladder_stats(law: StepLaw1D, n_samples: int = 100_000, rng: np.random.Generator | None = None,
                 b_grid: Sequence[float] = (1.0, 5.0, 10.0, 30.0), strict: bool = True,
                 step_cap: int = 10 ** 4) -> LadderStats:
    """Mean first ladder height and, per level ``b``, (mean, median, 0.99-quantile) of the
    overshoot ``S_{H_b} - b``."""
    rng = rng if rng is not None else np.random.default_rng()
    if law.lattice and strict:
        mean = Estimate(1.0, 0.0, 0, EXACT)
    else:
        h, dropped = ladder_heights(law, n_samples, rng, strict, step_cap)
        mean = mean_estimate(h, DIRECT_MC, dropped)
    over = {}
    for b in b_grid:
        def stop(path, _, b=b):
            return (path >= b).astype(np.int8)

        code, _, value, _ = _run_blocks(law, max(1, n_samples // 10), rng, stop, step_cap * 10)
        o = value[code == 1] - b
        over[b] = (float(o.mean()), float(np.median(o)), float(np.quantile(o, 0.99))) if o.size else (math.nan,) * 3
    return LadderStats(mean, over)


def first_passage_value(law: StepLaw1D, a: float, n_samples: int, rng: np.random.Generator,
                        step_cap: int = 10 ** 6) -> Estimate:
    """``E[S_{H_a}]``; walks still below ``a`` at the cap are dropped and counted."""

    def stop(path, _):
        return (path >= a).astype(np.int8)

    code, _, value, _ = _run_blocks(law, n_samples, rng, stop, step_cap)
    return mean_estimate(value[code == 1], DIRECT_MC, int((code == 0).sum()))


def exit_tail_check(a: float, b_grid: Sequence[float], n_samples: int = 200_000,
                    rng: np.random.Generator | None = None, h: float = 1.0) -> dict:
    """Compare ``b · P{H⁻_{-b} < H_a}`` (Nyström, refinement gap as error) with ``E[S_{H_a}]`` (MC)
    for standard Gaussian steps."""
    rng = rng if rng is not None else np.random.default_rng()
    target = first_passage_value(gaussian(), a, n_samples, rng)
    rows = {}
    for b in b_grid:
        p1 = 1.0 - gaussian_exit_nystrom(a, b, h=h)
        p2 = 1.0 - gaussian_exit_nystrom(a, b, h=h / 2)
        rows[b] = (b * p2, b * abs(p2 - p1))
    return {"target": target, "rows": rows}


# ---------------------------------------------------------------------------
# extremes of i.i.d. samples


@dataclass
class ExtremesResult:
    ratios: np.ndarray

    @property
    def median(self) -> float:
        return float(np.median(self.ratios))

    @property
    def iqr(self) -> tuple[float, float]:
        return float(np.quantile(self.ratios, 0.25)), float(np.quantile(self.ratios, 0.75))


def extremes_check(alpha: float, n: int, replicas: int = 100, rng: np.random.Generator | None = None,
                   chunk: int = 1 << 20) -> ExtremesResult:
    """``max_{k≤n} ξ_k / log n`` for i.i.d. ``ξ`` with tail ``P(ξ > x) = e^{-αx}``, per replica."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = rng if rng is not None else np.random.default_rng()
    out = np.empty(replicas)
    for i in range(replicas):
        best = -math.inf
        left = n
        while left:
            k = min(chunk, left)
            best = max(best, float(rng.exponential(1.0 / alpha, k).max()))
            left -= k
        out[i] = best / math.log(n)
    return ExtremesResult(out)


# ---------------------------------------------------------------------------
# reference fixtures


@dataclass(frozen=True)
class Fixture:
    name: str
    value: float
    stderr: float
    samples: int
    seed: int


def read_fixtures(path: Path = FIXTURE_PATH) -> dict[str, Fixture]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, value, se, n, seed = (t.strip() for t in line.split(","))
        out[name] = Fixture(name, float(value), float(se), int(n), int(seed))
    return out


def write_fixtures(fixtures: Sequence[Fixture], path: Path = FIXTURE_PATH) -> None:
    lines = ["# name, value, stderr, samples, seed"]
    lines += [f"{f.name}, {f.value!r}, {f.stderr!r}, {f.samples}, {f.seed}" for f in fixtures]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


LADDER_FIXTURE = "gaussian_ladder_height_cap1e4"
LADDER_FIXTURE_SAMPLES = 100_000_000
LADDER_FIXTURE_SEED = 20240601


def refresh_fixtures(path: Path = FIXTURE_PATH, samples: int = LADDER_FIXTURE_SAMPLES,
                     seed: int = LADDER_FIXTURE_SEED) -> list[Fixture]:
    """Recompute the frozen high-sample references (slow)."""
    rng = np.random.default_rng(seed)
    total = 0
    acc_sum = acc_sq = 0.0
    dropped = 0
    batch = 1_000_000
    while total < samples:
        k = min(batch, samples - total)
        h, d = ladder_heights(gaussian(), k, rng, True, 10 ** 4)
        acc_sum += float(h.sum())
        acc_sq += float((h * h).sum())
        dropped += d
        total += k
    n = total - dropped
    mean = acc_sum / n
    se = math.sqrt(max(acc_sq / n - mean * mean, 0.0) / n)
    fx = [Fixture(LADDER_FIXTURE, mean, se, n, seed)]
    write_fixtures(fx, path)
    return fx
