"""Experiment harness: ``gwlab <experiment> --config FILE`` writes CSV tables and a JSON summary."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import quenched, rw1d, spine
from .environment import LawError, TreeArena, law_from_config, verify_boundary_case
from .stats import EXACT, mean_estimate, ols
from .walk import run_excursions, run_steps

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_BUDGET = 4
EXIT_SCHEMA = 5

PASS, FAIL, INFO = "pass", "fail", "informational"

SPINE_COLUMNS = ["estimator", "target", "n_or_r", "value", "stderr", "samples", "discards"]


class ConfigError(ValueError):
    pass


class BudgetError(RuntimeError):
    pass


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value', got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {no}: empty key")
        out[key] = value
    return out


@dataclass
class Config:
    values: dict[str, str] = field(default_factory=dict)

    def digest(self) -> str:
        canon = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def _get(self, key, default, conv):
        if key not in self.values:
            return default
        try:
            return conv(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {self.values[key]!r}") from exc

    def text(self, key: str, default: str) -> str:
        return self._get(key, default, str)

    def integer(self, key: str, default: int) -> int:
        return self._get(key, default, lambda s: int(float(s)))

    def number(self, key: str, default: float) -> float:
        return self._get(key, default, float)

    def numbers(self, key: str, default: Sequence[float]) -> list[float]:
        return self._get(key, list(default), lambda s: [float(t) for t in s.split(",") if t.strip()])

    def integers(self, key: str, default: Sequence[int]) -> list[int]:
        return self._get(key, list(default), lambda s: [int(float(t)) for t in s.split(",") if t.strip()])

    def law(self):
        sub = {"family": self.values.get("law", "TwoPoint")}
        for k in ("b", "lambda"):
            if k in self.values:
                sub[k] = self.values[k]
        try:
            return law_from_config(sub)
        except (LawError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def rng_for(cfg: Config, replica: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.integer("seed", 0), replica, stream])


def _check_budget(cfg: Config, work: float, what: str) -> None:
    budget = cfg.number("budget", 1e13)
    if work > budget:
        raise BudgetError(f"{what} needs about {work:.3g} work units; budget is {budget:.3g}")


def _map_replicas(fn: Callable, cfg: Config, replicas: int) -> list:
    """Run ``fn(cfg_values, replica)`` for every replica; results in replica order."""
    workers = cfg.integer("workers", 1)
    args = [(dict(cfg.values), i) for i in range(replicas)]
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, *zip(*args)))


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Result:
    tables: dict[str, Table]
    metrics: dict
    verdicts: dict[str, str]


def _median(x) -> float:
    return float(np.median(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# experiments


def exp_verify_law(cfg: Config) -> Result:
    law = cfg.law()
    n = cfg.integer("n_samples", 100_000)
    _check_budget(cfg, n * law.mean_offspring, "verify-law")
    t = Table(["law", "method", "m0", "m0_se", "m1", "m1_se", "sigma2", "sigma2_se", "samples"])
    reps = {}
    for method in ("closed_form", "quadrature", "monte_carlo"):
        rep = verify_boundary_case(law, method, n, rng_for(cfg, 0))
        reps[method] = rep
        t.rows.append([law.family, method, rep.m0, rep.m0_se, rep.m1, rep.m1_se, rep.sigma2, rep.sigma2_se,
                       rep.samples])
    cf, mc = reps["closed_form"], reps["monte_carlo"]
    exact_ok = abs(cf.m0 - 1.0) < 1e-12 and abs(cf.m1) < 1e-12
    mc_ok = (abs(mc.m0 - 1.0) <= 4 * mc.m0_se and abs(mc.m1) <= 4 * mc.m1_se
             and abs(mc.sigma2 - cf.sigma2) <= 4 * mc.sigma2_se)
    return Result({"": t}, {"m0": cf.m0, "m1": cf.m1, "sigma2": cf.sigma2},
                  {"closed_form_boundary": PASS if exact_ok else FAIL,
                   "monte_carlo_within_4se": PASS if mc_ok else FAIL})


def _trajectory_job(values: dict, replica: int):
    cfg = Config(values)
    ns = sorted(cfg.integers("n_list", [10_000, 100_000, 1_000_000]))
    arena = TreeArena(cfg.law(), cfg.integer("seed", 0), replica)
    s = run_steps(arena, ns[-1], rng_for(cfg, replica, 1), checkpoints=ns)
    cps = dict(s.checkpoints)
    cps[ns[-1]] = (s.max_v, s.max_depth)
    return [(replica, n, cps[n][0], cps[n][1]) for n in ns]


def _trajectories(cfg: Config):
    ns = sorted(cfg.integers("n_list", [10_000, 100_000, 1_000_000]))
    reps = cfg.integer("replicas", 32)
    _check_budget(cfg, reps * ns[-1], "trajectories")
    rows = [r for rr in _map_replicas(_trajectory_job, cfg, reps) for r in rr]
    return ns, rows


def _trend(ns, medians) -> dict:
    x = [1.0 / math.log(n) for n in ns]
    slope, intercept = ols(x, medians) if len(ns) > 1 else (math.nan, medians[0])
    return {"trend_slope_vs_inv_log_n": slope, "extrapolated_limit": intercept}


RUN_COLUMNS = ["replica", "n_steps", "maxV", "maxDepth", "ratio_V", "ratio_depth", "seed"]


def _run_table(cfg: Config, rows) -> Table:
    seed = cfg.integer("seed", 0)
    t = Table(list(RUN_COLUMNS))
    for rep, n, mv, md in rows:
        t.rows.append([rep, n, mv, md, mv / math.log(n) ** 2, md / math.log(n) ** 3, seed])
    return t


def exp_theorem_main(cfg: Config) -> Result:
    ns, rows = _trajectories(cfg)
    t = _run_table(cfg, rows)
    med = [_median([r[4] for r in t.rows if r[1] == n]) for n in ns]
    lo, hi = cfg.numbers("band", [0.15, 0.9])
    monotone = all(b > a for a, b in zip(med, med[1:]))
    metrics = {"median_ratio": dict(zip(map(str, ns), med)), **_trend(ns, med)}
    return Result({"": t}, metrics, {"medians_increasing": PASS if monotone else FAIL,
                                     "band_at_largest_n": PASS if lo <= med[-1] <= hi else FAIL})


def exp_displacement(cfg: Config) -> Result:
    ns, rows = _trajectories(cfg)
    t = _run_table(cfg, rows)
    med = [_median([r[5] for r in t.rows if r[1] == n]) for n in ns]
    metrics = {"median_ratio": dict(zip(map(str, ns), med)), **_trend(ns, med)}
    return Result({"": t}, metrics, {"displacement_trend": INFO})


def _gamma_job(values: dict, replica: int):
    cfg = Config(values)
    arena = TreeArena(cfg.law(), cfg.integer("seed", 0), replica)
    curve = quenched.gamma_r_curve(arena, cfg.numbers("r_list", [6, 10, 14, 18, 22]), cfg.integer("depth_cap", 600),
                                   engine=cfg.text("engine", "auto"))
    return curve


def exp_gamma_scaling(cfg: Config) -> Result:
    reps = cfg.integer("replicas", 8)
    rs = cfg.numbers("r_list", [6, 10, 14, 18, 22])
    _check_budget(cfg, reps * math.exp(max(rs)), "gamma-scaling")
    curves = _map_replicas(_gamma_job, cfg, reps)
    t = Table(["replica", "r", "gamma_lower", "gamma_upper", "line_size", "depth_cap", "truncated"])
    slopes = []
    for i, c in enumerate(curves):
        slopes.append(c.slope)
        for p in c.points:
            t.rows.append([i, p.r, p.lower, p.upper, p.line_size, p.depth_cap, int(p.truncated)])
    lo, hi = cfg.numbers("slope_band", [0.5, 1.5])
    inside = sum(lo <= s <= hi for s in slopes)
    need = math.ceil(cfg.number("slope_fraction", 0.75) * reps)
    monotone = all(c.monotone for c in curves)
    return Result({"": t}, {"slopes": slopes, "arenas_in_band": inside, "required": need},
                  {"slope_band": PASS if inside >= need else FAIL,
                   "brackets_monotone": PASS if monotone else FAIL})


def _excursion_job(values: dict, replica: int):
    cfg = Config(values)
    r = cfg.number("r", 4.0)
    arena = TreeArena(cfg.law(), cfg.integer("seed", 0), replica)
    gp = quenched.gamma_bracket(arena, r, cfg.integer("depth_cap", 10_000))
    run = run_excursions(arena, cfg.integer("n_excursions", 10_000), rng_for(cfg, replica, 2), probe_r=r,
                         step_cap=cfg.integer("step_cap", 10 ** 9))
    if run.truncated:
        raise BudgetError(f"excursions on arena {replica} hit the step cap")
    recs = [[replica, e.index, e.length, e.max_v, e.max_depth, int(e.hit)] for e in run.records]
    return gp, run.hit_frequency(), recs


def exp_excursion_tail(cfg: Config) -> Result:
    reps = cfg.integer("replicas", 5)
    _check_budget(cfg, reps * cfg.integer("n_excursions", 10_000) * 100, "excursion-tail")
    t = Table(["replica", "r", "gamma_lower", "gamma_upper", "frequency", "stderr", "z"])
    exc = Table(["replica", "excursion_idx", "length", "maxV", "maxDepth", "hit_flag"])
    ok = True
    for i, (gp, est, recs) in enumerate(_map_replicas(_excursion_job, cfg, reps)):
        z = est.z_score(gp.point)
        ok &= abs(z) <= 4 and gp.point >= 1e-3
        t.rows.append([i, gp.r, gp.lower, gp.upper, est.value, est.stderr, z])
        exc.rows.extend(recs)
    return Result({"": t, "excursions": exc}, {"max_abs_z": max(abs(r[-1]) for r in t.rows)},
                  {"hit_frequency_within_4se": PASS if ok else FAIL})


def exp_spine_check(cfg: Config) -> Result:
    law = cfg.law()
    cases = cfg.integer("cases", 20)
    n_max = cfg.integer("n_max", 6)
    ns = cfg.integer("n_samples", 100_000)
    _check_budget(cfg, cases * ns * n_max, "spine-check")
    rng = rng_for(cfg, 0, 3)
    t = Table(list(SPINE_COLUMNS))
    verdicts = {}
    metrics = {}
    if law.family == "TwoPoint":
        good = 0
        for c in range(cases):
            n = int(rng.integers(1, n_max + 1))
            table = rng.random(1 << n)
            exact = spine.two_point_path_sum(law, n, table)
            est = spine.many_to_one(law, n, lambda S, tab=table: tab[spine.sign_index(S)], ns, rng)
            good += abs(est.z_score(exact)) <= 3
            t.rows.append([EXACT, f"table_{c}", n, exact, 0.0, 0, 0])
            t.rows.append([est.estimator, f"table_{c}", n, est.value, est.stderr, est.samples, est.discards])
        need = math.ceil(cfg.number("pass_fraction", 0.9) * cases)
        metrics["within_3se"] = good
        verdicts["many_to_one_enumeration"] = PASS if good >= need else FAIL
    r = cfg.number("line_r", 3 * law.a if law.family == "TwoPoint" else 3.0)
    tel = spine.many_to_one_line(law, r, None, cfg.integer("line_samples", 20_000), rng, log_g=lambda s: -s,
                                 terminal_only=True, step_cap=cfg.integer("step_cap", 100_000),
                                 discard_policy="drop")
    t.rows.append([tel.estimator, "line_telescoping", r, tel.value, tel.stderr, tel.samples, tel.discards])
    metrics["telescoping"] = {"value": tel.value, "stderr": tel.stderr, "discards": tel.discards}
    verdicts["line_telescoping"] = PASS if tel.value == 1.0 and tel.stderr == 0.0 else FAIL
    n_mart = cfg.integer("martingale_n", 5)
    mc = spine.martingale_check(law, n_mart, cfg.integer("martingale_samples", 20_000), rng)
    e = mc.estimate
    t.rows.append([e.estimator, "martingale_W_n", n_mart, e.value, e.stderr, e.samples, e.discards])
    metrics["martingale"] = {"value": e.value, "stderr": e.stderr}
    verdicts["martingale_mean_one"] = INFO
    return Result({"": t}, metrics, verdicts)


def _zr_job(values: dict, replica: int):
    cfg = Config(values)
    grid = quenched.LadderGrid(cfg.number("r", 8.0), cfg.number("chi", 0.75), cfg.number("theta", 0.6),
                               cfg.number("eps", 1.0), cfg.number("eps1", 1.5), cfg.number("beta", 10.0))
    arena = TreeArena(cfg.law(), cfg.integer("seed", 0), replica)
    rl = quenched.restricted_line(arena, grid, cfg.integer("depth_cap", 10_000))
    run = run_excursions(arena, cfg.integer("n_excursions", 20_000), rng_for(cfg, replica, 4), probes=rl.members,
                         step_cap=cfg.integer("step_cap", 10 ** 9))
    if run.truncated:
        raise BudgetError(f"excursions on arena {replica} hit the step cap")
    return len(rl.line.members), len(rl.members), rl.first_moment, mean_estimate(run.probe_counts())


def exp_zr_moments(cfg: Config) -> Result:
    reps = cfg.integer("replicas", 5)
    _check_budget(cfg, reps * cfg.integer("n_excursions", 20_000) * 100, "zr-moments")
    t = Table(["replica", "line_size", "restricted_size", "exact_first_moment", "mc_mean", "stderr", "z"])
    ok = True
    for i, (nl, nr, exact, est) in enumerate(_map_replicas(_zr_job, cfg, reps)):
        z = est.z_score(exact) if est.stderr > 0 else (0.0 if est.value == exact else math.inf)
        ok &= abs(z) <= 4
        t.rows.append([i, nl, nr, exact, est.value, est.stderr, z])
    return Result({"": t}, {"max_abs_z": max(abs(r[-1]) for r in t.rows)},
                  {"first_moment_within_4se": PASS if ok else FAIL})


def _census_job(values: dict, replica: int):
    cfg = Config(values)
    arena = TreeArena(cfg.law(), cfg.integer("seed", 0), replica)
    return quenched.embedded_tree_census(arena, cfg.integer("L", 8), cfg.number("alpha", 0.45), cfg.number("c4", 1.5),
                                         cfg.integer("n_levels", 4))


def exp_mu_l(cfg: Config) -> Result:
    law = cfg.law()
    reps = cfg.integer("replicas", 50)
    Ls = cfg.integers("L_list", [20, 40, 80])
    ns = cfg.integer("n_samples", 200_000)
    _check_budget(cfg, ns * sum(Ls) + reps * 1e6, "mu-l")
    census = Table(["replica", "n", "s", "k_count", "surviving_g", "holds"])
    holds = True
    for i, c in enumerate(_map_replicas(_census_job, cfg, reps)):
        for row in c.rows:
            census.rows.append([i, row.n, row.s, row.k_count, row.surviving_g, int(row.holds)])
        holds &= c.all_hold
    mu = Table(list(SPINE_COLUMNS))
    rng = rng_for(cfg, 0, 5)
    alpha, c4 = cfg.number("alpha", 0.45), cfg.number("c4", 1.5)
    vals = []
    for L in Ls:
        e = spine.mu_L(law, L, alpha, c4, ns, rng)
        vals.append(e.value)
        mu.rows.append([e.estimator, f"mu_L(alpha={alpha},c4={c4})", L, e.value, e.stderr, e.samples, e.discards])
    th = spine.c4_threshold(law, 1.0, ns, rng)
    inc = all(b > a for a, b in zip(vals, vals[1:]))
    return Result({"": census, "mu": mu},
                  {"census_rows": len(census.rows), "mu": dict(zip(map(str, Ls), vals)),
                   "c4_threshold": th.value, "c4_threshold_se": th.stderr},
                  {"census_inequality": PASS if holds and census.rows else FAIL,
                   "mu_increasing": PASS if inc else FAIL,
                   "c4_above_threshold": PASS if c4 > th.value + 4 * th.stderr else FAIL})


def exp_rw1d_suite(cfg: Config) -> Result:
    rng = rng_for(cfg, 0, 6)
    grid = range(1, cfg.integer("exit_grid", 20) + 1)
    ns = cfg.integer("n_samples", 2_000)
    _check_budget(cfg, len(grid) ** 2 * ns * 400 * 2, "rw1d-suite")
    lattice = rw1d.simple_lattice()
    exits = Table(["law", "a", "b", "exact", "closed_form", "estimate", "stderr"])
    exact_ok = mc_ok = True
    for a in grid:
        for b in grid:
            res = rw1d.exit_prob(lattice, a, b, ns, rng)
            closed = rw1d.gamblers_ruin(a, b)
            exact_ok &= res.exact == closed
            mc_ok &= res.estimate.within(float(closed), 4) or res.estimate.stderr == 0
            exits.rows.append([lattice.family, a, b, str(res.exact), str(closed), res.estimate.value,
                               res.estimate.stderr])
    sweep = rw1d.exit_band_sweep(rw1d.gaussian(), list(grid), cfg.integer("gaussian_samples", 2_000), rng)
    for (a, b), (v, se) in sweep["cells"].items():
        exits.rows.append(["Gaussian", a, b, "", "", v, se])
    nys = max(abs((a + b) * rw1d.gaussian_exit_nystrom(a, b) - b) for a in grid for b in grid)

    corr = Table(["law", "r", "lambda", "mode", "method", "prob", "stderr", "samples"])
    exps = {}
    for r, lam in [(100, 5), (200, 7), (400, 10)]:
        lp = rw1d.corridor_lattice_dp(r, lam)
        exps[f"{r},{lam}"] = rw1d.corridor_exponent(lp, r, lam)
        corr.rows.append([lattice.family, r, lam, rw1d.NO_FLOOR, "lattice_dp", math.exp(lp), 0.0, 0])
    lo, hi = cfg.numbers("exponent_band", [0.6, 1.6])
    agree = True
    for mode in (rw1d.NO_FLOOR, rw1d.WITH_FLOOR):
        dp = rw1d.corridor_prob(lattice, 40, 6, mode, "lattice_dp")
        mc = rw1d.corridor_prob(lattice, 40, 6, mode, "mc", cfg.integer("corridor_samples", 400_000), rng)
        agree &= mc.within(dp.value, 4)
        corr.rows.append([lattice.family, 40, 6, mode, "lattice_dp", dp.value, 0.0, 0])
        corr.rows.append([lattice.family, 40, 6, mode, "mc", mc.value, mc.stderr, mc.samples])

    fixtures = rw1d.read_fixtures()
    ref = fixtures[rw1d.LADDER_FIXTURE]
    h, dropped = rw1d.ladder_heights(rw1d.gaussian(), cfg.integer("ladder_samples", 200_000), rng)
    lad = mean_estimate(h, discards=dropped)
    lad_z = (lad.value - ref.value) / math.hypot(lad.stderr, ref.stderr)
    tail = rw1d.exit_tail_check(1.0, cfg.numbers("tail_b", [1e2, 1e3, 1e4]), cfg.integer("tail_samples", 100_000), rng)
    gaps = [abs(v - tail["target"].value) for v, _ in tail["rows"].values()]
    last_err = list(tail["rows"].values())[-1][1]
    tail_ok = all(y <= x for x, y in zip(gaps, gaps[1:])) and gaps[-1] <= 4 * (tail["target"].stderr + last_err)
    metrics = {
        "gaussian_exit_band_mc": sweep["band"], "gaussian_exit_band_argmax": list(sweep["argmax"]),
        "gaussian_exit_band_nystrom": nys, "corridor_exponents": exps,
        "ladder_height": {"value": lad.value, "stderr": lad.stderr, "reference": ref.value, "z": lad_z},
        "exit_tail": {"target": tail["target"].value, "target_se": tail["target"].stderr,
                      "b_times_p": {str(b): v for b, (v, _) in tail["rows"].items()}},
    }
    verdicts = {
        "lattice_exit_exact": PASS if exact_ok else FAIL,
        "lattice_exit_mc_within_4se": PASS if mc_ok else FAIL,
        "gaussian_exit_band": PASS if math.isfinite(sweep["band"]) else FAIL,
        "corridor_exponent_band": PASS if all(lo <= v <= hi for v in exps.values()) else FAIL,
        "corridor_dp_vs_mc": PASS if agree else FAIL,
        "ladder_height_vs_fixture": PASS if abs(lad_z) <= 4 else FAIL,
        "exit_tail_identity": PASS if tail_ok else FAIL,
    }
    return Result({"": corr, "exit": exits}, metrics, verdicts)


def exp_extremes(cfg: Config) -> Result:
    n = cfg.integer("n", 1_000_000)
    reps = cfg.integer("replicas", 100)
    alphas = cfg.numbers("alpha_list", [1.0, 2.0])
    _check_budget(cfg, n * reps * len(alphas), "extremes")
    rng = rng_for(cfg, 0, 7)
    t = Table(["alpha", "replica", "ratio"])
    meds = {}
    ok = True
    lo, hi = cfg.numbers("band", [0.85, 1.15])
    for a in alphas:
        res = rw1d.extremes_check(a, n, reps, rng)
        for i, x in enumerate(res.ratios):
            t.rows.append([a, i, x])
        meds[str(a)] = res.median
        ok &= lo <= res.median * a <= hi
    return Result({"": t}, {"median_ratio": meds}, {"median_in_band": PASS if ok else FAIL})


EXPERIMENTS: dict[str, Callable[[Config], Result]] = {
    "verify-law": exp_verify_law,
    "theorem-main": exp_theorem_main,
    "displacement": exp_displacement,
    "gamma-scaling": exp_gamma_scaling,
    "excursion-tail": exp_excursion_tail,
    "spine-check": exp_spine_check,
    "zr-moments": exp_zr_moments,
    "mu-l": exp_mu_l,
    "rw1d-suite": exp_rw1d_suite,
    "extremes": exp_extremes,
}


# ---------------------------------------------------------------------------
# output


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def table_text(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for row in t.rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_outputs(name: str, cfg: Config, result: Result, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    files = []
    for key, t in result.tables.items():
        path = out / (f"{name}.csv" if not key else f"{name}-{key}.csv")
        path.write_text(f"# generated {stamp}\n" + table_text(t))
        files.append(str(path))
    summary = {"schema_version": SCHEMA_VERSION, "experiment": name, "config_digest": cfg.digest(),
               "metrics": _jsonable(result.metrics), "verdicts": result.verdicts}
    (out / f"{name}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run(name: str, cfg: Config, out: Path | None = None) -> Result:
    """Run one experiment; writes artifacts when ``out`` is given."""
    if name not in EXPERIMENTS:
        raise KeyError(name)
    result = EXPERIMENTS[name](cfg)
    if out is not None:
        write_outputs(name, cfg, result, out)
    return result


# ---------------------------------------------------------------------------
# summarize


def read_table(path: Path) -> Table:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader, None)
    if cols is None:
        raise SchemaError(f"{path}: no header")
    return Table(cols, [row for row in reader])


def summarize(paths: Sequence[Path], x: str | None = None, y: str | None = None) -> dict:
    """Medians and IQRs of every numeric column, plus an OLS slope of ``y`` on ``x`` when declared."""
    tables = [read_table(p) for p in paths]
    if not tables:
        raise SchemaError("no input tables")
    cols = tables[0].columns
    for p, t in zip(paths, tables):
        if t.columns != cols:
            raise SchemaError(f"{p}: columns {t.columns} differ from {cols}")
    rows = [r for t in tables for r in t.rows]
    out: dict = {"rows": len(rows), "columns": {}}
    for j, c in enumerate(cols):
        try:
            v = np.array([float(r[j]) for r in rows])
        except ValueError:
            continue
        if v.size == 0:
            continue
        out["columns"][c] = {"median": float(np.median(v)), "q25": float(np.quantile(v, 0.25)),
                             "q75": float(np.quantile(v, 0.75))}
    if x is not None and y is not None:
        if x not in cols or y not in cols:
            raise SchemaError(f"regression columns {x!r}, {y!r} not in {cols}")
        xs = [float(r[cols.index(x)]) for r in rows]
        ys = [float(r[cols.index(y)]) for r in rows]
        slope, intercept = ols(xs, ys)
        out["fit"] = {"x": x, "y": y, "slope": slope, "intercept": intercept}
    return _jsonable(out)


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwlab", description="Biased random walk on Galton-Watson trees: experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        e = sub.add_parser(name)
        e.add_argument("--config", type=Path)
        e.add_argument("--seed", type=int)
        e.add_argument("--replicas", type=int)
        e.add_argument("--out", type=Path, default=Path("gwlab-out"))
        e.add_argument("--assert", dest="assert_", action="store_true", help="exit nonzero on a failed verdict")
        e.add_argument("--refresh-fixtures", action="store_true", help="recompute the frozen reference values")
    s = sub.add_parser("summarize")
    s.add_argument("csv", nargs="+", type=Path)
    s.add_argument("--x")
    s.add_argument("--y")
    s.add_argument("--out", type=Path)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "summarize":
        try:
            res = summarize(args.csv, args.x, args.y)
        except SchemaError as exc:
            print(f"schema error: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        text = json.dumps(res, indent=2, sort_keys=True) + "\n"
        if args.out:
            args.out.write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    try:
        values = parse_config(args.config.read_text()) if args.config else {}
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.replicas is not None:
        values["replicas"] = str(args.replicas)
    cfg = Config(values)
    if args.refresh_fixtures:
        rw1d.refresh_fixtures()
    try:
        result = run(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetError, rw1d.BudgetError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    summary = write_outputs(args.command, cfg, result, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.assert_ and any(v == FAIL for v in result.verdicts.values()):
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
