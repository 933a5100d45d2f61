import itertools
import math

import numpy as np
import pytest

from oracles import two_point_tree_enumeration
from gwlab import spine
from gwlab.environment import make_law

TP = make_law("TwoPoint")
FG2 = make_law("FixedGaussian", b=2)
PG = make_law("PoissonGaussian", lam=2.0)


def two_point_second_moment(law):
    """``E[W_1^2]`` for two i.i.d. children, by listing the four configurations."""
    a, p = law.a, law.p
    total = 0.0
    for x, y in itertools.product((a, -a), repeat=2):
        pr = (p if x > 0 else 1 - p) * (p if y > 0 else 1 - p)
        total += pr * (math.exp(-x) + math.exp(-y)) ** 2
    return total


def test_q_table_is_a_probability_law():
    table = spine.two_point_q_table(TP)
    assert sum(t[2] for t in table) == pytest.approx(1.0, abs=1e-14)
    assert all(t[2] >= 0 for t in table)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exact_path_sum_against_full_tree_enumeration(n):
    rng = np.random.default_rng(n)
    table = rng.random(1 << n)
    exact = spine.two_point_path_sum(TP, n, table)
    assert exact == pytest.approx(two_point_tree_enumeration(TP.a, TP.p, n, table), rel=1e-12)


def test_path_sum_argument_checks():
    with pytest.raises(ValueError):
        spine.two_point_path_sum(FG2, 2, [1.0] * 4)
    with pytest.raises(ValueError):
        spine.two_point_path_sum(TP, 2, [1.0] * 3)


def test_sign_index():
    a = TP.a
    paths = np.array([[a, 2 * a, a], [-a, 0.0, a]])
    assert list(spine.sign_index(paths)) == [0b011, 0b110]


@pytest.mark.parametrize("law,m", [(TP, 2.0), (FG2, 2.0), (PG, 2.0)])
@pytest.mark.parametrize("mode", [spine.EXACT_MODE, spine.REWEIGHT_MODE])
def test_population_size_by_many_to_one(law, m, mode):
    est = spine.many_to_one(law, 3, None, 100_000, np.random.default_rng(31), mode=mode)
    assert abs(est.z_score(m ** 3)) <= 4


@pytest.mark.parametrize("law", [TP, FG2, PG])
def test_additive_martingale_is_exact_under_q(law):
    est = spine.many_to_one(law, 5, n_samples=1000, rng=np.random.default_rng(0), log_g=lambda S: -S[:, -1])
    assert est.value == pytest.approx(1.0, abs=1e-12) and est.stderr < 1e-12


@pytest.mark.parametrize("law", [TP, FG2, PG])
def test_spine_increments_are_centred(law):
    ds = spine.q_increments(law, np.random.default_rng(1), 200_000)
    assert abs(ds.mean()) <= 4 * ds.std() / math.sqrt(ds.size)


def test_exact_and_reweight_steps_share_a_law():
    rng = np.random.default_rng(2)
    ex = spine.sample_spines(FG2, 1, 100_000, rng, spine.EXACT_MODE)
    rw = spine.sample_spines(FG2, 1, 100_000, rng, spine.REWEIGHT_MODE)
    w = np.exp(rw.log_weight)
    m_ex = ex.dS[:, 0].mean()
    m_rw = np.sum(w * rw.dS[:, 0]) / w.sum()
    assert abs(m_ex - m_rw) < 0.03
    e_ex = ex.eta["exp_neg"][:, 0].mean()
    e_rw = np.sum(w * rw.eta["exp_neg"][:, 0]) / w.sum()
    assert e_ex == pytest.approx(e_rw, rel=0.05)


def test_companion_sum_includes_the_spine_child():
    step = spine.sample_spine_step(TP, np.random.default_rng(3))
    sp = spine.sample_spines(TP, 1, 1, np.random.default_rng(3))
    assert sp.eta["exp_neg"][0, 0] == pytest.approx(math.exp(-step.dS) + sum(math.exp(-v) for v in step.siblings))


def test_c4_threshold_against_closed_form():
    est = spine.c4_threshold(TP, 1.0, 200_000, np.random.default_rng(4))
    assert abs(est.z_score(math.log1p(two_point_second_moment(TP)))) <= 4


@pytest.mark.parametrize("law", [TP, FG2])
def test_line_telescoping_is_exact(law):
    est = spine.many_to_one_line(law, 3.0, None, 5_000, np.random.default_rng(5), log_g=lambda s: -s,
                                 terminal_only=True, step_cap=100_000, discard_policy="drop")
    assert est.value == 1.0 and est.stderr == 0.0


def test_line_path_functional_agrees_with_terminal_form():
    a = spine.many_to_one_line(TP, 2.0, lambda p: np.exp(-p[-1]) * (p.max() < 10), 5_000,
                               np.random.default_rng(6), step_cap=100_000, discard_policy="drop")
    assert a.value == pytest.approx(1.0, abs=1e-12)
    z = spine.many_to_one_line(TP, 2.0, lambda p: np.exp(-p[-1]), 5_000, np.random.default_rng(6),
                               step_cap=100_000, discard_policy="zero")
    assert z.value == pytest.approx(1.0 - z.discards / 5_000, abs=1e-12)


def test_overshoot_exponential_moment_is_bounded_in_the_level():
    est = spine.overshoot_moment(TP, 0.5, [1.0, 4.0, 16.0, 64.0], 20_000, np.random.default_rng(7),
                                   step_cap=10_000)
    vals = [e.value for e in est.values()]
    assert max(vals) / min(vals) < 1.5
    assert spine.overshoot_moment(TP, 0.0, [5.0])[5.0].value == 1.0


def test_martingale_mean_is_one():
    chk = spine.martingale_check(TP, 5, 20_000, np.random.default_rng(8))
    assert abs(chk.estimate.z_score(1.0)) <= 4
    assert spine.martingale_check(TP, 0).estimate.value == 1.0


def test_mu_without_filters_counts_the_generation():
    est = spine.mu_L(TP, 4, 0.45, 1.5, 100_000, np.random.default_rng(9), indicators=False)
    assert abs(est.z_score(16.0)) <= 4
    full = spine.mu_L(TP, 4, 0.45, 1.5, 100_000, np.random.default_rng(9))
    assert full.value <= est.value


@pytest.mark.parametrize("call", [
    lambda: spine.sample_spine_step(TP, np.random.default_rng(), "bogus"),
    lambda: spine.sample_spines(TP, 2, 3, np.random.default_rng(), "bogus"),
    lambda: spine.many_to_one(TP, 0),
    lambda: spine.run_to_level(TP, 0.0, 10, np.random.default_rng()),
    lambda: spine.many_to_one_line(TP, 1.0, discard_policy="keep"),
    lambda: spine.overshoot_moment(TP, -1.0, [1.0]),
    lambda: spine.mu_L(TP, 4, 0.6, 1.5),
    lambda: spine.martingale_check(TP, -1),
])
def test_argument_errors(call):
    with pytest.raises(ValueError):
        call()


def test_step_cap_discards_are_counted():
    zero = spine.many_to_one_line(FG2, 50.0, None, 200, np.random.default_rng(10), terminal_only=True,
                                  step_cap=5, discard_policy="zero")
    drop = spine.many_to_one_line(FG2, 50.0, None, 200, np.random.default_rng(10), terminal_only=True,
                                  step_cap=5, discard_policy="drop")
    assert zero.discards == drop.discards > 0


def _weighted_first_passage(p, level, depth):
    """``Σ_{n ≤ depth} 2^n P(first passage of the ±1 walk to level at step n)`` by forward recursion."""
    mass, total = {0: 1.0}, 0.0
    for _ in range(depth):
        nxt = {}
        for s, m in mass.items():
            for step, f in ((1, 2 * p), (-1, 2 * (1 - p))):
                if s + step >= level:
                    total += m * f
                else:
                    nxt[s + step] = nxt.get(s + step, 0.0) + m * f
        mass = nxt
    return total


def test_first_passage_count_on_the_lattice():
    # an off-lattice level avoids round-off in deciding whether 3 steps of +a reach 3a
    a = TP.a
    drop = spine.many_to_one_line(TP, 2.5 * a, None, 3_000, np.random.default_rng(12), terminal_only=True,
                                  step_cap=100_000, discard_policy="drop")
    assert drop.value == pytest.approx(math.exp(3 * a), rel=1e-12)
    zero = spine.many_to_one_line(TP, 2.5 * a, None, 3_000, np.random.default_rng(12), terminal_only=True,
                                  step_cap=40, discard_policy="zero")
    capped = _weighted_first_passage(TP.p, 3, 40)
    assert abs(zero.z_score(capped)) <= 4
    # the weighted series is critical, so a depth-40 truncation still misses a third of the mass
    assert capped < 0.7 * math.exp(3 * a)
