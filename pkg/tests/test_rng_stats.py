import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwlab import rng as krng
from gwlab.stats import (EXACT, Estimate, RunningMoments, exact, log_sum_exp, mean_estimate, ols,
                         self_normalized)

keys = st.integers(min_value=0, max_value=2 ** 64 - 1)


@given(keys, st.integers(0, 50))
def test_uniform_in_open_unit_interval(key, slot):
    u = krng.uniform(key, slot)
    assert 0.0 < u < 1.0


@given(st.lists(keys, min_size=1, max_size=20), st.integers(0, 10))
def test_array_twins_agree_with_scalars(ks, slot):
    arr = np.array(ks, dtype=np.uint64)
    assert krng.uniform_array(arr, slot).tolist() == [krng.uniform(k, slot) for k in ks]
    assert krng.child_key_array(arr, slot).tolist() == [krng.child_key(k, slot) for k in ks]


def test_keys_separate_seeds_replicas_and_children():
    roots = {krng.root_key(s, r) for s in range(20) for r in range(20)}
    assert len(roots) == 400
    k = krng.root_key(0)
    assert len({krng.child_key(k, i) for i in range(1000)}) == 1000


def test_uniforms_look_uniform():
    k = krng.root_key(7)
    kids = krng.child_key_array(np.full(200_000, k, dtype=np.uint64), np.arange(200_000, dtype=np.uint64))
    u = krng.uniform_array(kids, 0)
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / u.size)
    hist, _ = np.histogram(u, bins=10, range=(0, 1))
    assert hist.min() > 19_000


def test_estimate_validation_and_z():
    with pytest.raises(ValueError):
        Estimate(1.0, -1.0, 10)
    with pytest.raises(ValueError):
        Estimate(1.0, 0.1, 10, EXACT)
    e = Estimate(1.0, 0.5, 10, discards=10)
    assert e.z_score(0.0) == 2.0
    assert e.within(0.0, 2.0) and not e.within(0.0, 1.9)
    assert e.discard_fraction == 0.5
    assert exact(3).z_score(3.0) == 0.0
    assert exact(3).z_score(2.0) == math.inf


def test_mean_estimate_and_running_moments_agree():
    x = np.random.default_rng(0).normal(size=1001)
    a = mean_estimate(x)
    rm = RunningMoments()
    rm.push_array(x[:500])
    other = RunningMoments()
    for v in x[500:]:
        other.push(float(v))
    b = rm.merge(other).estimate()
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert a.stderr == pytest.approx(b.stderr, rel=1e-10)
    assert math.isnan(mean_estimate(np.array([])).value)


def test_self_normalized_reduces_to_mean_with_equal_weights():
    x = np.arange(10.0)
    e = self_normalized(x, np.ones(10))
    assert e.value == pytest.approx(4.5)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=30))
def test_log_sum_exp_matches_direct_sum(vals):
    top = max(vals)
    direct = top + math.log(sum(math.exp(v - top) for v in vals))
    assert log_sum_exp(vals) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_log_sum_exp_edge_cases():
    assert log_sum_exp([]) == -math.inf
    assert log_sum_exp([-math.inf, -math.inf]) == -math.inf
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0))


@settings(max_examples=50)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_ols_recovers_exact_line(slope, intercept):
    x = np.linspace(-3, 5, 9)
    s, c = ols(x, slope * x + intercept)
    assert s == pytest.approx(slope, abs=1e-12)
    assert c == pytest.approx(intercept, abs=1e-12)


def test_ols_rejects_degenerate_input():
    with pytest.raises(ValueError):
        ols([1.0], [2.0])
    with pytest.raises(ValueError):
        ols([1.0, 1.0], [2.0, 3.0])
