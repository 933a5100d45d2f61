import pytest

from gwlab import quenched, sweep
from gwlab.environment import TreeArena, make_law

LAWS = [make_law("TwoPoint"), make_law("FixedGaussian", b=2), make_law("PoissonGaussian", lam=2.0)]


@pytest.mark.parametrize("li", range(3))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sweep_matches_arena_solver(li, seed):
    law = LAWS[li]
    for r, cap in [(2.0, 50), (4.0, 30), (5.0, 12)]:
        ref = quenched.gamma_bracket(TreeArena(law, seed, 3), r, cap)
        got = sweep.gamma_sweep(law, seed, 3, r, cap)
        assert got.lower == pytest.approx(ref.lower, rel=1e-12, abs=1e-300)
        assert got.upper == pytest.approx(ref.upper, rel=1e-12, abs=1e-300)
        assert got.line_size == ref.line_size and got.truncated == ref.truncated


@pytest.mark.parametrize("seed", [4, 5])
def test_chunked_sweep_agrees_with_a_single_pass(seed):
    law = LAWS[0]
    whole = sweep.gamma_sweep(law, seed, 0, 7.0, 60)
    chunked = sweep.gamma_sweep(law, seed, 0, 7.0, 60, budget=200)
    assert chunked.lower == pytest.approx(whole.lower, rel=1e-12)
    assert chunked.upper == pytest.approx(whole.upper, rel=1e-12)
    assert chunked.line_size == whole.line_size


@pytest.mark.skipif(not sweep.compiled_available(LAWS[0]), reason="numba not installed")
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_compiled_kernel_matches_sweep(seed):
    law = LAWS[0]
    for r, cap in [(3.0, 40), (6.0, 80), (8.0, 20)]:
        ref = sweep.gamma_sweep(law, seed, 1, r, cap)
        got = sweep.gamma_depth_first(law, seed, 1, r, cap)
        assert got.lower == pytest.approx(ref.lower, rel=1e-12, abs=1e-300)
        assert got.upper == pytest.approx(ref.upper, rel=1e-12, abs=1e-300)
        assert got.line_size == ref.line_size


def test_engines_through_the_curve_interface():
    arena = TreeArena(LAWS[1], 8)
    a = quenched.gamma_r_curve(arena, [1.0, 2.0, 3.0], 40, engine="arena")
    b = quenched.gamma_r_curve(arena, [1.0, 2.0, 3.0], 40, engine="sweep")
    for p, q in zip(a.points, b.points):
        assert p.lower == pytest.approx(q.lower, rel=1e-12)
    with pytest.raises(ValueError, match="engine"):
        quenched.gamma_r_curve(arena, [1.0], engine="gpu")


def test_compiled_kernel_refuses_other_laws():
    with pytest.raises(ValueError):
        sweep.gamma_depth_first(LAWS[1], 0, 0, 2.0)
