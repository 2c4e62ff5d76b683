from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drmpc.learner import AmbiguitySet, RobustFallbackWarning
from drmpc.risk import (
    RiskSpec,
    adjusted_alpha,
    avar,
    dr_avar,
    dr_avar_batch,
    epigraph_program,
    support_function,
    support_function_batch,
    worst_case_distribution,
)
from drmpc.solver import Settings, solve, solve_highs

from .oracles import avar_brute, ball_vertices, dr_avar_brute, simplex_grid_2, support_brute
from .strategies import ambiguity_sets, positive_levels, sets_and_vectors

HALF = np.array([0.5, 0.5])
EXACT = Settings(polish=True)


def test_support_function_example():
    a = AmbiguitySet(HALF, 0.2)
    oracle = support_brute(simplex_grid_2(HALF, 0.2), [1.0, 0.0])
    assert oracle == pytest.approx(0.6, abs=1e-4)
    assert support_function(a, [1.0, 0.0]) == pytest.approx(0.6, abs=1e-12)


def test_support_function_singleton_and_simplex():
    p = np.array([0.2, 0.3, 0.5])
    xi = np.array([3.0, 1.0, 2.0])
    assert support_function(AmbiguitySet(p, 0.0), xi) == pytest.approx(p @ xi)
    assert support_function(AmbiguitySet(p, 2.0), xi) == 3.0


def test_avar_examples():
    assert avar(HALF, 1.0, [1.0, 0.0]) == pytest.approx(0.5)
    assert avar_brute(HALF, 0.8, [1.0, 0.0]) == pytest.approx(0.625, abs=1e-4)
    assert avar(HALF, 0.8, [1.0, 0.0]) == pytest.approx(0.625, abs=1e-12)
    assert avar(np.array([0.99, 0.01]), 0.0, [1.0, 0.0]) == 1.0


def test_dr_avar_examples():
    a = AmbiguitySet(HALF, 0.2)
    oracle = dr_avar_brute(simplex_grid_2(HALF, 0.2), 0.8, [1.0, 0.0])
    assert oracle == pytest.approx(0.75, abs=1e-4)
    assert dr_avar(a, 0.8, [1.0, 0.0]) == pytest.approx(0.75, abs=1e-12)


def test_dr_avar_full_simplex_is_max():
    a = AmbiguitySet(np.array([0.2, 0.3, 0.5]), 2.0)
    xi = np.array([0.3, -1.0, 0.7])
    assert dr_avar(a, 0.4, xi) == 0.7
    assert dr_avar_brute(ball_vertices(a.center, 2.0), 0.4, xi) == pytest.approx(0.7, abs=1e-4)


def test_adjusted_alpha_examples():
    assert adjusted_alpha(Fraction(1, 10), Fraction(1, 20)) == Fraction(1, 19)
    assert adjusted_alpha(0.1, 0.05) == pytest.approx(0.0526316, abs=1e-7)
    assert adjusted_alpha(0.3, 0.0) == 0.3
    assert adjusted_alpha(0.1, 0.1) == 0.0


def test_adjusted_alpha_fallback_and_errors():
    with pytest.warns(RobustFallbackWarning):
        assert adjusted_alpha(0.05, 0.1) == 0.0
    with pytest.raises(ValueError):
        adjusted_alpha(0.1, 1.0)
    with pytest.raises(ValueError):
        adjusted_alpha(1.5, 0.1)


def test_risk_spec_dispatch_and_validation():
    a = AmbiguitySet(HALF, 0.2)
    xi = [1.0, 0.0]
    assert RiskSpec("expectation", aset=a)(xi) == support_function(a, xi)
    assert RiskSpec("avar", alpha=0.8, refdist=HALF)(xi) == avar(HALF, 0.8, xi)
    assert RiskSpec("dravar", alpha=0.8, aset=a)(xi) == dr_avar(a, 0.8, xi)
    with pytest.raises(ValueError):
        RiskSpec("dravar", alpha=0.8)
    with pytest.raises(ValueError):
        RiskSpec("expectation", aset=a, alpha=0.3)
    with pytest.raises(ValueError):
        RiskSpec("cvar", aset=a)


@pytest.mark.parametrize("backend", ["admm", "highs"])
def test_epigraph_degenerate_blocks(backend):
    run = (lambda p: solve(p, EXACT)) if backend == "admm" else solve_highs
    p = np.array([0.2, 0.8])
    xi = np.array([2.0, -1.0])
    prog, i = epigraph_program(AmbiguitySet(p, 0.0), xi)
    assert run(prog).x[i] == pytest.approx(p @ xi, abs=1e-7)
    prog, i = epigraph_program(AmbiguitySet(p, 2.0), xi, alpha_hat=0.0)
    # pure robust rows, one per mode
    assert prog.m == 2
    assert run(prog).x[i] == pytest.approx(2.0, abs=1e-7)


# -- properties --------------------------------------------------------------------


@given(sets_and_vectors())
def test_worst_case_distribution_is_member_and_optimal(args):
    a, xi = args
    p = worst_case_distribution(a, xi)
    assert a.contains(p, tol=1e-9)
    assert p @ xi == pytest.approx(support_function(a, xi), abs=1e-9)
    assert p @ xi >= a.center @ xi - 1e-9


@given(sets_and_vectors())
def test_support_between_mean_and_max(args):
    a, xi = args
    v = support_function(a, xi)
    assert a.center @ xi - 1e-9 <= v <= xi.max() + 1e-9


@given(sets_and_vectors(), positive_levels)
def test_dominance_chain(args, alpha):
    """avar under the center <= dr_avar <= max, and expectation <= dr_avar."""
    a, xi = args
    v = dr_avar(a, alpha, xi)
    assert avar(a.center, alpha, xi) <= v + 1e-9
    assert support_function(a, xi) <= v + 1e-9
    assert v <= xi.max() + 1e-9


@given(sets_and_vectors(), positive_levels, positive_levels)
def test_dr_avar_monotone_in_level(args, a1, a2):
    a, xi = args
    lo, hi = sorted((a1, a2))
    assert dr_avar(a, hi, xi) <= dr_avar(a, lo, xi) + 1e-9


@given(sets_and_vectors(), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_support_monotone_in_radius(args, r1, r2):
    a, xi = args
    lo, hi = sorted((r1, r2))
    assert support_function(AmbiguitySet(a.center, lo), xi) <= support_function(AmbiguitySet(a.center, hi), xi) + 1e-9


@given(sets_and_vectors(), positive_levels)
def test_singleton_dr_avar_is_avar(args, alpha):
    a, xi = args
    s = AmbiguitySet(a.center, 0.0)
    assert dr_avar(s, alpha, xi) == pytest.approx(avar(a.center, alpha, xi), abs=1e-9)


@given(sets_and_vectors(), positive_levels)
def test_avar_level_one_is_mean(args, _):
    a, xi = args
    assert avar(a.center, 1.0, xi) == pytest.approx(a.center @ xi, abs=1e-9)


@given(sets_and_vectors(), positive_levels)
def test_batch_evaluators_match_scalar(args, alpha):
    a, xi = args
    rng = np.random.default_rng(abs(hash(xi.tobytes())) % 2**32)
    block = np.vstack([xi, rng.uniform(-5, 5, (3, a.d))])
    np.testing.assert_allclose(support_function_batch(a, block), [support_function(a, x) for x in block], atol=1e-9)
    np.testing.assert_allclose(dr_avar_batch(a, alpha, block), [dr_avar(a, alpha, x) for x in block], atol=1e-9)


@given(ambiguity_sets())
def test_batch_support_propagates_infinity(a):
    xi = np.zeros(a.d)
    xi[-1] = np.inf
    v = support_function_batch(a, xi[None])[0]
    reachable = a.radius > 0 or a.center[-1] > 0
    assert (v == np.inf) == reachable


@given(sets_and_vectors(), st.one_of(st.none(), positive_levels))
def test_epigraph_lp_matches_evaluator(args, alpha):
    a, xi = args
    prog, i = epigraph_program(a, xi, alpha)
    ref = support_function(a, xi) if alpha is None else dr_avar(a, alpha, xi)
    scale = max(1.0, np.abs(xi).max())
    assert solve(prog, EXACT).x[i] == pytest.approx(ref, abs=1e-6 * scale)
    assert solve_highs(prog).x[i] == pytest.approx(ref, abs=1e-7 * scale)


@given(st.integers(3, 5), st.integers(0, 10**6))
def test_support_matches_vertex_oracle(d, seed):
    rng = np.random.default_rng(seed)
    c = rng.dirichlet(np.ones(d))
    r = float(rng.uniform(0.01, 2.0))
    xi = rng.uniform(-1, 1, d)
    V = ball_vertices(c, r)
    assert support_function(AmbiguitySet(c, r), xi) == pytest.approx(support_brute(V, xi), abs=1e-6)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0, exclude_max=True))
def test_adjusted_alpha_in_range(alpha, beta):
    if beta > alpha:
        with pytest.warns(RobustFallbackWarning):
            assert adjusted_alpha(alpha, beta) == 0
    else:
        v = adjusted_alpha(alpha, beta)
        assert 0 <= v <= alpha + 1e-15
        assert (1 - beta) * v + beta == pytest.approx(alpha, abs=1e-12)


def _evaluators(a, alpha):
    return {
        "support": lambda x: support_function(a, x),
        "avar": lambda x: avar(a.center, alpha, x),
        "dr_avar": lambda x: dr_avar(a, alpha, x),
    }


@given(sets_and_vectors(n=2), positive_levels, st.floats(-5, 5), st.floats(0.0, 5.0), st.floats(0.0, 1.0))
def test_coherence(args, alpha, c, k, lam):
    a, x, y = args
    hi = np.maximum(x, y)
    for name, f in _evaluators(a, alpha).items():
        assert f(x) <= f(hi) + 1e-9, name
        assert f(x + c) == pytest.approx(f(x) + c, abs=1e-9), name
        assert f(k * x) == pytest.approx(k * f(x), abs=1e-9 * max(1.0, k)), name
        assert f(lam * x + (1 - lam) * y) <= lam * f(x) + (1 - lam) * f(y) + 1e-9, name
