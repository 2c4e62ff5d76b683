"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

The closed-loop criteria (7 to 10) share one ensemble on the shipped
reference instance: 500 seeds, the learning controller for 200 steps and
both baselines for 100 steps. Expect roughly a quarter of an hour in total.
"""

import contextlib
import time
from fractions import Fraction

import numpy as np
import pytest

from drmpc.harness import (
    ExperimentConfig,
    conditional_violations,
    gap_trend,
    monte_carlo_verify,
    reference_config,
    reference_config_path,
    run_ensemble,
)
from drmpc.learner import AmbiguitySet, ConfidenceVector, LearnerState, Schedule, ambiguity_set, confidence_step
from drmpc.ocp import AugmentedState, OcpOptions, assemble_stochastic, dp_values, solve_ocp
from drmpc.risk import adjusted_alpha, avar, dr_avar, epigraph_program, support_function
from drmpc.solver import Settings, solve, solve_highs
from drmpc.validate import box_grid, validate_lyapunov, validate_terminal_rci

from .conftest import ACCEPTANCE
from .oracles import avar_brute, ball_vertices, dr_avar_brute, random_set, simplex_grid_2, support_brute

REF_1D = reference_config_path().with_name("reference_1d.json")
POLISHED = Settings(polish=True)


@contextlib.contextmanager
def criterion(k: int, title: str):
    """Records ``PASS``/``FAIL`` for criterion ``k``; the body sets ``res["detail"]`` and asserts."""
    res = {"detail": ""}
    try:
        yield res
    except BaseException:
        ACCEPTANCE[k] = f"FAIL  {k:2d}. {title}: {res['detail']}"
        print(ACCEPTANCE[k])
        raise
    ACCEPTANCE[k] = f"PASS  {k:2d}. {title}: {res['detail']}"
    print(ACCEPTANCE[k])


# -- risk evaluators ----------------------------------------------------------------------


def test_1_risk_evaluators_match_oracles():
    with criterion(1, "risk evaluators vs brute force and LP encodings") as res:
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        brute_err = lp_err = 0.0
        for k in range(1000):
            d = 2 + k % 5
            c, r = random_set(rng, d)
            xi = rng.uniform(-1.0, 1.0, d)
            alpha = float(rng.uniform(0.15, 1.0))
            aset = AmbiguitySet(c, r)
            pts = simplex_grid_2(c, r) if d == 2 else ball_vertices(c, r)
            sf, av, dra = support_function(aset, xi), avar(c, alpha, xi), dr_avar(aset, alpha, xi)
            brute_err = max(
                brute_err,
                abs(sf - support_brute(pts, xi)),
                abs(av - avar_brute(c, alpha, xi)),
                abs(dra - dr_avar_brute(pts, alpha, xi)),
            )
            for (prog, i), ref in (
                (epigraph_program(aset, xi), sf),
                (epigraph_program(AmbiguitySet.singleton(c), xi, alpha), av),
                (epigraph_program(aset, xi, alpha), dra),
            ):
                lp_err = max(lp_err, abs(solve(prog, POLISHED).x[i] - ref), abs(solve_highs(prog).x[i] - ref))
        elapsed = time.perf_counter() - start
        res["detail"] = f"oracle err {brute_err:.2e} (<=1e-3), LP err {lp_err:.2e} (<=1e-6), {elapsed:.0f}s (<60s)"
        assert brute_err <= 1e-3 and lp_err <= 1e-6 and elapsed < 60


def test_2_coherence_axioms():
    with criterion(2, "coherence axioms") as res:
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(10_000):
            d = int(rng.integers(2, 7))
            c, r = random_set(rng, d)
            aset = AmbiguitySet(c, r)
            alpha = float(rng.uniform(0.01, 1.0))
            x, y = rng.uniform(-5, 5, (2, d))
            shift, k, lam = rng.uniform(-5, 5), rng.uniform(0, 5), rng.uniform()
            hi = np.maximum(x, y)
            for f in (
                lambda v: support_function(aset, v),
                lambda v: avar(c, alpha, v),
                lambda v: dr_avar(aset, alpha, v),
            ):
                fx, fy = f(x), f(y)
                worst = max(
                    worst,
                    fx - f(hi),
                    abs(f(x + shift) - fx - shift),
                    abs(f(k * x) - k * fx),
                    f(lam * x + (1 - lam) * y) - lam * fx - (1 - lam) * fy,
                )
        res["detail"] = f"largest violation {worst:.1e} over 10^4 inputs (<=1e-9)"
        assert worst <= 1e-9


def test_3_tightened_level_and_implication():
    with criterion(3, "tightened level and violation implication") as res:
        exact = adjusted_alpha(Fraction(1, 10), Fraction(1, 20))
        rng = np.random.default_rng(303)
        counter = 0
        for _ in range(10_000):
            d = int(rng.integers(2, 7))
            c, r = random_set(rng, d)
            q = rng.dirichlet(np.ones(d))
            gap = np.abs(q - c).sum()
            p = c + (min(1.0, r / gap) if gap > 0 else 0.0) * rng.uniform() * (q - c)
            aset = AmbiguitySet(c, r)
            assert aset.contains(p, tol=1e-12)
            alpha = float(rng.uniform(0.01, 0.5))
            beta = float(rng.uniform(0.0, alpha))
            ahat = adjusted_alpha(alpha, beta)
            xi = rng.normal(size=d)
            # shift so the premise holds with a random margin
            xi = xi - dr_avar(aset, ahat, xi) - rng.uniform(0.0, 0.1)
            assert dr_avar(aset, ahat, xi) <= 1e-12
            violation = p[xi > 1e-9].sum()
            counter += not (violation <= ahat + 1e-12 and ahat <= alpha)
        res["detail"] = f"adjusted_alpha(1/10, 1/20) = {exact}; {counter} counterexamples in 10^4 trials"
        assert exact == Fraction(1, 19) and isinstance(exact, Fraction)
        assert counter == 0


# -- learner -----------------------------------------------------------------------------


def test_4_ambiguity_set_coverage():
    with criterion(4, "ambiguity set coverage") as res:
        rng = np.random.default_rng(404)
        p = np.array([0.5, 0.3, 0.2])
        M = 10_000
        worst_margin, rows = np.inf, []
        for beta in (0.05, 0.2):
            sigma = np.sqrt(beta * (1 - beta) / M)
            for n in (10, 100, 1000):
                counts = np.zeros((3, 3), dtype=int)
                hits = 0
                for draw in rng.multinomial(n, p, size=M):
                    counts[1] = draw
                    hits += ambiguity_set(LearnerState(counts), 1, beta).contains(p)
                freq = hits / M
                worst_margin = min(worst_margin, freq - (1 - beta - 3 * sigma))
                rows.append(f"b={beta},N={n}:{freq:.4f}")
        res["detail"] = " ".join(rows)
        assert worst_margin >= 0


def test_5_confidence_dynamics():
    with criterion(5, "confidence recursion and partial sums") as res:
        scheds = [Schedule(0.05, 2.0), Schedule(0.1, 1.5), Schedule(1.0, 3.0), Schedule(0.2, 1.1)]
        beta = ConfidenceVector.initial(scheds)
        rel, sums, excess = 0.0, np.zeros(len(scheds)), -np.inf
        for t in range(1001):
            closed = np.array([s.closed_form(t) for s in scheds])
            rel = max(rel, float(np.max(np.abs(np.asarray(beta.values) - closed) / closed)))
            sums += beta.values
            excess = max(excess, float(np.max(sums - [s.sum_bound() for s in scheds])))
            beta = confidence_step(beta)
        res["detail"] = f"max relative error {rel:.1e} (<=1e-10), partial sums below bound by {-excess:.3g}"
        assert rel <= 1e-10 and excess <= 0


# -- optimal control problem ------------------------------------------------------------


def test_6_lp_matches_dynamic_programming():
    with criterion(6, "LP vs grid dynamic programming") as res:
        cfg = ExperimentConfig.load(REF_1D)
        z0 = cfg.initial_state()
        rng = np.random.default_rng(606)
        axes, u = [np.linspace(-3, 3, 5001)], np.linspace(-2, 2, 3001)
        start = time.perf_counter()
        err = 0.0
        for w in range(cfg.model.d):
            xs = rng.uniform(-1.5, 1.5, (10, 1))
            z = AugmentedState(z0.x, z0.s, z0.beta, w)
            dp = dp_values(z, cfg.model, 2, axes, u, xs)
            for x, v in zip(xs, dp):
                lp = solve_ocp(AugmentedState(x, z0.s, z0.beta, w), cfg.model, 2).value
                err = max(err, abs(lp - v))
        elapsed = time.perf_counter() - start
        res["detail"] = f"max |LP - DP| {err:.1e} at 20 states (<=2e-3), {elapsed:.0f}s (<120s)"
        assert err <= 2e-3 and elapsed < 120


# -- closed loop -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cfg():
    return reference_config()


@pytest.fixture(scope="module")
def ensemble(cfg):
    return {
        "dr": run_ensemble(cfg, "dr", cfg.seeds, T=200),
        "nominal": run_ensemble(cfg, "nominal", cfg.seeds, T=100),
        "robust": run_ensemble(cfg, "robust", cfg.seeds, T=100),
    }


def test_7_recursive_feasibility(cfg, ensemble):
    with criterion(7, "recursive feasibility") as res:
        rci = validate_terminal_rci(cfg.model)
        logs = ensemble["dr"]
        bad = [lg.seed for lg in logs if lg.failed]
        steps = sum(len(lg.records) for lg in logs)
        res["detail"] = (
            f"terminal set certified={rci.certified}; {len(bad)} infeasible runs of {len(logs)} ({steps} solves)"
        )
        assert rci.certified
        assert len(logs) == 500 and all(len(lg.records) == 201 for lg in logs if not lg.failed)
        assert not bad


def test_8_chance_constraints(cfg, ensemble):
    with criterion(8, "conditional chance-constraint satisfaction") as res:
        alphas = np.array(cfg.model.alphas)
        worst = np.zeros(len(alphas))
        for lg in ensemble["dr"]:
            cv = conditional_violations(lg, cfg.kernel)
            worst = np.maximum(worst, cv.max(axis=0))
        res["detail"] = f"max conditional violation {worst.tolist()} vs alpha {alphas.tolist()}"
        assert np.all(worst <= alphas)


@pytest.fixture(scope="module")
def report(cfg, ensemble):
    lyap = validate_lyapunov(
        cfg.model, state_box=cfg.state_box, horizon=cfg.horizon, value_grid=box_grid(cfg.state_box, 21)
    )
    return monte_carlo_verify(cfg, lyapunov=lyap, logs=ensemble)


def test_9_mean_square_stability(report):
    with criterion(9, "mean-square decay and summation bound") as res:
        dr = report.variants["dr"]
        b = report.bound
        res["detail"] = (
            f"E|x_100|^2/E|x_0|^2 = {dr.decay_ratio:.1e} (<=1e-3), trend {dr.decay_trend:.2f}; "
            f"bound {b['lhs']:.3g} <= {b['rhs']:.3g}"
        )
        assert report.checks["dr: mean-square decay"]
        assert report.checks["dr: stability summation bound"]


def test_10_conservatism_ordering(cfg, report):
    with criterion(10, "cost ordering and shrinking gap") as res:
        order = report.ordering
        costs = {v: report.variants[v].mean_cumulative_cost for v in ("nominal", "dr", "robust")}
        gap = gap_trend(cfg, [0, 5, 10, 20, 50, 100, 200], range(50))
        res["detail"] = (
            "mean costs "
            + ", ".join(f"{v} {c:.4f}" for v, c in costs.items())
            + "; p-values "
            + ", ".join(f"{k} {o['p_value']:.1e}" for k, o in order.items())
            + f"; gap {gap['mean_gap'][0]:.3f} -> {gap['mean_gap'][-1]:.3f}, spearman {gap['spearman']:.2f}"
        )
        assert order["dr-nominal"]["holds"] and order["robust-dr"]["holds"]
        assert gap["spearman"] < 0 and gap["mean_gap"][-1] < gap["mean_gap"][0]


# -- limits ------------------------------------------------------------------------------


@pytest.mark.filterwarnings("ignore::drmpc.learner.RobustFallbackWarning")
def test_11_robust_and_nominal_limits():
    with criterion(11, "robust and nominal limits") as res:
        rng = np.random.default_rng(1111)
        err_sup = err_avar = 0.0
        for _ in range(1000):
            d = int(rng.integers(2, 7))
            c = rng.dirichlet(np.ones(d))
            xi = rng.normal(size=d)
            err_sup = max(err_sup, abs(support_function(AmbiguitySet(c, 2.0), xi) - xi.max()))
            err_avar = max(err_avar, abs(dr_avar(AmbiguitySet(c, float(rng.uniform(0, 2))), 0.0, xi) - xi.max()))

        # zero radius and zero confidence with the true rows as estimates: the
        # learning scheme must reduce to the expectation problem under the kernel
        err_nom = 0.0
        for cfg, counts in (
            (reference_config(), [[95, 5], [40, 60]]),
            (ExperimentConfig.load(REF_1D), [[70, 30], [40, 60]]),
        ):
            assert np.allclose(np.asarray(counts) / np.sum(counts, axis=1, keepdims=True), cfg.kernel.rows)
            ng = len(cfg.model.constraints)
            beta = ConfidenceVector.initial([Schedule(0.0, 2.0)] * (ng + 1))
            exact = OcpOptions("dr", predict_counts=False, radius_scale=0.0)
            nominal = OcpOptions("nominal", kernel=cfg.kernel)
            pts = 0.5 * box_grid(cfg.state_box, 5)
            for x in pts:
                for w in range(cfg.model.d):
                    z = AugmentedState(x, LearnerState(np.asarray(counts)), beta, w)
                    ref = solve_highs(assemble_stochastic(x, w, cfg.model, cfg.kernel, cfg.horizon).program)
                    if not ref.optimal:
                        continue
                    for opts in (exact, nominal):
                        v = solve_ocp(z, cfg.model, cfg.horizon, opts).value
                        err_nom = max(err_nom, abs(v - ref.objective))
        res["detail"] = (
            f"r=2: {err_sup:.0e}; alpha_hat=0: {err_avar:.0e}; r=0 with alpha_hat=alpha: {err_nom:.1e} (<=1e-7)"
        )
        assert err_sup <= 1e-12 and err_avar <= 1e-12 and err_nom <= 1e-7
