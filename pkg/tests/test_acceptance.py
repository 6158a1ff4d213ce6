"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line in the terminal summary through the
``criterion`` fixture.  Tolerances and sizes are the ones the criteria fix.
"""

import math
import time

import numpy as np
import pytest

from resolvex.estimator import (
    FEASIBLE,
    STRICT,
    baseline_expectation,
    readout,
    run_pipeline,
    select_parameters,
)
from resolvex.matgen import QERE, QEUE, JordanSpec, generate, input_state, validate_exclusion
from resolvex.paramcurve import check_conditions, get_family, radial_search
from resolvex.resolvent import build_system, resolvent_state
from resolvex.suites import run_suite


def _timed(fn, *args, **kw):
    start = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def qeue_suite():
    return _timed(run_suite, "qeue-lemmas", 50, 0)


@pytest.fixture(scope="module")
def qere_suite():
    return _timed(run_suite, "qere-lemmas", 50, 0)


def _split(rows):
    disc = [r for r in rows if "integral" in r.quantity]
    lemma = [r for r in rows if "integral" not in r.quantity]
    return lemma, disc


def test_criterion_01_qeue_lemmas(qeue_suite, criterion):
    res, elapsed = qeue_suite
    lemma, _ = _split(res.rows)
    bad = [r for r in lemma if not r.ok]
    cases = len({(r.trial, r.case) for r in lemma})
    criterion(1, "QEUE lemma suite", not bad and elapsed <= 300 and res.trials == 50,
              f"{len(lemma)} checks over {cases} (matrix, delta, eps) cases, {len(bad)} violations, {elapsed:.1f}s")


def test_criterion_02_qere_lemmas(qere_suite, criterion):
    res, elapsed = qere_suite
    lemma, _ = _split(res.rows)
    bad = [r for r in lemma if not r.ok]
    criterion(2, "QERE lemma suite", not bad and res.trials == 50,
              f"{len(lemma)} checks, {len(bad)} violations, {elapsed:.1f}s")


def test_criterion_03_discretization(qeue_suite, qere_suite, criterion):
    rows = _split(qeue_suite[0].rows)[1] + _split(qere_suite[0].rows)[1]
    bad = [r for r in rows if not r.ok]
    worst = max(r.measured / r.bound for r in rows)
    criterion(3, "discretization error", not bad and len(rows) > 0,
              f"{len(rows)} checks, {len(bad)} violations, worst measured/bound {worst:.3g}")


def test_criterion_04_solver_oracle(criterion):
    res, elapsed = _timed(run_suite, "solver-oracle", 100, 0)
    worst = max(r.measured for r in res.rows)
    criterion(4, "direct vs analytic solves", res.passed and len(res.rows) == 100 and elapsed <= 120,
              f"100 systems, max relative difference {worst:.2e}, {elapsed:.1f}s")


def test_criterion_05_kreiss(criterion):
    res, elapsed = _timed(run_suite, "kreiss", 200, 0)
    jordan = [r for r in res.rows if r.quantity == "K_circle<=jordan_bound"]
    nil = [r for r in res.rows if r.case.startswith("nilpotent_circle")]
    normal = [r for r in res.rows if r.case.startswith("normal")]
    ok = res.passed and len(jordan) == 200 and len(nil) == 1 and normal
    criterion(5, "Kreiss constants", bool(ok),
              f"{len(jordan)} bound checks, {len(normal)} normal checks, nilpotent error {nil[0].measured:.1e}, "
              f"{len(res.violations)} violations, {elapsed:.1f}s")


def test_criterion_06_end_to_end_qeue(criterion):
    start = time.perf_counter()
    # grid-aligned eigenphase
    gm = generate(JordanSpec(((1j, 1),), 1.0, 0))
    cfg = select_parameters(QEUE, 0.1, 0.1, 1.0, gm.alpha, FEASIBLE, delta=0.001, a=12)
    psi, _ = input_state(gm, [1])
    rs = resolvent_state(build_system(gm, cfg.discretized(), QEUE), psi)
    rep = readout(rs, cfg, 1000, 0)
    aligned = rep.modal[0]["j"] == 1024 and np.angle(rep.modal[0]["value"]) == math.pi / 2

    # random off-grid phases: two unimodular eigenvalues and an interior distractor
    rng = np.random.default_rng(6)
    worst_err, worst_fail = 0.0, 0.0
    for trial in range(3):
        while True:
            th = rng.uniform(0, 2 * math.pi, 2)
            lams = np.exp(1j * th)
            if abs(np.angle(lams[0] / lams[1])) > 0.5:
                break
        spec = JordanSpec(((lams[0], 1), (lams[1], 1), (0.3 * rng.standard_normal() + 0.1j, 1)), 1.0, trial,
                          targets=(0, 1))
        gm = generate(spec)
        assert validate_exclusion(gm, QEUE, 0.1)
        cfg = select_parameters(QEUE, 0.1, 0.1, gm.kappa_S, gm.alpha, FEASIBLE, delta=1e-3, a=20)
        rep = run_pipeline(gm, cfg, [1, 1], n_samples=10_000, seed=trial, certificate=False, cost=False)
        for l, lam in enumerate(lams):
            worst_err = max(worst_err, abs(np.angle(rep.modal_value(l) / lam)))
        worst_fail = max(worst_fail, rep.empirical_failure)
    elapsed = time.perf_counter() - start
    ok = aligned and worst_err <= 0.1 and worst_fail <= 0.03 and elapsed <= 60
    criterion(6, "end-to-end QEUE", ok,
              f"grid-aligned pi/2 exact={aligned}, max phase error {worst_err:.2e}, "
              f"max empirical failure {worst_fail:.4f} (10^4 samples, delta=1e-3, a=20), {elapsed:.1f}s")


def test_criterion_07_end_to_end_qere(criterion):
    reals = [0.6, -0.4, 0.15, -0.75]
    blocks = ((0.6, 1), (-0.4, 1), (0.15, 2), (-0.75, 2), (0.3 - 0.2j, 1), (-0.3 - 0.2j, 1))
    gm = generate(JordanSpec(blocks, 10.0, 3, targets=(0, 1, 2, 3)))
    assert gm.dim == 8 and validate_exclusion(gm, QERE, 0.1)
    cfg = select_parameters(QERE, 0.1, 0.1, gm.kappa_S, gm.alpha, FEASIBLE)
    rep = run_pipeline(gm, cfg, np.ones(4), n_samples=4000, seed=1, certificate=False, cost=False)
    est_err = max(abs(rep.modal_value(l) - lam) for l, lam in enumerate(reals))
    base_gap = max(abs(baseline_expectation(gm, l) - rep.modal_value(l).real) for l in range(4))
    criterion(7, "end-to-end QERE", est_err <= 0.1 and base_gap <= 0.1,
              f"8x8 cond(T)=10, a={cfg.a}, max |estimate - lambda| {est_err:.2e}, "
              f"max |baseline - estimate| {base_gap:.2e}")


def test_criterion_08_propagation_and_normalization(criterion):
    prop = run_suite("propagation", 100, 0)
    norm = run_suite("normalized-error", 100, 0)
    ok = prop.passed and norm.passed and prop.trials == 100 and norm.trials == 100
    criterion(8, "propagation and normalized-error", ok,
              f"{len(prop.rows)} + {len(norm.rows)} checks, {len(prop.violations) + len(norm.violations)} violations")


def test_criterion_09_parameter_formulas(criterion):
    strict = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, STRICT)
    feas = select_parameters(QEUE, 0.1, 0.1, 1.0, 1.0, FEASIBLE, delta=0.025)
    ok = float(f"{strict.delta:.5g}") == 1.4815e-6 and feas.a == 17
    criterion(9, "parameter formulas", ok, f"strict delta {strict.delta:.5g}, feasible a {feas.a}")


def test_criterion_10_curve_families(criterion):
    circle = check_conditions(get_family("circle"))
    eight = check_conditions(get_family("figure_eight"))
    hits = 0
    rng = np.random.default_rng(10)
    for trial in range(20):
        lam = 0.7 * np.exp(1j * rng.uniform(0, 2 * math.pi))
        other = rng.uniform(0.05, 0.3) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        gm = generate(JordanSpec(((lam, 1), (other, 1)), float(rng.uniform(1, 5)), trial, targets=(0,)))
        res = radial_search(gm, 0.5, 0.9, 0.1, 0.1, 0.01, 12, n_samples=100, seed=trial)
        hits += res.best_radius is not None and abs(res.best_radius - 0.7) < 1e-12
    ok = (circle.passed and abs(circle.cond3_fitted_exponent - 2.0) <= 0.2
          and not eight.cond1_pass and hits == 20)
    criterion(10, "curve-family conformance", ok,
              f"circle passed={circle.passed} exponent {circle.cond3_fitted_exponent:.3f}; "
              f"figure-eight cond1 deviation {eight.cond1_max_rel_deviation:.3f} (fails); radial {hits}/20")
